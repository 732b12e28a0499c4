# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Shared records, date arithmetic, errors, and diagnostics."""

from typing import Any, Callable, Iterable, List, NamedTuple, Optional, TypeVar

from concurrent.futures import ThreadPoolExecutor
from datetime import date, timedelta
import json
import re
import sys
import textwrap

DEBUG = False
TRACEBACK = False

DAYS_PER_YEAR = 365.25
EPOCH = date(1970, 1, 1)
SECONDS_PER_DAY = 86400

def indent(text, prefix):
    if prefix.isspace():
        return textwrap.indent(text, prefix)
    text = re.sub("^(?!$)", prefix, text, flags=re.MULTILINE)
    return re.sub("^$", prefix.rstrip(), text, flags=re.MULTILINE)

def debug(text, prefix):
    if DEBUG:
        print(indent(str(text).rstrip(), prefix), file=sys.stderr, flush=True)

# Errors
# ======

class AgeLensError(ValueError):
    MSG = "{}"
    EXIT_CODE = 2

    def __str__(self):
        return self.MSG.format(*self.args)

    def as_json(self):
        return json.dumps({"error": type(self).__name__,
                           "exit_code": self.EXIT_CODE,
                           "message": str(self)}, sort_keys=True)

class ConfigError(AgeLensError):
    MSG = "Invalid configuration: {}: {}"
    EXIT_CODE = 1

class DataError(AgeLensError):
    MSG = "{}: {}"

class EmptyCorpusError(DataError):
    MSG = "{}: no parseable records ({} malformed lines skipped)"

class LeakageError(DataError):
    MSG = "Mention {} of user {} does not come from a training-side review"

class PhraseError(AgeLensError):
    MSG = "Cannot parse numeric expression {!r}"

class DegenerateFit(AgeLensError):
    MSG = "Cannot fit a line through {} point(s) with {} distinct time offset(s)"

# Dates
# =====

def day_of_timestamp(seconds):
    """Convert a unix timestamp to a whole day number (days since 1970-01-01).

    >>> day_of_timestamp(1357516800)
    15712
    >>> date_of_day(15712)
    datetime.date(2013, 1, 7)
    """
    return int(seconds) // SECONDS_PER_DAY

def date_of_day(day):
    return EPOCH + timedelta(days=int(day))

def day_of_date(d):
    return (d - EPOCH).days

def parse_day(s):
    """Parse ``YYYY-MM-DD`` into a day number.

    >>> parse_day("2013-01-07")
    15712
    """
    try:
        return day_of_date(date.fromisoformat(s))
    except ValueError as e:
        raise ConfigError("date", "expecting YYYY-MM-DD, not {!r}".format(s)) from e

def format_day(day):
    return date_of_day(day).isoformat()

def years_between(day0, day1):
    """Signed difference ``day1 - day0`` in years of 365.25 days."""
    return (day1 - day0) / DAYS_PER_YEAR

def month_bucket(day):
    return date_of_day(day).strftime("%Y-%m")

# Records
# =======

class ReviewRecord(NamedTuple):
    review_id: str
    user_id: str
    item_id: str
    rating: int
    day: int
    text: str
    summary: str

class Rating(NamedTuple):
    user_id: str
    item_id: str
    rating: int
    day: int

class AgeMention(NamedTuple):
    review_id: str
    user_id: str
    item_id: str
    day: int
    rating: int
    value_years: float
    unit_raw: str
    possessive: bool
    position: int = 0

def mention_order(m: AgeMention):
    return (m.review_id, m.position)

# Diagnostics
# ===========

LEVELS = {"debug": 0, "info": 1, "warning": 2, "error": 3}
LEVEL_NAMES = {v: k.upper() for k, v in LEVELS.items()}

class Notification(NamedTuple):
    obj: Any
    message: str
    location: Optional[str]
    level: int

class Observer:
    def _notify(self, n: Notification):
        raise NotImplementedError()

    def notify(self, obj, message, location=None, level=1):
        self._notify(Notification(obj, message, location, level))

class StderrObserver(Observer):
    def __init__(self, min_level=LEVELS["warning"]):
        self.min_level = min_level
        self.max_level = 0

    def _notify(self, n: Notification):
        self.max_level = max(self.max_level, n.level)
        if n.level < self.min_level:
            return
        header = "{}:".format(n.location) if n.location else "!!"
        message = n.message.rstrip().replace("\n", "\n   ")
        level_name = LEVEL_NAMES.get(n.level, "??")
        sys.stderr.write("{} ({}/{}) {}\n".format(header, level_name, n.level, message))

class CollectingObserver(Observer):
    def __init__(self):
        self.notifications: List[Notification] = []

    def _notify(self, n: Notification):
        self.notifications.append(n)

OBSERVER: Observer = StderrObserver()

def notify(message, level=LEVELS["info"], location=None, obj=None):
    OBSERVER.notify(obj, message, location, level)

# Parallelism
# ===========

T = TypeVar("T")
R = TypeVar("R")

def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads=1) -> List[R]:
    """Apply `fn` to `items`, returning results in input order.

    >>> parallel_map(abs, [-1, 2, -3], threads=2)
    [1, 2, 3]
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
