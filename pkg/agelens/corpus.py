# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Review ingestion, corpus statistics, and minimum-activity filters."""

from typing import Collection, Dict, Iterable, Iterator, List, NamedTuple, Optional, Set

import csv
import json
from collections import Counter, defaultdict
from fractions import Fraction

from . import core
from .core import AgeMention, Rating, ReviewRecord
from .json import decode_line, open_text

# Reviews
# =======

AMAZON_FIELDS = ("reviewerID", "asin", "overall", "unixReviewTime", "reviewText", "summary")

def review_of_json(js, review_id):
    """Map one Amazon review object to a `ReviewRecord`.

    >>> review_of_json({"reviewerID": "A1", "asin": "B001", "overall": 5.0,
    ...                 "unixReviewTime": 1357516800, "reviewText": "Fine.",
    ...                 "summary": "ok"}, "r1")
    ReviewRecord(review_id='r1', user_id='A1', item_id='B001', rating=5, day=15712, text='Fine.', summary='ok')
    """
    rating = js["overall"]
    if isinstance(rating, bool) or not isinstance(rating, (int, float)) \
       or rating != int(rating) or not 1 <= rating <= 5:
        raise ValueError("rating out of range: {!r}".format(rating))
    seconds = js["unixReviewTime"]
    if isinstance(seconds, bool) or not isinstance(seconds, (int, float)) or seconds < 0:
        raise ValueError("invalid timestamp: {!r}".format(seconds))
    user_id, item_id = js["reviewerID"], js["asin"]
    if not isinstance(user_id, str) or not isinstance(item_id, str):
        raise ValueError("ids must be strings")
    return ReviewRecord(review_id=str(js.get("reviewID", review_id)),
                        user_id=user_id, item_id=item_id,
                        rating=int(rating), day=core.day_of_timestamp(seconds),
                        text=str(js.get("reviewText") or ""),
                        summary=str(js.get("summary") or ""))

def json_of_review(review: ReviewRecord):
    return {"reviewID": review.review_id,
            "reviewerID": review.user_id, "asin": review.item_id,
            "overall": review.rating,
            "unixReviewTime": review.day * core.SECONDS_PER_DAY,
            "reviewText": review.text, "summary": review.summary}

class ReviewReader:
    """Stream `ReviewRecord` objects out of a JSON-lines review dump.

    Malformed lines, including lines that are not valid UTF-8, are skipped and
    counted in ``skipped``.  Reviews without an
    explicit ``reviewID`` are numbered by line (``L<line>``), which keeps
    ids unique within a file.  Duplicate ids are treated as malformed.
    """

    def __init__(self, fpath, observer: Optional[core.Observer] = None):
        self.fpath = fpath
        self.observer = observer or core.OBSERVER
        self.skipped = 0
        self.read = 0

    def _warn(self, lineno, reason):
        self.skipped += 1
        location = "{}:{}".format(self.fpath, lineno)
        self.observer.notify(None, "Skipping malformed review ({})".format(reason),
                             location, level=core.LEVELS["debug"])

    def __iter__(self) -> Iterator[ReviewRecord]:
        seen: Set[str] = set()
        with open_text(self.fpath, "rt", errors="surrogateescape") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    review = review_of_json(json.loads(decode_line(line)), "L{}".format(lineno))
                except (ValueError, KeyError, TypeError, AttributeError) as e:
                    self._warn(lineno, e)
                    continue
                if review.review_id in seen:
                    self._warn(lineno, "duplicate review id {}".format(review.review_id))
                    continue
                seen.add(review.review_id)
                self.read += 1
                yield review
        if self.skipped:
            MSG = "Skipped {} malformed line(s)"
            self.observer.notify(None, MSG.format(self.skipped), str(self.fpath),
                                 level=core.LEVELS["warning"])
        if self.read == 0:
            raise core.EmptyCorpusError(self.fpath, self.skipped)

def load_reviews(fpath, observer=None) -> Iterator[ReviewRecord]:
    return iter(ReviewReader(fpath, observer))

def dump_reviews(reviews: Iterable[ReviewRecord], fpath):
    with open_text(fpath, "wt") as f:
        for review in reviews:
            f.write(json.dumps(json_of_review(review), ensure_ascii=False))
            f.write("\n")

def load_titles(fpath) -> Dict[str, str]:
    """Read the optional ``{"asin": ..., "title": ...}`` sidecar."""
    titles = {}
    with open_text(fpath, "rt", errors="surrogateescape") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                js = json.loads(decode_line(line))
                titles[str(js["asin"])] = str(js["title"])
            except (ValueError, KeyError, TypeError) as e:
                raise core.DataError("{}:{}".format(fpath, lineno),
                                     "malformed title record ({})".format(e)) from e
    return titles

def dump_titles(titles: Dict[str, str], fpath):
    with open_text(fpath, "wt") as f:
        for asin in sorted(titles):
            f.write(json.dumps({"asin": asin, "title": titles[asin]}, ensure_ascii=False))
            f.write("\n")

# Ratings
# =======

RATING_FIELDS = ("user_id", "item_id", "rating", "timestamp")

def ratings_of_reviews(reviews: Iterable[ReviewRecord]) -> List[Rating]:
    return [Rating(r.user_id, r.item_id, r.rating, r.day) for r in reviews]

def load_ratings(fpath) -> List[Rating]:
    """Read a ``user_id,item_id,rating,timestamp`` CSV (timestamps in seconds)."""
    ratings = []
    with open_text(fpath, "rt", errors="surrogateescape") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0] == RATING_FIELDS[0]:
                continue
            try:
                user_id, item_id, rating, seconds = [decode_line(x) for x in row]
                value = int(float(rating))
                if not 1 <= value <= 5:
                    raise ValueError(rating)
                ratings.append(Rating(user_id, item_id, value,
                                      core.day_of_timestamp(float(seconds))))
            except ValueError as e:
                raise core.DataError("{}:{}".format(fpath, lineno),
                                     "malformed rating row {!r}".format(row)) from e
    if not ratings:
        raise core.EmptyCorpusError(fpath, 0)
    return ratings

def dump_ratings(ratings: Iterable[Rating], fpath):
    with open_text(fpath, "wt") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RATING_FIELDS)
        for r in ratings:
            writer.writerow((r.user_id, r.item_id, r.rating, r.day * core.SECONDS_PER_DAY))

# Statistics
# ==========

class CorpusStats(NamedTuple):
    n_reviews: int
    n_items: int
    n_users: int
    n_users_with_possessives: int
    avg_reviews_per_item: float
    avg_terms_per_user: float
    avg_poss_terms_per_user: float
    n_mention_reviews: int = 0
    n_mention_users: int = 0
    n_mention_items: int = 0
    n_skipped_lines: int = 0

def _ratio(num, den):
    return float(Fraction(num, den)) if den else 0.0

def corpus_stats(reviews: Iterable[ReviewRecord], mentions: Collection[AgeMention],
                 skipped=0) -> CorpusStats:
    """Count reviews, items, users, and age mentions.

    Per-user averages divide by the number of distinct users in the corpus.

    >>> from .core import ReviewRecord as R
    >>> rs = [R(str(n), "u{}".format(n % 2), "i{}".format(n < 3), 5, 0, "", "")
    ...       for n in range(8)]
    >>> corpus_stats(rs, []).avg_reviews_per_item
    4.0
    """
    review_ids: Set[str] = set()
    users: Set[str] = set()
    reviews_per_item: Counter = Counter()
    for r in reviews:
        review_ids.add(r.review_id)
        users.add(r.user_id)
        reviews_per_item[r.item_id] += 1

    poss_users = {m.user_id for m in mentions if m.possessive}
    n_poss = sum(1 for m in mentions if m.possessive)
    n_users = len(users)
    return CorpusStats(
        n_reviews=len(review_ids),
        n_items=len(reviews_per_item),
        n_users=n_users,
        n_users_with_possessives=len(poss_users & users) if users else 0,
        avg_reviews_per_item=_ratio(sum(reviews_per_item.values()), len(reviews_per_item)),
        avg_terms_per_user=_ratio(len(mentions), n_users),
        avg_poss_terms_per_user=_ratio(n_poss, n_users),
        n_mention_reviews=len({m.review_id for m in mentions}),
        n_mention_users=len({m.user_id for m in mentions}),
        n_mention_items=len({m.item_id for m in mentions}),
        n_skipped_lines=skipped)

# Activity filters
# ================

ITEM, USER = "item", "user"

def mention_counts(mentions: Iterable[AgeMention], by: str) -> Dict[str, int]:
    """Count mentions per entity.

    Items count distinct mention-bearing reviews; users count mention terms.
    """
    if by == ITEM:
        reviews = defaultdict(set)
        for m in mentions:
            reviews[m.item_id].add(m.review_id)
        return {k: len(v) for k, v in reviews.items()}
    if by == USER:
        return dict(Counter(m.user_id for m in mentions))
    raise ValueError("Unknown entity kind: {!r}".format(by))

def filter_min_mentions(entities: Optional[Iterable[str]], mentions: Iterable[AgeMention],
                        k: int, by: str) -> Set[str]:
    """Return the ids in `entities` (all ids if ``None``) with at least `k` mentions.

    >>> from .core import AgeMention as M
    >>> ms = [M(str(n), "u", "i", 0, 5, 1.0, "year", False) for n in range(4)]
    >>> filter_min_mentions(None, ms, 4, USER), filter_min_mentions(None, ms[:3], 4, ITEM)
    ({'u'}, set())
    """
    if k < 1:
        raise core.ConfigError("k", "expecting a count >= 1, not {}".format(k))
    counts = mention_counts(mentions, by)
    candidates = counts.keys() if entities is None else set(entities)
    return {e for e in candidates if counts.get(e, 0) >= k}
