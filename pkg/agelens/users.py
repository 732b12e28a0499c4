# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Per-user linear models of the target age over calendar time."""

from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import csv
import io
from collections import defaultdict
from enum import Enum

import numpy as np

from . import core
from .core import AgeMention
from .items import tukey_fences
from .json import RecordSerializer, dump_json, load_json

class Variant(Enum):
    POSSESSIVE = "possessive"
    ALL_TERMS = "all-terms"

MIN_TERMS = 4
FALLBACK_SLOPE, FALLBACK_INTERCEPT = 1.0, 0.0

class UserAgeModel(NamedTuple):
    user_id: str
    variant: Variant
    t0: int
    a0: float
    slope: float
    intercept: float
    n_points: int
    residual_rms: float
    fallback: bool = False

class LinearFit(NamedTuple):
    slope: float
    intercept: float
    residual_rms: float

Point = Tuple[int, float]
ModelKey = Tuple[str, Variant]

def _order(m: AgeMention):
    return (m.day, m.review_id, m.position)

def collect_user_mentions(user_id, mentions: Iterable[AgeMention]) \
        -> Tuple[List[Point], List[Point]]:
    """Split `user_id`'s mentions into possessive and general ``(day, years)`` streams.

    >>> from .core import AgeMention as M
    >>> ms = [M("b", "u", "i", 10, 5, 1.0, "year", False),
    ...       M("a", "u", "i", 10, 5, 0.5, "months", True),
    ...       M("c", "u", "j", 3, 4, 0.25, "weeks", False),
    ...       M("d", "v", "j", 3, 4, 2.0, "years", True)]
    >>> collect_user_mentions("u", ms)
    ([(10, 0.5)], [(3, 0.25), (10, 1.0)])
    """
    poss: List[Point] = []
    general: List[Point] = []
    for m in sorted((m for m in mentions if m.user_id == user_id), key=_order):
        (poss if m.possessive else general).append((m.day, m.value_years))
    return poss, general

def age_time_normalization(stream: Sequence[Point]) -> List[Tuple[float, float]]:
    """Express each point as ``(years since first point, age gain since first point)``.

    >>> age_time_normalization([(0, 0.5), (1461, 4.5)])
    [(0.0, 0.0), (4.0, 4.0)]
    >>> age_time_normalization([])
    []
    """
    if not stream:
        return []
    day0, age0 = stream[0]
    return [(core.years_between(day0, day), age - age0) for day, age in stream]

def fit_linear(pairs: Sequence[Tuple[float, float]]) -> LinearFit:
    """Ordinary least squares line through `pairs`.

    >>> fit_linear([(0, 0), (1, 1), (2, 2)])
    LinearFit(slope=1.0, intercept=0.0, residual_rms=0.0)
    >>> fit_linear([(0, 0), (0, 0.2)])
    Traceback (most recent call last):
    ...
    agelens.core.DegenerateFit: Cannot fit a line through 2 point(s) with 1 distinct time offset(s)
    """
    n_distinct = len({x for x, _ in pairs})
    if len(pairs) < 2 or n_distinct < 2:
        raise core.DegenerateFit(len(pairs), n_distinct)
    xy = np.asarray(pairs, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    dx, dy = x - x.mean(), y - y.mean()
    slope = float(dx @ dy / (dx @ dx))
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (intercept + slope * x)
    return LinearFit(slope, intercept, float(np.sqrt(np.mean(residuals ** 2))))

def _drop_outliers(stream: List[Point]) -> List[Point]:
    lo, hi = tukey_fences([age for _, age in stream])
    return [(day, age) for day, age in stream if lo <= age <= hi]

def fit_user(user_id, variant: Variant, stream: List[Point], user_tukey=False) -> UserAgeModel:
    if user_tukey:
        stream = _drop_outliers(stream)
    day0, age0 = stream[0]
    try:
        fit = fit_linear(age_time_normalization(stream))
        fallback = False
    except core.DegenerateFit:
        fit = LinearFit(FALLBACK_SLOPE, FALLBACK_INTERCEPT, 0.0)
        fallback = True
    return UserAgeModel(user_id, variant, day0, age0, fit.slope, fit.intercept,
                        len(stream), fit.residual_rms, fallback)

def build_user_models(mentions: Iterable[AgeMention], k=MIN_TERMS, user_tukey=False,
                      threads=1) -> Dict[ModelKey, UserAgeModel]:
    """Fit one model per user and variant for every stream of at least `k` terms."""
    if k < 1:
        raise core.ConfigError("k", "expecting a count >= 1, not {}".format(k))
    streams: Dict[ModelKey, List[Point]] = defaultdict(list)
    for m in sorted(mentions, key=lambda m: (m.user_id,) + _order(m)):
        variant = Variant.POSSESSIVE if m.possessive else Variant.ALL_TERMS
        streams[(m.user_id, variant)].append((m.day, m.value_years))

    keys = sorted((key for key, s in streams.items() if len(s) >= k),
                  key=lambda key: (key[0], key[1].value))
    models = core.parallel_map(lambda key: fit_user(key[0], key[1], streams[key], user_tukey),
                               keys, threads)
    n_fallback = sum(m.fallback for m in models)
    if n_fallback:
        core.notify("{} of {} user model(s) fell back to slope {}".format(
            n_fallback, len(models), FALLBACK_SLOPE), level=core.LEVELS["info"])
    return {(m.user_id, m.variant): m for m in models}

def target_age(model: UserAgeModel, day) -> float:
    """Predicted age (years) of `model`'s target person on `day`, never negative.

    >>> m = UserAgeModel("u", Variant.POSSESSIVE, 0, 0.5, 1.0, 0.0, 4, 0.0)
    >>> target_age(m, 1461), target_age(m, 0), target_age(m, -1461)
    (4.5, 0.5, 0.0)
    """
    age = model.a0 + model.intercept + model.slope * core.years_between(model.t0, day)
    return max(0.0, age)

AUTO = "auto"
PREFERENCES = (AUTO, Variant.POSSESSIVE.value, Variant.ALL_TERMS.value)

def select_model(models: Dict[ModelKey, UserAgeModel], user_id,
                 prefer=AUTO) -> Optional[UserAgeModel]:
    """Pick the model used for `user_id` at recommendation time.

    ``auto`` uses the possessive model when there is one and the all-terms
    model otherwise; naming a variant restricts the choice to that variant.
    """
    if prefer == AUTO:
        return (models.get((user_id, Variant.POSSESSIVE))
                or models.get((user_id, Variant.ALL_TERMS)))
    if prefer not in PREFERENCES:
        raise core.ConfigError("prefer", "expecting one of {}, not {!r}".format(
            ", ".join(PREFERENCES), prefer))
    return models.get((user_id, Variant(prefer)))

class RegressionPoint(NamedTuple):
    dt_years: float
    dage_years: float
    fitted: float

def regression_dump(mentions: Iterable[AgeMention], user_id,
                    variant=Variant.POSSESSIVE) -> List[RegressionPoint]:
    """Normalized points of one user stream, each with the fitted line's value."""
    poss, general = collect_user_mentions(user_id, mentions)
    pairs = age_time_normalization(poss if variant is Variant.POSSESSIVE else general)
    try:
        fit = fit_linear(pairs)
    except core.DegenerateFit:
        fit = LinearFit(FALLBACK_SLOPE, FALLBACK_INTERCEPT, 0.0)
    return [RegressionPoint(dt, dage, fit.intercept + fit.slope * dt) for dt, dage in pairs]

def format_regression_csv(points: Iterable[RegressionPoint]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RegressionPoint._fields)
    writer.writerows((repr(p.dt_years), repr(p.dage_years), repr(p.fitted)) for p in points)
    return out.getvalue()

def dump_models(models: Dict[ModelKey, UserAgeModel], fpath):
    dump_json([models[k] for k in sorted(models, key=lambda k: (k[0], k[1].value))], fpath)

def load_models(fpath) -> Dict[ModelKey, UserAgeModel]:
    records = (RecordSerializer.decode(UserAgeModel, js) for js in load_json(fpath))
    return {(m.user_id, m.variant): m for m in records}
