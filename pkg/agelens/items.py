# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Target age ranges of items, estimated from the age mentions of their reviews."""

from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from collections import defaultdict
from enum import Enum

import numpy as np

from . import core
from .core import AgeMention
from .corpus import ITEM, filter_min_mentions

class Strategy(Enum):
    ALL = "all"
    RATING = "rating"
    POSSESSIVE = "poss"
    RATING_POSSESSIVE = "rating-poss"

NO_FALLBACK = "none"

def strategy_of(name) -> Optional[Strategy]:
    """Parse a strategy name; ``none`` means no strategy.

    >>> strategy_of("rating-poss"), strategy_of("none")
    (<Strategy.RATING_POSSESSIVE: 'rating-poss'>, None)
    """
    return None if name in (None, NO_FALLBACK) else Strategy(name)

POSITIVE_RATING = 3
P_LOW, P_HIGH, FENCE_K = 0.05, 0.95, 1.5
MIN_REVIEWS = 4

class ItemAgeProfile(NamedTuple):
    item_id: str
    strategy: Strategy
    low_years: float
    high_years: float
    n_used: int
    n_removed: int

    def contains(self, age_years):
        return self.low_years <= age_years <= self.high_years

    @property
    def midpoint(self):
        return (self.low_years + self.high_years) / 2

def _keep(m: AgeMention, strategy: Strategy):
    if strategy is Strategy.ALL:
        return True
    if strategy is Strategy.RATING:
        return m.rating > POSITIVE_RATING
    if strategy is Strategy.POSSESSIVE:
        return m.possessive
    return m.rating > POSITIVE_RATING and m.possessive

def select_mentions(mentions: Iterable[AgeMention], strategy: Strategy) -> List[float]:
    """Pick the mention values (in years) that `strategy` trusts.

    >>> from .core import AgeMention as M
    >>> ms = [M("a", "u", "i", 0, 5, 2.0, "years", True),
    ...       M("b", "v", "i", 0, 2, 1.0, "year", False)]
    >>> [select_mentions(ms, s) for s in Strategy]
    [[2.0, 1.0], [2.0], [2.0], [2.0]]
    """
    return [m.value_years for m in mentions if _keep(m, strategy)]

def percentile(values: Sequence[float], p: float) -> float:
    """Percentile of `values` with linear interpolation between closest ranks.

    >>> percentile([1.0, 2.0, 3.0, 4.0], 0.5)
    2.5
    """
    return float(np.quantile(np.asarray(values, dtype=float), p, method="linear"))

def tukey_fences(values: Sequence[float], p_low=P_LOW, p_high=P_HIGH,
                 fence_k=FENCE_K) -> Tuple[float, float]:
    low, high = percentile(values, p_low), percentile(values, p_high)
    spread = high - low
    return low - fence_k * spread, high + fence_k * spread

def tukey_filter(values: Sequence[float], p_low=P_LOW, p_high=P_HIGH,
                 fence_k=FENCE_K) -> List[float]:
    """Drop values outside Tukey fences built on the `p_low`/`p_high` percentiles.

    >>> tukey_filter([0.1] * 18 + [0.2, 12.0])
    [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2]
    >>> tukey_filter([0.5, 0.5, 0.5])
    [0.5, 0.5, 0.5]
    """
    if not values:
        return []
    lo, hi = tukey_fences(values, p_low, p_high, fence_k)
    return [v for v in values if lo <= v <= hi]

def target_age_range(retained: Sequence[float]) -> Optional[Tuple[float, float]]:
    """``(min, max)`` of `retained`, or ``None`` when there is nothing to profile.

    >>> target_age_range([0.33, 0.5, 0.75]), target_age_range([])
    ((0.33, 0.75), None)
    """
    if not retained:
        return None
    return min(retained), max(retained)

def profile_item(item_id, mentions: Sequence[AgeMention], strategy: Strategy,
                 p_low=P_LOW, p_high=P_HIGH, fence_k=FENCE_K) -> Optional[ItemAgeProfile]:
    values = select_mentions(mentions, strategy)
    retained = tukey_filter(values, p_low, p_high, fence_k)
    bounds = target_age_range(retained)
    if bounds is None:
        return None
    return ItemAgeProfile(item_id, strategy, bounds[0], bounds[1],
                          len(retained), len(values) - len(retained))

def _by_item(mentions: Iterable[AgeMention]) -> Dict[str, List[AgeMention]]:
    grouped: Dict[str, List[AgeMention]] = defaultdict(list)
    for m in sorted(mentions, key=core.mention_order):
        grouped[m.item_id].append(m)
    return grouped

def profile_items(mentions: Iterable[AgeMention], strategy: Strategy,
                  min_reviews=MIN_REVIEWS, p_low=P_LOW, p_high=P_HIGH, fence_k=FENCE_K,
                  fallback: Optional[Strategy] = None, threads=1) -> Dict[str, ItemAgeProfile]:
    """Profile every item with at least `min_reviews` mention-bearing reviews.

    Items whose `strategy` subset is empty are skipped, unless `fallback`
    names a second strategy to try; the emitted profile records the strategy
    that produced it.
    """
    grouped = _by_item(mentions)
    eligible = sorted(filter_min_mentions(grouped.keys(), (m for ms in grouped.values() for m in ms),
                                          min_reviews, ITEM))

    def _profile(item_id):
        ms = grouped[item_id]
        profile = profile_item(item_id, ms, strategy, p_low, p_high, fence_k)
        if profile is None and fallback is not None:
            profile = profile_item(item_id, ms, fallback, p_low, p_high, fence_k)
        return profile

    profiles = core.parallel_map(_profile, eligible, threads)
    return {p.item_id: p for p in profiles if p is not None}

def profile_all_strategies(mentions: Iterable[AgeMention], min_reviews=MIN_REVIEWS,
                           **kwargs) -> Dict[Strategy, Dict[str, ItemAgeProfile]]:
    mentions = list(mentions)
    return {s: profile_items(mentions, s, min_reviews, **kwargs) for s in Strategy}

def dump_profiles(profiles: Dict[str, ItemAgeProfile], fpath):
    from .json import dump_json
    dump_json([profiles[k] for k in sorted(profiles)], fpath)

def load_profiles(fpath) -> Dict[str, ItemAgeProfile]:
    from .json import load_json, RecordSerializer
    records = (RecordSerializer.decode(ItemAgeProfile, js) for js in load_json(fpath))
    return {p.item_id: p for p in records}
