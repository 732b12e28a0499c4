# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Temporal evaluation of the recommenders, with and without age post-filtering."""

from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import csv
import io
import math
import sys
from collections import defaultdict
from fractions import Fraction
from os import path

from . import core
from .core import AgeMention, Rating
from .corpus import load_ratings, load_reviews, load_titles, ratings_of_reviews
from .extract import extract_corpus, load_lexicon
from .items import NO_FALLBACK, ItemAgeProfile, Strategy, profile_items, strategy_of
from .json import RecordSerializer, dumps, load_records, loads
from .recommend import (ENGINES, OUT_OF_RANGE, RatingMatrix, RecommendationList,
                        make_engine, post_filter)
from .users import PREFERENCES, build_user_models, select_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Temporal split
# ==============

class TemporalSplit(NamedTuple):
    train: List[Rating]
    test: List[Rating]
    cuts: Dict[str, int]
    train_fraction: float

def _n_train(count, train_fraction):
    return math.ceil(Fraction(train_fraction).limit_denominator(10 ** 6) * count)

def temporal_split(ratings: Iterable[Rating], train_fraction=0.8) -> TemporalSplit:
    """Hold out the latest ratings of each user.

    Each user's ratings are sorted by day (then item id); the first
    ``ceil(train_fraction * count)`` go to training.  Users with fewer than two
    ratings are kept entirely for training.  ``cuts`` maps each user with a
    test part to the day of their first test rating.

    >>> rs = [Rating("u", "i{}".format(n), 5, n) for n in range(10)]
    >>> split = temporal_split(rs + [Rating("v", "i0", 4, 0)])
    >>> len(split.train), len(split.test), split.cuts
    (9, 2, {'u': 8})
    """
    if not 0 < train_fraction < 1:
        raise core.ConfigError("train_fraction",
                               "expecting a value in (0, 1), not {}".format(train_fraction))
    by_user: Dict[str, List[Rating]] = defaultdict(list)
    for r in ratings:
        by_user[r.user_id].append(r)
    train, test, cuts = [], [], {}
    for user in sorted(by_user):
        rs = sorted(by_user[user], key=lambda r: (r.day, r.item_id, r.rating))
        k = len(rs) if len(rs) < 2 else _n_train(len(rs), train_fraction)
        train.extend(rs[:k])
        if k < len(rs):
            test.extend(rs[k:])
            cuts[user] = rs[k].day
    return TemporalSplit(train, test, cuts, train_fraction)

def train_side_mentions(mentions: Iterable[AgeMention], split: TemporalSplit) -> List[AgeMention]:
    keys = {(r.user_id, r.item_id, r.day) for r in split.train}
    return [m for m in mentions if (m.user_id, m.item_id, m.day) in keys]

def assert_no_leakage(mentions: Iterable[AgeMention], split: TemporalSplit):
    """Raise `LeakageError` unless every mention comes from a training-side review."""
    keys = {(r.user_id, r.item_id, r.day) for r in split.train}
    for m in mentions:
        cut = split.cuts.get(m.user_id)
        if (m.user_id, m.item_id, m.day) not in keys or (cut is not None and m.day > cut):
            raise core.LeakageError(m.review_id, m.user_id)

# Metrics
# =======

RELEVANCE_THRESHOLD = 3

def relevant_items(test: Iterable[Rating], threshold=RELEVANCE_THRESHOLD) -> Dict[str, Set[str]]:
    relevant: Dict[str, Set[str]] = defaultdict(set)
    for r in test:
        if r.rating > threshold:
            relevant[r.user_id].add(r.item_id)
    return relevant

def _hits(recs, relevant, n):
    return [item in relevant for item in recs[:n]]

def precision_at(recs: Sequence[str], relevant: Set[str], n=10) -> float:
    """Fraction of the top `n` slots holding a relevant item.

    >>> precision_at(["A", "B", "C"], {"A", "C"}, 3)
    0.6666666666666666
    """
    if not relevant:
        return 0.0
    return sum(_hits(recs, relevant, n)) / n

def recall_at(recs: Sequence[str], relevant: Set[str], n=10) -> float:
    if not relevant:
        return 0.0
    return sum(_hits(recs, relevant, n)) / len(relevant)

def map_at(recs: Sequence[str], relevant: Set[str], n=10) -> float:
    """Average precision at hit ranks, normalized by ``min(n, |relevant|)``.

    >>> abs(map_at(["A", "B", "C"], {"A", "C"}, 3) - 5 / 6) < 1e-12
    True
    """
    if not relevant:
        return 0.0
    total, found = 0.0, 0
    for rank, hit in enumerate(_hits(recs, relevant, n), start=1):
        if hit:
            found += 1
            total += found / rank
    return total / min(n, len(relevant))

def _discount(rank):
    return 1.0 / math.log2(rank + 1)

def ndcg_at(recs: Sequence[str], relevant: Set[str], n=10) -> float:
    """Binary-gain NDCG of the top `n` entries.

    >>> ndcg_at(["A", "B"], {"A", "B"}, 2)
    1.0
    """
    if not relevant:
        return 0.0
    dcg = sum(_discount(rank) for rank, hit in enumerate(_hits(recs, relevant, n), start=1)
              if hit)
    ideal = sum(_discount(rank) for rank in range(1, min(n, len(relevant)) + 1))
    return dcg / ideal

METRICS = {"ndcg": ndcg_at, "map": map_at, "precision": precision_at, "recall": recall_at}

# Drift
# =====

TEST = "test"

class DriftPoint(NamedTuple):
    bucket: str
    source: str
    delta_years: float
    n_users: int

def _mean_age(items: Iterable[str], ages: Dict[str, float]) -> Optional[float]:
    values = [ages[i] for i in items if i in ages]
    return math.fsum(values) / len(values) if values else None

def user_drifts(split: TemporalSplit, item_profiles: Dict[str, ItemAgeProfile],
                lists: Dict[str, Dict[str, RecommendationList]]) \
        -> Dict[str, List[Tuple[str, float]]]:
    """Per source, ``(user, Δ)`` pairs: mean later item age minus mean training item age."""
    ages = {item: p.midpoint for item, p in item_profiles.items()}
    train_items: Dict[str, List[str]] = defaultdict(list)
    test_items: Dict[str, List[str]] = defaultdict(list)
    for r in split.train:
        train_items[r.user_id].append(r.item_id)
    for r in split.test:
        test_items[r.user_id].append(r.item_id)

    deltas: Dict[str, List[Tuple[str, float]]] = defaultdict(list)
    for user in sorted(split.cuts):
        base = _mean_age(train_items[user], ages)
        if base is None:
            continue
        later = [(TEST, test_items[user])]
        later += [(source, lists[source][user].item_ids)
                  for source in sorted(lists) if user in lists[source]]
        for source, items in later:
            mean = _mean_age(items, ages)
            if mean is not None:
                deltas[source].append((user, mean - base))
    return deltas

def drift_series(split: TemporalSplit, item_profiles: Dict[str, ItemAgeProfile],
                 lists: Dict[str, Dict[str, RecommendationList]]) -> List[DriftPoint]:
    """Average drift per month of each user's split cut, for test items and every list source."""
    buckets: Dict[Tuple[str, str], List[float]] = defaultdict(list)
    for source, pairs in user_drifts(split, item_profiles, lists).items():
        for user, delta in pairs:
            buckets[(core.month_bucket(split.cuts[user]), source)].append(delta)
    return [DriftPoint(bucket, source, math.fsum(ds) / len(ds), len(ds))
            for (bucket, source), ds in sorted(buckets.items())]

def drift_summary(split, item_profiles, lists) -> Dict[str, float]:
    return {source: math.fsum(d for _, d in pairs) / len(pairs)
            for source, pairs in sorted(user_drifts(split, item_profiles, lists).items())
            if pairs}

def format_drift_csv(points: Iterable[DriftPoint]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("bucket", "source", "delta_years"))
    for p in points:
        writer.writerow((p.bucket, p.source, repr(p.delta_years)))
    return out.getvalue()

# Configuration
# =============

class PipelineConfig(NamedTuple):
    reviews: Optional[str] = None
    ratings: Optional[str] = None
    mentions: Optional[str] = None
    titles: Optional[str] = None
    lexicon: str = "builtin"
    engines: Tuple[str, ...] = ("ub-cf", "ib-cf", "mf-als")
    n: int = 10
    k: int = 4
    min_reviews: int = 4
    relevance: int = RELEVANCE_THRESHOLD
    neighborhood: int = 50
    oversample: int = 5
    literal_rows: bool = True
    train_fraction: float = 0.8
    p_low: float = 0.05
    p_high: float = 0.95
    fence_k: float = 1.5
    strategy: str = Strategy.RATING_POSSESSIVE.value
    fallback: Optional[str] = Strategy.ALL.value
    prefer: str = "auto"
    user_tukey: bool = False
    poss_window: int = 4
    max_years: float = 18.0
    factors: int = 20
    reg: float = 0.05
    sweeps: int = 15
    seed: int = 42
    examples: int = 10

PATH_FIELDS = ("reviews", "ratings", "mentions", "titles")
POSITIVE_FIELDS = ("n", "k", "min_reviews", "neighborhood", "oversample", "poss_window",
                   "factors", "sweeps", "max_years", "reg")
FRACTION_FIELDS = ("train_fraction", "p_low", "p_high")

def _check(cond, field, msg):
    if not cond:
        raise core.ConfigError(field, msg)

def validate_config(config: PipelineConfig) -> PipelineConfig:
    for field in POSITIVE_FIELDS:
        value = getattr(config, field)
        _check(isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0,
               field, "expecting a positive number, not {!r}".format(value))
    for field in FRACTION_FIELDS:
        value = getattr(config, field)
        _check(isinstance(value, (int, float)) and 0 < value < 1,
               field, "expecting a fraction in (0, 1), not {!r}".format(value))
    _check(config.p_low < config.p_high, "p_low", "expecting p_low < p_high")
    _check(config.fence_k >= 0, "fence_k", "expecting a non-negative multiplier")
    _check(1 <= config.relevance <= 5, "relevance", "expecting a rating in [1, 5]")
    _check(config.engines and all(e in ENGINES for e in config.engines),
           "engines", "expecting a subset of {}".format(", ".join(ENGINES)))
    strategies = [s.value for s in Strategy]
    _check(config.strategy in strategies, "strategy",
           "expecting one of {}".format(", ".join(strategies)))
    _check(config.fallback is None or config.fallback in strategies + [NO_FALLBACK], "fallback",
           "expecting one of {}".format(", ".join(strategies + [NO_FALLBACK])))
    _check(config.prefer in PREFERENCES, "prefer",
           "expecting one of {}".format(", ".join(PREFERENCES)))
    _check(config.reviews is not None or config.ratings is not None, "reviews",
           "expecting a review dump or a ratings file")
    _check(config.reviews is not None or config.mentions is not None, "mentions",
           "expecting a review dump or a mention file")
    return config

def config_of_dict(js: Dict[str, Any], base_dir=".") -> PipelineConfig:
    """Build a validated `PipelineConfig`, resolving paths against `base_dir`."""
    unknown = sorted(set(js) - set(PipelineConfig._fields))
    if unknown:
        raise core.ConfigError(unknown[0], "unknown key")
    js = dict(js)
    if "engines" in js:
        js["engines"] = tuple(js["engines"])
    for field in PATH_FIELDS:
        if js.get(field) is not None:
            js[field] = path.normpath(path.join(base_dir, js[field]))
    return validate_config(PipelineConfig(**js))

def load_config(fpath) -> PipelineConfig:
    """Read a TOML or JSON experiment configuration."""
    try:
        with open(fpath, encoding="utf-8") as f:
            contents = f.read()
    except OSError as e:
        raise core.ConfigError(fpath, e.strerror) from e
    except UnicodeDecodeError as e:
        raise core.ConfigError(fpath, str(e)) from e
    try:
        js = tomllib.loads(contents) if fpath.endswith(".toml") else loads(contents)
    except ValueError as e:
        raise core.ConfigError(fpath, str(e)) from e
    return config_of_dict(js, path.dirname(path.abspath(fpath)))

def echo_config(config: PipelineConfig) -> Dict[str, Any]:
    js = config._asdict()
    for field in PATH_FIELDS:
        if js[field] is not None:
            js[field] = path.basename(js[field])
    return js

# Experiment
# ==========

ENGINE_LABELS = {"ub-cf": "UB-CF", "ib-cf": "IB-CF", "mf-als": "MF-ALS"}

LABEL_NOTE = ("Rows are named after the engine that produced them: the post-filtered "
              "item-based row is IB-CF-PF (not a second UB-CF-PF), and the factorization "
              "engine is MF-ALS (not MF-SVD).")
LITERAL_NOTE = "Rows marked (m=1) filter the plain top-n list, so they may hold fewer than n items."

def row_label(engine, age_filter=False, oversample=None):
    label = ENGINE_LABELS[engine] + ("-PF" if age_filter else "")
    return label + (" (m=1)" if oversample == 1 else "")

class StrategyRow(NamedTuple):
    strategy: str
    engine: str
    post_filter: bool
    oversample: int
    ndcg: float
    map: float
    precision: float
    recall: float
    n_users: int
    n_unfiltered_users: int

class FilteredExample(NamedTuple):
    strategy: str
    user_id: str
    item_id: str
    title: Optional[str]
    low_months: float
    high_months: float
    predicted_age_months: float

class EvalReport(NamedTuple):
    n: int
    relevance_threshold: int
    config: Dict[str, Any]
    rows: List[StrategyRow]
    drift: List[DriftPoint]
    drift_summary: Dict[str, float]
    filtered_examples: List[FilteredExample]
    footnotes: List[str]

def _row(label, engine, age_filter, m, lists, relevant, n):
    users = sorted(lists)
    scores = {name: math.fsum(fn(lists[u].item_ids, relevant[u], n) for u in users)
              / max(len(users), 1) for name, fn in METRICS.items()}
    n_unfiltered = sum(1 for u in users if age_filter and lists[u].age_filter != "applied")
    return StrategyRow(label, engine, age_filter, m, scores["ndcg"], scores["map"],
                       scores["precision"], scores["recall"], len(users), n_unfiltered)

def _months(years):
    return round(years * 12, 2)

class ExperimentData(NamedTuple):
    ratings: List[Rating]
    mentions: List[AgeMention]
    titles: Dict[str, str]

def load_experiment_data(config: PipelineConfig, threads=1) -> ExperimentData:
    reviews = list(load_reviews(config.reviews)) if config.reviews else None
    if config.ratings:
        ratings = load_ratings(config.ratings)
    else:
        assert reviews is not None
        ratings = ratings_of_reviews(reviews)
    if config.mentions:
        mentions = list(load_records(AgeMention, config.mentions))
    else:
        assert reviews is not None
        mentions = extract_corpus(reviews, load_lexicon(config.lexicon),
                                  config.poss_window, config.max_years, threads)
    titles = load_titles(config.titles) if config.titles else {}
    return ExperimentData(ratings, mentions, titles)

def run_experiment(config: PipelineConfig, threads=1,
                   data: Optional[ExperimentData] = None) -> EvalReport:
    """Train every engine on the temporal training split and score its top-n lists.

    Each test user is served on their split cut day.  Item profiles and user
    models only see mentions from training-side reviews.  Post-filtered rows
    filter ``n * oversample`` candidates (and, with ``literal_rows``, the
    plain top-n list); since engine rankings are deterministic, a shorter
    candidate list is a prefix of a longer one.
    """
    data = data or load_experiment_data(config, threads)
    split = temporal_split(data.ratings, config.train_fraction)
    mentions = train_side_mentions(data.mentions, split)
    assert_no_leakage(mentions, split)

    fallback = strategy_of(config.fallback)
    profile_args = dict(min_reviews=config.min_reviews, p_low=config.p_low,
                        p_high=config.p_high, fence_k=config.fence_k, threads=threads)
    profiles = profile_items(mentions, Strategy(config.strategy), fallback=fallback,
                             **profile_args)
    drift_profiles = profile_items(mentions, Strategy.ALL, **profile_args)
    models = build_user_models(mentions, config.k, config.user_tukey, threads)
    core.notify("{} item profile(s), {} user model(s) from {} training mention(s)".format(
        len(profiles), len(models), len(mentions)))

    relevant = relevant_items(split.test, config.relevance)
    test_users = sorted(u for u in split.cuts if relevant.get(u))
    n, m = config.n, config.oversample

    rows: List[StrategyRow] = []
    lists: Dict[str, Dict[str, RecommendationList]] = {}
    examples: List[FilteredExample] = []
    matrix = RatingMatrix(split.train)
    test_users = [u for u in test_users if u in matrix.user_index]

    for engine_name in config.engines:
        params: Dict[str, Any] = {}
        if engine_name == "ub-cf":
            params = dict(k=config.neighborhood)
        elif engine_name == "mf-als":
            params = dict(factors=config.factors, reg=config.reg, sweeps=config.sweeps,
                          seed=config.seed, threads=threads)
        engine = make_engine(engine_name, matrix, **params)
        core.debug("Trained {}".format(engine_name), ">> ")

        def serve(user):
            day = split.cuts[user]
            candidates = RecommendationList(user, day, tuple(engine.top_n(user, n * m)))
            model = select_model(models, user, config.prefer)
            filtered = post_filter(candidates, model, profiles, day)
            literal = post_filter(candidates._replace(entries=candidates.entries[:n]),
                                  model, profiles, day)
            return (candidates._replace(entries=candidates.entries[:n]),
                    filtered._replace(entries=filtered.entries[:n]),
                    literal)

        served = dict(zip(test_users, core.parallel_map(serve, test_users, threads)))
        variants = [(row_label(engine_name), False, 1, 0),
                    (row_label(engine_name, True), True, m, 1)]
        if config.literal_rows:
            variants.append((row_label(engine_name, True, 1), True, 1, 2))
        for label, age_filter, mm, slot in variants:
            per_user = {u: served[u][slot] for u in test_users}
            lists[label] = per_user
            rows.append(_row(label, engine_name, age_filter, mm, per_user, relevant, n))

        pf_label = row_label(engine_name, True)
        for user in test_users:
            for v in lists[pf_label][user].verdicts:
                if v.reason == OUT_OF_RANGE:
                    examples.append(FilteredExample(
                        pf_label, user, v.item_id, data.titles.get(v.item_id),
                        _months(v.low_years), _months(v.high_years),
                        _months(v.predicted_age)))

    examples.sort(key=lambda e: (e.strategy, e.user_id, e.item_id))
    footnotes = [LABEL_NOTE] + ([LITERAL_NOTE] if config.literal_rows else [])
    return EvalReport(n, config.relevance, echo_config(config), rows,
                      drift_series(split, drift_profiles, lists),
                      drift_summary(split, drift_profiles, lists),
                      examples[:config.examples], footnotes)

def report_json(report: EvalReport) -> str:
    return dumps(RecordSerializer.encode(report))

def report_of_json(js) -> EvalReport:
    fields = dict(js)
    fields["rows"] = [RecordSerializer.decode(StrategyRow, r) for r in js["rows"]]
    fields["drift"] = [RecordSerializer.decode(DriftPoint, d) for d in js["drift"]]
    fields["filtered_examples"] = [RecordSerializer.decode(FilteredExample, e)
                                   for e in js["filtered_examples"]]
    return RecordSerializer.decode(EvalReport, fields)

def metric_wins(report: EvalReport, base: str, filtered: str) -> int:
    """Number of metrics on which row `filtered` beats row `base`."""
    rows = {r.strategy: r for r in report.rows}
    return sum(getattr(rows[filtered], name) > getattr(rows[base], name) for name in METRICS)
