# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Collaborative-filtering engines and the age-based post-filter.

Engines share the `Engine` interface: ``fit()`` once, then ``top_n(user, n)``
returns ``(item_id, score)`` pairs in descending score order, ties broken by
item id.  Nothing in this module's scoring code looks at ages; the age
information only enters through `post_filter`.
"""

from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse

from . import core
from .core import Rating
from .items import ItemAgeProfile
from .users import UserAgeModel, target_age

# Rating matrix
# =============

class RatingMatrix:
    """Sparse user × item ratings, keeping the latest rating of each pair."""

    def __init__(self, ratings: Iterable[Rating]):
        latest: Dict[Tuple[str, str], Rating] = {}
        for r in sorted(ratings, key=lambda r: (r.user_id, r.item_id, r.day, r.rating)):
            if not 1 <= r.rating <= 5:
                raise core.DataError(r.user_id, "rating out of range: {}".format(r.rating))
            latest[(r.user_id, r.item_id)] = r
        self.users = sorted({u for u, _ in latest})
        self.items = sorted({i for _, i in latest})
        self.user_index = {u: n for n, u in enumerate(self.users)}
        self.item_index = {i: n for n, i in enumerate(self.items)}
        rows = [self.user_index[r.user_id] for r in latest.values()]
        cols = [self.item_index[r.item_id] for r in latest.values()]
        vals = [float(r.rating) for r in latest.values()]
        shape = (len(self.users), len(self.items))
        self.R = sparse.csr_matrix((vals, (rows, cols)), shape=shape, dtype=float)
        self.R.sort_indices()
        self.B = self.R.copy()
        self.B.data[:] = 1.0
        self.R2 = self.R.multiply(self.R).tocsr()

    @property
    def shape(self):
        return self.R.shape

    def __len__(self):
        return self.R.nnz

    def user(self, user_id) -> int:
        try:
            return self.user_index[user_id]
        except KeyError:
            raise core.DataError(user_id, "unknown user") from None

    def row(self, u: int) -> np.ndarray:
        return self.R.getrow(u).toarray().ravel()

    def rated(self, u: int) -> np.ndarray:
        return self.R.indices[self.R.indptr[u]:self.R.indptr[u + 1]]

    def user_means(self) -> np.ndarray:
        counts = np.diff(self.R.indptr)
        sums = np.asarray(self.R.sum(axis=1)).ravel()
        return np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)

# Similarities
# ============

VARIANCE_EPS = 1e-9

def pearson_similarity(u: np.ndarray, v: np.ndarray) -> Optional[float]:
    """Pearson correlation over co-rated entries (``0`` means unrated).

    Returns ``None`` with fewer than two co-rated items or zero variance.

    >>> pearson_similarity(np.array([1., 2., 3.]), np.array([2., 4., 6.]))
    1.0
    >>> pearson_similarity(np.array([1., 2., 3.]), np.array([3., 2., 1.]))
    -1.0
    >>> pearson_similarity(np.array([5., 5., 5.]), np.array([1., 2., 3.])) is None
    True
    """
    mask = (u != 0) & (v != 0)
    if mask.sum() < 2:
        return None
    x, y = u[mask] - u[mask].mean(), v[mask] - v[mask].mean()
    sxx, syy = float(x @ x), float(y @ y)
    if sxx <= VARIANCE_EPS or syy <= VARIANCE_EPS:
        return None
    return float(np.clip(x @ y / np.sqrt(sxx * syy), -1.0, 1.0))

def pearson_to_all(matrix: RatingMatrix, u: int) -> np.ndarray:
    """Pearson similarity of user `u` to every user; ``nan`` where undefined.

    All co-rated sums come from sparse matrix-vector products against the
    target row ``r`` and its indicator ``b``.
    """
    r = matrix.row(u)
    b = (r != 0).astype(float)
    n = matrix.B @ b
    sum_x = matrix.R @ b
    sum_y = matrix.B @ r
    sum_xy = matrix.R @ r
    sum_xx = matrix.R2 @ b
    sum_yy = matrix.B @ (r * r)
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = sum_xy - sum_x * sum_y / n
        var_x = sum_xx - sum_x ** 2 / n
        var_y = sum_yy - sum_y ** 2 / n
        sim = cov / np.sqrt(var_x * var_y)
    defined = (n >= 2) & (var_x > VARIANCE_EPS) & (var_y > VARIANCE_EPS)
    return np.where(defined, np.clip(sim, -1.0, 1.0), np.nan)

def euclidean_item_similarities(matrix: RatingMatrix) -> sparse.csr_matrix:
    """``1 / (1 + d)`` for every item pair with at least one co-rater.

    ``d`` is the euclidean distance between the two items' ratings, restricted
    to users who rated both.  Pairs without co-raters are left out.
    """
    R, B, R2 = matrix.R, matrix.B, matrix.R2
    co = (B.T @ B).tocoo()
    rows, cols = co.row, co.col
    cross = R.T @ R
    sq = R2.T @ B
    d2 = (np.asarray(sq[rows, cols]).ravel() + np.asarray(sq[cols, rows]).ravel()
          - 2 * np.asarray(cross[rows, cols]).ravel())
    sim = 1.0 / (1.0 + np.sqrt(np.maximum(d2, 0.0)))
    n = matrix.shape[1]
    return sparse.csr_matrix((sim, (rows, cols)), shape=(n, n))

# Engines
# =======

class Engine:
    NAME: str = ""

    def __init__(self, matrix: RatingMatrix):
        self.matrix = matrix

    def fit(self):
        return self

    def scores(self, u: int) -> np.ndarray:
        """Scores of all items for user index `u`; ``nan`` for unscorable items."""
        raise NotImplementedError()

    def top_n(self, user_id, n) -> List[Tuple[str, float]]:
        if n <= 0:
            return []
        u = self.matrix.user(user_id)
        scores = self.scores(u)
        scores[self.matrix.rated(u)] = np.nan
        candidates = np.flatnonzero(np.isfinite(scores))
        items = self.matrix.items
        ranked = sorted(candidates, key=lambda i: (-scores[i], items[i]))
        return [(items[i], float(scores[i])) for i in ranked[:n]]

class UserKNN(Engine):
    """User-based kNN with Pearson similarity and mean-centered aggregation.

    Only positively correlated users enter a neighborhood.
    """
    NAME = "ub-cf"

    def __init__(self, matrix, k=50):
        super().__init__(matrix)
        self.k = k
        self.means = matrix.user_means()

    def neighbors(self, u) -> Tuple[np.ndarray, np.ndarray]:
        sims = pearson_to_all(self.matrix, u)
        sims[u] = np.nan
        positive = np.flatnonzero(np.nan_to_num(sims, nan=0.0) > 0)
        ranked = sorted(positive, key=lambda v: (-sims[v], v))[:self.k]
        idx = np.asarray(ranked, dtype=int)
        return idx, sims[idx]

    def scores(self, u):
        n_items = self.matrix.shape[1]
        idx, sims = self.neighbors(u)
        if len(idx) == 0:
            return np.full(n_items, np.nan)
        R = self.matrix.R[idx]
        centered = R.copy()
        centered.data -= np.repeat(self.means[idx], np.diff(R.indptr))
        num = centered.T @ sims
        den = self.matrix.B[idx].T @ np.abs(sims)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, self.means[u] + num / den, np.nan)

class ItemKNN(Engine):
    """Item-based kNN with euclidean similarity over co-raters."""
    NAME = "ib-cf"

    def __init__(self, matrix):
        super().__init__(matrix)
        self.similarities: Optional[sparse.csr_matrix] = None

    def fit(self):
        self.similarities = euclidean_item_similarities(self.matrix)
        return self

    def scores(self, u):
        assert self.similarities is not None, "ItemKNN.fit() not called"
        rated = self.matrix.rated(u)
        ratings = self.matrix.row(u)[rated]
        S = self.similarities[:, rated]
        num = S @ ratings
        den = S @ np.ones(len(rated))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, num / den, np.nan)

class FactorModel(NamedTuple):
    P: np.ndarray
    Q: np.ndarray
    reg: float
    trace: List[float]
    jitter_events: int

JITTER = 1e-9

def als_objective(matrix: RatingMatrix, P, Q, reg) -> float:
    """Squared error on observed ratings plus count-weighted L2 penalties."""
    R = matrix.R.tocoo()
    pred = np.einsum("ij,ij->i", P[R.row], Q[R.col])
    n_u = np.diff(matrix.R.indptr)
    n_i = np.bincount(R.col, minlength=Q.shape[0])
    penalty = n_u @ (P * P).sum(axis=1) + n_i @ (Q * Q).sum(axis=1)
    return float(((R.data - pred) ** 2).sum() + reg * penalty)

def _solve_rows(R: sparse.csr_matrix, fixed: np.ndarray, reg, threads):
    """Solve each row's regularized least-squares problem against `fixed` factors."""
    f = fixed.shape[1]
    eye = np.eye(f)

    def solve(row):
        cols = R.indices[R.indptr[row]:R.indptr[row + 1]]
        vals = R.data[R.indptr[row]:R.indptr[row + 1]]
        F = fixed[cols]
        A = F.T @ F + reg * max(len(cols), 1) * eye
        rhs = F.T @ vals
        try:
            return np.linalg.solve(A, rhs), False
        except np.linalg.LinAlgError:
            return np.linalg.solve(A + JITTER * eye, rhs), True

    results = core.parallel_map(solve, range(R.shape[0]), threads)
    factors = np.vstack([x for x, _ in results]) if results else np.zeros((0, f))
    return factors, sum(j for _, j in results)

def als_train(matrix: RatingMatrix, factors=20, reg=0.05, sweeps=15, seed=42,
              threads=1) -> FactorModel:
    """Alternating least squares with count-weighted (ALS-WR) regularization.

    The objective is recorded at initialization and after every half-sweep.
    """
    if factors < 1 or reg <= 0 or sweeps < 1:
        raise core.ConfigError("als", "expecting factors >= 1, reg > 0, sweeps >= 1")
    rng = np.random.default_rng(seed)
    n_users, n_items = matrix.shape
    P = rng.uniform(0.0, 0.1, size=(n_users, factors))
    Q = rng.uniform(0.0, 0.1, size=(n_items, factors))
    Rt = matrix.R.T.tocsr()
    trace = [als_objective(matrix, P, Q, reg)]
    jitter = 0
    for _ in range(sweeps):
        P, j = _solve_rows(matrix.R, Q, reg, threads)
        jitter += j
        trace.append(als_objective(matrix, P, Q, reg))
        Q, j = _solve_rows(Rt, P, reg, threads)
        jitter += j
        trace.append(als_objective(matrix, P, Q, reg))
    if jitter:
        core.notify("ALS added ridge jitter to {} singular system(s)".format(jitter),
                    level=core.LEVELS["info"])
    return FactorModel(P, Q, reg, trace, jitter)

class ALSEngine(Engine):
    NAME = "mf-als"

    def __init__(self, matrix, factors=20, reg=0.05, sweeps=15, seed=42, threads=1):
        super().__init__(matrix)
        self.params = dict(factors=factors, reg=reg, sweeps=sweeps, seed=seed, threads=threads)
        self.model: Optional[FactorModel] = None

    def fit(self):
        self.model = als_train(self.matrix, **self.params)
        return self

    def scores(self, u):
        assert self.model is not None, "ALSEngine.fit() not called"
        return self.model.Q @ self.model.P[u]

ENGINES = {cls.NAME: cls for cls in (UserKNN, ItemKNN, ALSEngine)}

def make_engine(name, matrix: RatingMatrix, **params) -> Engine:
    if name not in ENGINES:
        raise core.ConfigError("engine", "expecting one of {}, not {!r}".format(
            ", ".join(ENGINES), name))
    return ENGINES[name](matrix, **params).fit()

# Post-filtering
# ==============

APPLIED, NO_USER_MODEL, OFF = "applied", "no-user-model", "off"
IN_RANGE, OUT_OF_RANGE, NO_PROFILE = "in-range", "out-of-range", "no-profile"

class FilterVerdict(NamedTuple):
    item_id: str
    low_years: Optional[float]
    high_years: Optional[float]
    predicted_age: float
    kept: bool
    reason: str

class RecommendationList(NamedTuple):
    user_id: str
    generated_at: int
    entries: Tuple[Tuple[str, float], ...]
    age_filter: str = OFF
    verdicts: Tuple[FilterVerdict, ...] = ()

    @property
    def item_ids(self):
        return [item for item, _ in self.entries]

def verdict(item_id, profile: Optional[ItemAgeProfile], age) -> FilterVerdict:
    """Decide whether `item_id` suits a target person aged `age` years.

    >>> from .items import Strategy
    >>> jumperoo = ItemAgeProfile("B1", Strategy.ALL, 4 / 12, 9 / 12, 10, 0)
    >>> verdict("B1", jumperoo, 14 / 12).reason, verdict("B2", None, 14 / 12).kept
    ('out-of-range', True)
    """
    if profile is None:
        return FilterVerdict(item_id, None, None, age, True, NO_PROFILE)
    kept = profile.contains(age)
    return FilterVerdict(item_id, profile.low_years, profile.high_years, age, kept,
                         IN_RANGE if kept else OUT_OF_RANGE)

def post_filter(recs: RecommendationList, user_model: Optional[UserAgeModel],
                item_profiles: Dict[str, ItemAgeProfile], day) -> RecommendationList:
    """Remove entries whose item range excludes the user's target age on `day`.

    Items without a profile are kept; without a user model the list comes
    back unchanged and flagged ``no-user-model``.
    """
    if user_model is None:
        core.notify("No age model for user {}; list left unfiltered".format(recs.user_id),
                    level=core.LEVELS["debug"])
        return recs._replace(age_filter=NO_USER_MODEL)
    age = target_age(user_model, day)
    verdicts = tuple(verdict(item, item_profiles.get(item), age) for item, _ in recs.entries)
    entries = tuple(e for e, v in zip(recs.entries, verdicts) if v.kept)
    return recs._replace(entries=entries, age_filter=APPLIED, verdicts=verdicts)

def recommend_for(engine: Engine, user_id, day, n=10, oversample=5,
                  user_model: Optional[UserAgeModel] = None,
                  item_profiles: Optional[Dict[str, ItemAgeProfile]] = None,
                  age_filter=True) -> RecommendationList:
    """Top-`n` list for `user_id` on `day`, post-filtered from ``n * oversample`` candidates."""
    if oversample < 1:
        raise core.ConfigError("oversample", "expecting m >= 1, not {}".format(oversample))
    if not age_filter:
        return RecommendationList(user_id, day, tuple(engine.top_n(user_id, n)))
    candidates = RecommendationList(user_id, day, tuple(engine.top_n(user_id, n * oversample)))
    filtered = post_filter(candidates, user_model, item_profiles or {}, day)
    if filtered.age_filter == APPLIED and not filtered.entries and candidates.entries:
        core.notify("All candidates filtered out for user {}".format(user_id),
                    level=core.LEVELS["debug"])
    return filtered._replace(entries=filtered.entries[:n])

def json_of_list(recs: RecommendationList):
    return {"user_id": recs.user_id,
            "generated_at": core.format_day(recs.generated_at),
            "age_filter": recs.age_filter,
            "entries": [{"item_id": item, "score": score} for item, score in recs.entries],
            "verdicts": [v._asdict() for v in recs.verdicts]}
