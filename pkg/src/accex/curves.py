"""Rank statistics, accuracy curves and the exact observed-accuracy curve."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .score_model import ScoreMatrix

#: Largest number of class subsets ``brute_force_accuracy`` will enumerate.
ENUMERATION_CAP = 10**6

#: Estimated C values are clamped to [CLAMP, 1 - CLAMP] before taking logs.
CLAMP = 1e-12

SOURCES = ("observed", "cleanex", "kde", "regression", "oracle")


class EnumerationCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class PointStats:
    """Per-point sufficient statistics of a K-class score matrix.

    ``R[i]`` counts the incorrect classes strictly outscored by point i's
    correct class; ``C = R / (K - 1)``.
    """

    R: np.ndarray
    n_classes: int
    point_ids: tuple[str, ...] = ()

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.int64)
        if self.n_classes < 2:
            raise ValueError("rank statistics need K >= 2")
        if R.ndim != 1:
            raise ValueError("R must be one-dimensional")
        if R.size and (R.min() < 0 or R.max() > self.n_classes - 1):
            raise ValueError(f"R must lie in [0, {self.n_classes - 1}]")
        R.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "point_ids", tuple(self.point_ids))

    @property
    def C(self) -> np.ndarray:
        return self.R / (self.n_classes - 1)

    def __len__(self):
        return self.R.size


@dataclass(frozen=True)
class AccuracyCurve:
    """Accuracy estimates for k = 2, ..., k_max.

    ``clamp_count`` records how many entries were altered to keep the curve
    inside [0, 1] and nonincreasing (only the regression baseline needs it).
    """

    values: np.ndarray
    source: str = "observed"
    clamp_count: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("an accuracy curve needs at least the k=2 value")
        if self.source not in SOURCES:
            raise ValueError(f"unknown curve source {self.source!r}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def k_max(self) -> int:
        return self.values.size + 1

    @property
    def ks(self) -> np.ndarray:
        return np.arange(2, self.k_max + 1)

    def at(self, k: int) -> float:
        if not 2 <= k <= self.k_max:
            raise KeyError(k)
        return float(self.values[k - 2])

    def truncate(self, k_max: int) -> AccuracyCurve:
        if not 2 <= k_max <= self.k_max:
            raise ValueError(f"cannot truncate a curve covering 2..{self.k_max} to {k_max}")
        return AccuracyCurve(self.values[: k_max - 1], self.source, self.clamp_count, self.meta)

    def is_valid(self) -> bool:
        """True when all values lie in [0, 1] and never increase with k."""
        v = self.values
        return bool(np.all((v >= 0) & (v <= 1)) and np.all(np.diff(v) <= 0))


def compute_rank_stats(m: ScoreMatrix) -> PointStats:
    if m.n_classes < 2:
        raise ValueError("rank statistics need K >= 2")
    beaten = m.scores < m.correct_scores[:, None]
    # the correct column never satisfies the strict inequality against itself
    return PointStats(beaten.sum(axis=1), m.n_classes, m.point_ids)


def log_binom(n, k):
    """log C(n, k) via log-gamma; -inf where k > n or k < 0."""
    n = np.asarray(n, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    valid = (k >= 0) & (k <= n)
    with np.errstate(invalid="ignore"):
        out = gammaln(n + 1) - gammaln(k + 1) - gammaln(np.where(valid, n - k, 0) + 1)
    return np.where(valid, out, -np.inf)


def observed_accuracy_curve(stats: PointStats, K: int, r: int, k_max: int) -> AccuracyCurve:
    """Exact mean accuracy over all size-k class subsets of the K-class sample.

    Uses ``A_k = sum_x C(R_x, k-1) / (r k C(K, k))``, evaluated in log space
    so that K in the thousands does not overflow.
    """
    if not 2 <= k_max <= K:
        raise ValueError(f"k_max must satisfy 2 <= k_max <= K={K}, got {k_max}")
    if len(stats) != r * K:
        raise ValueError(f"expected r*K = {r * K} points, got {len(stats)}")
    # group points by R so the work is O(K * k_max) instead of O(N * k_max)
    counts = np.bincount(stats.R, minlength=K)
    Rs = np.flatnonzero(counts)
    ks = np.arange(2, k_max + 1)
    log_terms = log_binom(Rs[:, None], ks[None, :] - 1) + np.log(counts[Rs])[:, None]
    log_norm = np.log(r * ks) + log_binom(K, ks)
    with np.errstate(under="ignore"):
        values = np.exp(log_terms - log_norm[None, :]).sum(axis=0)
    # consecutive values can be mathematically equal; keep rounding from breaking monotonicity
    values = np.minimum.accumulate(np.clip(values, 0.0, 1.0))
    return AccuracyCurve(values, "observed")


def brute_force_accuracy(m: ScoreMatrix, k: int, cap: int = ENUMERATION_CAP) -> float:
    """Mean subset accuracy by enumerating every size-k subset of classes.

    A point counts as correct only when its correct class holds the strict
    maximum of the restricted scores.
    """
    K = m.n_classes
    if not 2 <= k <= K:
        raise ValueError(f"k must satisfy 2 <= k <= {K}")
    n_subsets = math.comb(K, k)
    if n_subsets > cap:
        raise EnumerationCapError(
            f"C({K},{k}) = {n_subsets} subsets exceeds the cap of {cap}; "
            "use observed_accuracy_curve (closed form) instead"
        )
    scores, correct = m.scores, m.correct
    correct_scores = m.correct_scores
    total = 0.0
    for subset in itertools.combinations(range(K), k):
        cols = np.array(subset)
        in_subset = np.isin(correct, cols)
        rows = np.flatnonzero(in_subset)
        restricted = scores[np.ix_(rows, cols)]
        others = restricted.copy()
        others[cols[None, :] == correct[rows, None]] = -np.inf
        wins = correct_scores[rows] > others.max(axis=1)
        total += wins.mean()
    return total / n_subsets


def power_mean_curve(c: np.ndarray, k_max: int, source: str) -> AccuracyCurve:
    """Curve ``k -> mean_x c_x^(k-1)`` for k = 2..k_max, powered in log space.

    ``c`` must lie in [0, 1]; it is clamped to [CLAMP, 1 - CLAMP] first.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("need a nonempty vector of C estimates")
    if not np.all(np.isfinite(c)) or c.min() < 0 or c.max() > 1:
        raise ValueError("C estimates must lie in [0, 1]")
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    log_c = np.log(np.clip(c, CLAMP, 1 - CLAMP))
    exponents = np.arange(1, k_max, dtype=np.float64)
    values = np.empty(k_max - 1)
    # chunk over k to bound memory at N * chunk
    chunk = max(1, 2_000_000 // c.size)
    with np.errstate(under="ignore"):
        for start in range(0, exponents.size, chunk):
            e = exponents[start : start + chunk]
            values[start : start + chunk] = np.exp(np.outer(log_c, e)).mean(axis=0)
    return AccuracyCurve(values, source)
