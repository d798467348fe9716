"""Competing estimators: kernel-smoothed C values and discriminability regression.

The KDE route estimates each point's C as a Gaussian-kernel-smoothed CDF of
its incorrect scores, with the bandwidth picked per point by leave-one-out
pseudo-likelihood. The regression route ignores scores and fits the
discriminability function as a sum of Gaussian bumps, using only the
observed accuracy curve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .curves import AccuracyCurve, power_mean_curve
from .score_model import ScoreMatrix

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class DegenerateBandwidthError(ValueError):
    pass


@dataclass(frozen=True)
class KdeConfig:
    """Gaussian kernel; bandwidth chosen on a log grid spanning
    ``silverman * [span_low, span_high]``."""

    grid_size: int = 32
    span_low: float = 1 / 8
    span_high: float = 8.0

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if not 0 < self.span_low <= self.span_high:
            raise ValueError("span must be positive and ordered")


def kde_cdf_at_correct(correct: float, incorrect, h: float) -> float:
    """Kernel-smoothed CDF of ``incorrect`` evaluated at ``correct``."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    incorrect = np.asarray(incorrect, dtype=np.float64)
    if incorrect.size == 0:
        raise ValueError("need at least one incorrect score")
    return float(np.mean(ndtr((correct - incorrect) / h)))


def silverman_bandwidth(x: np.ndarray) -> float:
    """``0.9 * min(sd, IQR/1.34) * n^(-1/5)``, falling back to sd when IQR is 0."""
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def bandwidth_grid(x: np.ndarray, cfg: KdeConfig) -> np.ndarray:
    h0 = silverman_bandwidth(x)
    if cfg.grid_size == 1:
        return np.array([h0])
    return h0 * np.geomspace(cfg.span_low, cfg.span_high, cfg.grid_size)


def loo_log_likelihood(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Leave-one-out log pseudo-likelihood of ``x`` for each bandwidth in ``grid``."""
    n = x.size
    sq = (x[:, None] - x[None, :]) ** 2
    np.fill_diagonal(sq, np.inf)
    # factor out each row's nearest neighbour so the largest term is exp(0) = 1
    nearest = sq.min(axis=1)
    sq -= nearest[:, None]
    out = np.empty(grid.size)
    buf = np.empty_like(sq)
    for i, h in enumerate(grid):
        scale = -0.5 / (h * h)
        np.multiply(sq, scale, out=buf)
        np.exp(buf, out=buf)
        log_k = np.log(buf.sum(axis=1)) + nearest * scale - _LOG_SQRT_2PI
        out[i] = np.sum(log_k) - n * np.log((n - 1) * h)
    return out


def kde_select_bandwidth(incorrect, cfg: KdeConfig = KdeConfig(), grid=None) -> float:
    """Grid bandwidth maximizing the leave-one-out pseudo-likelihood.

    Ties go to the smaller bandwidth. ``grid`` overrides the Silverman-based
    grid built from ``cfg``.
    """
    x = np.asarray(incorrect, dtype=np.float64)
    if x.size < 2:
        raise ValueError("bandwidth selection needs at least two values")
    if np.ptp(x) == 0:
        raise DegenerateBandwidthError("all values identical; bandwidth is undefined")
    grid = bandwidth_grid(x, cfg) if grid is None else np.sort(np.asarray(grid, dtype=np.float64))
    return float(grid[np.argmax(loo_log_likelihood(x, grid))])


def kde_estimates(m: ScoreMatrix, cfg: KdeConfig = KdeConfig()) -> np.ndarray:
    """Per-point C estimates with per-point bandwidths."""
    if m.n_classes < 3:
        raise ValueError("the KDE method needs K >= 3 (two incorrect scores per point)")
    incorrect = m.scores[m.incorrect_mask()].reshape(m.n_points, m.n_classes - 1)
    correct = m.correct_scores
    chat = np.empty(m.n_points)
    for i in range(m.n_points):
        h = kde_select_bandwidth(incorrect[i], cfg)
        chat[i] = kde_cdf_at_correct(correct[i], incorrect[i], h)
    return chat


def kde_extrapolate(m: ScoreMatrix, cfg: KdeConfig = KdeConfig(), k2: int | None = None) -> AccuracyCurve:
    k2 = m.n_classes if k2 is None else k2
    return power_mean_curve(kde_estimates(m, cfg), k2, "kde")


# -- discriminability regression ------------------------------------------------

QUADRATURE_NODES = 256


def default_n_bases(k1: int) -> int:
    return min(max(k1 // 10, 5), 25)


@dataclass(frozen=True)
class RegressionModel:
    """``D(u) = sum_j beta_j exp(-(u - c_j)^2 / (2 s^2))``, centers ``(j - 0.5)/J``, width ``1/J``."""

    n_bases: int = 10
    ridge: float = 1e-6
    beta: np.ndarray | None = None
    nodes: int = QUADRATURE_NODES

    def __post_init__(self):
        if self.n_bases < 2:
            raise ValueError("need at least two basis functions")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.beta is not None:
            beta = np.asarray(self.beta, dtype=np.float64)
            if beta.shape != (self.n_bases,):
                raise ValueError(f"beta must have length {self.n_bases}")
            object.__setattr__(self, "beta", beta)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(1, self.n_bases + 1) - 0.5) / self.n_bases

    @property
    def width(self) -> float:
        return 1.0 / self.n_bases

    def basis(self, u) -> np.ndarray:
        """Basis values, shape ``u.shape + (n_bases,)``."""
        u = np.asarray(u, dtype=np.float64)[..., None]
        return np.exp(-((u - self.centers) ** 2) / (2 * self.width**2))

    def discriminability(self, u) -> np.ndarray:
        if self.beta is None:
            raise ValueError("model has not been fitted")
        return self.basis(u) @ self.beta

    def design(self, k_max: int) -> np.ndarray:
        """``M[k-2, j] = (k-1) * integral_0^1 b_j(u) u^(k-2) du`` for k = 2..k_max."""
        return _design(self.n_bases, k_max, self.nodes)


@lru_cache(maxsize=32)
def _gauss_legendre(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=32)
def _design(n_bases: int, k_max: int, nodes: int) -> np.ndarray:
    u, w = _gauss_legendre(nodes)
    b = RegressionModel(n_bases, nodes=nodes).basis(u)  # (nodes, J)
    e = np.arange(0, k_max - 1)  # k - 2
    with np.errstate(under="ignore", divide="ignore"):
        powers = np.exp(np.outer(e, np.log(u)))  # (k, nodes)
    M = (e + 1)[:, None] * (powers * w) @ b
    M.flags.writeable = False
    return M


def regression_fit(observed: AccuracyCurve, model: RegressionModel = RegressionModel()) -> RegressionModel:
    """Ridge least squares for beta; predicted accuracy is linear in beta.

    Minimizes ``sum_k (1 - M beta - A_k)^2 + ridge * |beta|^2`` by solving the
    stacked system ``[M; sqrt(ridge) I] beta = [1 - A; 0]``.
    """
    M = model.design(observed.k_max)
    target = 1.0 - observed.values
    J = model.n_bases
    A = np.vstack([M, np.sqrt(model.ridge) * np.eye(J)])
    y = np.concatenate([target, np.zeros(J)])
    beta, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    if rank < J or sv[-1] <= sv[0] * np.finfo(float).eps * max(A.shape):
        raise np.linalg.LinAlgError(
            f"normal equations are singular (rank {rank} < {J}); use ridge > 0"
        )
    return replace(model, beta=beta)


def regression_raw_curve(model: RegressionModel, k2: int) -> np.ndarray:
    """Unclamped ``1 - M beta`` for k = 2..k2."""
    if model.beta is None:
        raise ValueError("model has not been fitted")
    return 1.0 - model.design(k2) @ model.beta


def regression_extrapolate(model: RegressionModel, k2: int) -> AccuracyCurve:
    """Predicted curve, clamped into [0, 1] and made nonincreasing.

    Every entry changed by either step counts towards ``clamp_count``.
    """
    raw = regression_raw_curve(model, k2)
    values = np.minimum.accumulate(np.clip(raw, 0.0, 1.0))
    changed = int(np.count_nonzero(values != raw))
    return AccuracyCurve(values, "regression", clamp_count=changed)
