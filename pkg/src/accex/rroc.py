"""Reversed ROC curves, reversed AUC and the discriminability function.

Per point, the reversed ROC is a step function that jumps from 0 to 1 at
``u = 1 - C_x``. Averaging over points gives a curve shaped like an ordinary
ROC; its area is the expected two-class accuracy, and its reflection
``D(u) = 1 - rROC(1 - u)`` is the CDF of C over points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import PointStats

DEFAULT_GRID_SIZE = 513


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


@dataclass(frozen=True)
class RRocCurve:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-D and the same length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def rroc_point(c: float, u: float) -> int:
    """Reversed ROC of a single point: 1 iff ``u > 1 - c``."""
    return int(u > 1.0 - c)


def _check_grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if grid.size and (grid.min() < 0 or grid.max() > 1):
        raise ValueError("grid values must lie in [0, 1]")
    return grid


def rroc_average(stats: PointStats, grid=None) -> RRocCurve:
    """Fraction of points whose reversed ROC is 1 at each grid value."""
    if len(stats) == 0:
        raise ValueError("cannot average over an empty set of points")
    grid = default_grid() if grid is None else _check_grid(grid)
    thresholds = np.sort(1.0 - stats.C)
    # count thresholds strictly below each u
    below = np.searchsorted(thresholds, grid, side="left")
    return RRocCurve(grid, below / thresholds.size)


def reversed_auc(stats: PointStats) -> float:
    """Area under the averaged reversed ROC, i.e. ``mean(C_x)``."""
    if len(stats) == 0:
        raise ValueError("cannot average over an empty set of points")
    return float(np.mean(stats.C))


def discriminability(stats: PointStats, u):
    """D(u): fraction of points with ``C_x <= u``. Scalar in, scalar out."""
    if len(stats) == 0:
        raise ValueError("cannot average over an empty set of points")
    scalar = np.ndim(u) == 0
    u = _check_grid(u)
    C = np.sort(stats.C)
    values = np.searchsorted(C, u, side="right") / C.size
    return float(values[0]) if scalar else values


def accuracy_from_discriminability(stats: PointStats, k: int) -> float:
    """``1 - (k-1) * integral_0^1 D(u) u^(k-2) du`` with D the empirical step CDF.

    The integral is exact: D is constant between consecutive distinct C
    values, so each piece contributes ``D * (b^(k-1) - a^(k-1))``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(stats) == 0:
        raise ValueError("cannot average over an empty set of points")
    C = np.sort(stats.C)
    knots = np.unique(np.concatenate(([0.0], C, [1.0])))
    # D is right-continuous, so on [a, b) it equals D(a)
    left = knots[:-1]
    right = knots[1:]
    level = np.searchsorted(C, left, side="right") / C.size
    e = k - 1
    integral = np.sum(level * (right**e - left**e))
    return float(1.0 - integral)
