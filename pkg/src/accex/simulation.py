"""Synthetic classification problems with Euclidean-distance scores.

Class centroids and the points around them are drawn from Gaussian or
uniform families. Every class owns an independent PCG64 substream derived
from ``SeedSequence(seed, spawn_key=(class_index,))``; the centroid is drawn
first, then its r points in order. Output is therefore independent of how
classes are scheduled across workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .score_model import ScoreMatrix


class ClassDist(enum.Enum):
    GAUSS = "gauss"
    UNIFORM_MATCHED = "uniform-matched"  # U(-sqrt3, sqrt3): unit variance
    UNIFORM_UNIT = "uniform-unit"  # U(-1, 1)


class PointDist(enum.Enum):
    GAUSS = "gauss"  # N(y, sigma2 I)
    UNIFORM_MATCHED = "uniform-matched"  # U(y -/+ sqrt(3 sigma2)): variance sigma2
    UNIFORM_UNIT = "uniform-unit"  # U(y -/+ sigma2)


@dataclass(frozen=True)
class SimulationConfig:
    d: int = 5
    n_classes: int = 2000
    r: int = 10
    sigma2: float = 0.1
    class_dist: ClassDist = ClassDist.GAUSS
    point_dist: PointDist = PointDist.GAUSS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_dist", ClassDist(self.class_dist))
        object.__setattr__(self, "point_dist", PointDist(self.point_dist))
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


def class_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_centroid(rng: np.random.Generator, dist: ClassDist, d: int) -> np.ndarray:
    if dist is ClassDist.GAUSS:
        return rng.standard_normal(d)
    half = np.sqrt(3.0) if dist is ClassDist.UNIFORM_MATCHED else 1.0
    return rng.uniform(-half, half, size=d)


def sample_points(rng: np.random.Generator, centroid: np.ndarray, cfg: SimulationConfig) -> np.ndarray:
    shape = (cfg.r, centroid.size)
    if cfg.point_dist is PointDist.GAUSS:
        return centroid + np.sqrt(cfg.sigma2) * rng.standard_normal(shape)
    if cfg.point_dist is PointDist.UNIFORM_MATCHED:
        half = np.sqrt(3.0 * cfg.sigma2)
    else:
        half = cfg.sigma2
    return centroid + rng.uniform(-half, half, size=shape)


def negated_distances(points: np.ndarray, centroids: np.ndarray, chunk: int = 512) -> np.ndarray:
    """``-||x - y||`` for every point/centroid pair.

    Squared coordinate differences are sorted before summation, which makes
    the result bitwise invariant to permuting dimensions.
    """
    out = np.empty((points.shape[0], centroids.shape[0]))
    for start in range(0, points.shape[0], chunk):
        block = points[start : start + chunk]
        sq = (block[:, None, :] - centroids[None, :, :]) ** 2
        sq.sort(axis=2)
        out[start : start + chunk] = -np.sqrt(sq.sum(axis=2))
    return out


def generate(cfg: SimulationConfig, centroids: np.ndarray | None = None) -> ScoreMatrix:
    """Draw a K-class problem and score every point against every centroid.

    ``centroids`` (shape (K, d)) overrides the class distribution; points are
    still drawn from each class's substream.
    """
    K, r = cfg.n_classes, cfg.r
    if centroids is not None:
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.shape != (K, cfg.d):
            raise ValueError(f"centroids must have shape ({K}, {cfg.d})")
    fixed = centroids
    centroids = np.empty((K, cfg.d))
    points = np.empty((K * r, cfg.d))
    for c in range(K):
        rng = class_rng(cfg.seed, c)
        drawn = sample_centroid(rng, cfg.class_dist, cfg.d)
        centroids[c] = drawn if fixed is None else fixed[c]
        points[c * r : (c + 1) * r] = sample_points(rng, centroids[c], cfg)

    width = len(str(K - 1))
    class_ids = [f"y{c:0{width}d}" for c in range(K)]
    point_ids = [f"y{c:0{width}d}_{j}" for c in range(K) for j in range(r)]
    correct = np.repeat(np.arange(K), r)
    return ScoreMatrix(class_ids, point_ids, correct, negated_distances(points, centroids))
