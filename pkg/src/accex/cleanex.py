"""Neural estimation of per-point C values, calibrated to observed accuracies.

A feedforward network maps each point's sorted score vector to an estimate
``c_x`` of the fraction of incorrect classes its correct class outscores.
Training pushes ``mean_x c_x^(k-1)`` towards the observed accuracy curve
for every k the pilot sample supports; extrapolation then evaluates the
same power mean at larger k.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from os import PathLike

import numpy as np
from scipy.special import expit

from .curves import AccuracyCurve, compute_rank_stats, observed_accuracy_curve, power_mean_curve
from .score_model import ScoreMatrix

log = logging.getLogger(__name__)

HIDDEN = (512, 128)
ITERS = 10_000
LEARNING_RATE = 1e-4
BETA1, BETA2, EPSILON = 0.9, 0.999, 1e-8

MAGIC = b"CLNX1"


class DegenerateInputError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class FeatureSet:
    """Standardized network inputs: ``[correct, sorted incorrect...]`` per row."""

    values: np.ndarray
    mean: float
    std: float

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]


def raw_features(m: ScoreMatrix) -> np.ndarray:
    incorrect = m.scores[m.incorrect_mask()].reshape(m.n_points, m.n_classes - 1)
    return np.column_stack([m.correct_scores, np.sort(incorrect, axis=1)])


def build_features(m: ScoreMatrix, mean: float | None = None, std: float | None = None) -> FeatureSet:
    """Sort each row's incorrect scores and apply one global z-score.

    Pass ``mean``/``std`` to reuse the constants a model was trained with.
    """
    if m.n_classes < 2:
        raise ValueError("features need at least two classes")
    raw = raw_features(m)
    if mean is None or std is None:
        mean, std = float(raw.mean()), float(raw.std())
        if not std > 0:
            raise DegenerateInputError("all scores are equal; features have zero variance")
    if not (np.isfinite(mean) and np.isfinite(std) and std > 0):
        raise DegenerateInputError(f"invalid standardization constants mean={mean}, std={std}")
    return FeatureSet((raw - mean) / std, float(mean), float(std))


@dataclass
class CleanexModel:
    """Weights ``[W1, b1, W2, b2, ...]`` plus Adam state and the feature scaling."""

    params: list[np.ndarray]
    feature_mean: float = 0.0
    feature_std: float = 1.0
    lr: float = LEARNING_RATE
    iters: int = 0
    step: int = 0
    moment1: list[np.ndarray] = field(default_factory=list)
    moment2: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.moment1:
            self.moment1 = [np.zeros_like(p) for p in self.params]
        if not self.moment2:
            self.moment2 = [np.zeros_like(p) for p in self.params]

    @property
    def dims(self) -> tuple[int, ...]:
        weights = self.params[0::2]
        return (weights[0].shape[0], *(w.shape[1] for w in weights))

    @property
    def input_width(self) -> int:
        return self.dims[0]

    def copy(self) -> CleanexModel:
        return CleanexModel(
            [p.copy() for p in self.params],
            self.feature_mean,
            self.feature_std,
            self.lr,
            self.iters,
            self.step,
            [a.copy() for a in self.moment1],
            [a.copy() for a in self.moment2],
        )


def init_model(k1: int, seed, hidden=HIDDEN, dtype=np.float64) -> CleanexModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = (k1, *hidden, 1)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        params.append(np.zeros(fan_out, dtype=dtype))
    return CleanexModel(params)


def _forward(params, X):
    """Return (output, cache) where cache holds each layer's input and pre-activation."""
    cache = []
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        z = h @ W + b
        cache.append((h, z))
        h = np.maximum(z, 0) if i < n_layers - 1 else expit(z)
    return h[:, 0], cache


def _backward(params, cache, c, dc):
    """Gradients of the loss w.r.t. params given dL/dc."""
    grads = [None] * len(params)
    dz = (dc * c * (1 - c))[:, None]
    for i in reversed(range(len(params) // 2)):
        h, _ = cache[i]
        grads[2 * i] = h.T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params[2 * i].T
            dz = dh * (cache[i - 1][1] > 0)
    return grads


def forward(model: CleanexModel, features: FeatureSet) -> np.ndarray:
    """Network estimates of C for every row, in (0, 1) up to float saturation."""
    if features.width != model.input_width:
        raise ValueError(
            f"feature width {features.width} does not match model input width {model.input_width}"
        )
    X = features.values.astype(model.params[0].dtype, copy=False)
    c, _ = _forward(model.params, X)
    return c.astype(np.float64)


def _k_grid(observed: AccuracyCurve, k_stride: int) -> np.ndarray:
    if k_stride < 1:
        raise ValueError("k_stride must be positive")
    return np.arange(2, observed.k_max + 1, k_stride)


def loss_and_grad(chat: np.ndarray, observed: AccuracyCurve, k_stride: int = 1):
    """Loss ``mean_k (mean_x chat^(k-1) - observed_k)^2`` and its gradient in chat."""
    chat = np.asarray(chat)
    ks = _k_grid(observed, k_stride)
    target = observed.values[ks - 2].astype(chat.dtype)
    lower = np.power(chat[:, None], (ks - 2).astype(chat.dtype))  # chat^(k-2)
    powers = lower * chat[:, None]  # chat^(k-1)
    err = powers.mean(axis=0) - target
    loss = np.mean(err**2)
    coef = (2.0 / ks.size) * err * (ks - 1)
    dchat = (lower @ coef.astype(chat.dtype)) / chat.size
    return float(loss), dchat


def loss(chat, observed: AccuracyCurve, k_stride: int = 1) -> float:
    return loss_and_grad(chat, observed, k_stride)[0]


def param_gradients(model: CleanexModel, features: FeatureSet, observed: AccuracyCurve, k_stride: int = 1):
    """Loss and its analytic gradient for every parameter array."""
    X = features.values.astype(model.params[0].dtype, copy=False)
    c, cache = _forward(model.params, X)
    value, dc = loss_and_grad(c, observed, k_stride)
    return value, _backward(model.params, cache, c, dc)


def adam_step(model: CleanexModel, grads, lr: float) -> None:
    model.step += 1
    t = model.step
    bc1 = 1 - BETA1**t
    bc2 = 1 - BETA2**t
    for p, g, m, v in zip(model.params, grads, model.moment1, model.moment2):
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + EPSILON)


@dataclass
class TrainingTrace:
    losses: np.ndarray
    duration: float

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1]) if self.losses.size else float("nan")


def train(
    features: FeatureSet,
    observed: AccuracyCurve,
    iters: int = ITERS,
    lr: float = LEARNING_RATE,
    seed=0,
    k_stride: int = 1,
    hidden=HIDDEN,
    dtype=np.float64,
    model: CleanexModel | None = None,
) -> tuple[CleanexModel, TrainingTrace]:
    """Full-batch Adam on the accuracy-calibration loss.

    ``observed`` must cover k = 2..k1 where k1 is the feature width. A fresh
    model is initialized from ``seed`` unless ``model`` is given.
    """
    if observed.k_max != features.width:
        raise ValueError(
            f"observed curve covers 2..{observed.k_max} but features have width {features.width}"
        )
    if model is None:
        model = init_model(features.width, seed, hidden, dtype)
    else:
        model = model.copy()
    model.feature_mean, model.feature_std = features.mean, features.std
    model.lr = lr
    dtype = model.params[0].dtype

    X = features.values.astype(dtype)
    losses = np.empty(iters)
    start = time.perf_counter()
    for j in range(iters):
        c, cache = _forward(model.params, X)
        value, dc = loss_and_grad(c, observed, k_stride)
        if not np.isfinite(value):
            raise TrainingDivergedError(j, "loss")
        grads = _backward(model.params, cache, c, dc)
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergedError(j, "gradient")
        adam_step(model, grads, lr)
        losses[j] = value
        if log.isEnabledFor(logging.DEBUG) and j % 1000 == 0:
            log.debug("iteration %d loss %.3e", j, value)
    model.iters += iters
    return model, TrainingTrace(losses, time.perf_counter() - start)


def extrapolate(chat: np.ndarray, k2: int) -> AccuracyCurve:
    """Predicted accuracy ``mean_x chat^(k-1)`` for k = 2..k2."""
    return power_mean_curve(chat, k2, "cleanex")


def fit(
    m: ScoreMatrix,
    iters: int = ITERS,
    lr: float = LEARNING_RATE,
    seed=0,
    k_stride: int = 1,
    hidden=HIDDEN,
    dtype=np.float64,
):
    """Train on a pilot sample; returns (model, trace, chat)."""
    features = build_features(m)
    observed = observed_accuracy_curve(compute_rank_stats(m), m.n_classes, m.r, m.n_classes)
    model, trace = train(features, observed, iters, lr, seed, k_stride, hidden, dtype)
    return model, trace, forward(model, features)


def predict(model: CleanexModel, m: ScoreMatrix, k2: int) -> AccuracyCurve:
    """Extrapolate to k2 using the scores in ``m`` and the model's feature scaling."""
    features = build_features(m, model.feature_mean, model.feature_std)
    return extrapolate(forward(model, features), k2)


# binary layout, little-endian throughout:
#   magic "CLNX1" | u32 n_dims | u32 dims[n_dims]
#   f64 feature_mean, feature_std, lr | u64 iters, step
#   params, then first moments, then second moments, each as f64 arrays
#   in [W1, b1, W2, b2, ...] order (W row-major, shape (fan_in, fan_out))


def save_model(model: CleanexModel, path: str | PathLike) -> None:
    dims = model.dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
        fh.write(struct.pack("<3d2Q", model.feature_mean, model.feature_std, model.lr, model.iters, model.step))
        for group in (model.params, model.moment1, model.moment2):
            for a in group:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: str | PathLike, dtype=np.float64) -> CleanexModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a CLNX1 model file")
    offset = len(MAGIC)
    (n_dims,) = struct.unpack_from("<I", data, offset)
    offset += 4
    dims = struct.unpack_from(f"<{n_dims}I", data, offset)
    offset += 4 * n_dims
    mean, std, lr, iters, step = struct.unpack_from("<3d2Q", data, offset)
    offset += struct.calcsize("<3d2Q")

    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    groups = []
    for _ in range(3):
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            a = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            arrays.append(a.astype(dtype))
            offset += 8 * count
        groups.append(arrays)
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return CleanexModel(groups[0], mean, std, lr, iters, step, groups[1], groups[2])
