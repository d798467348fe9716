"""Shared oracles and builders for the test suite."""

import numpy as np

from accex import cleanex
from accex.score_model import ScoreMatrix


def random_matrix(rng, K, r):
    """i.i.d. continuous scores with r points per class."""
    return ScoreMatrix(
        class_ids=[f"c{j}" for j in range(K)],
        point_ids=[f"p{i}" for i in range(K * r)],
        correct=np.repeat(np.arange(K), r),
        scores=rng.standard_normal((K * r, K)),
    )


def _activation_pattern(params, X):
    _, cache = cleanex._forward(params, X)
    return [z > 0 for _, z in cache[:-1]]


def gradient_check(model, features, observed, rng, per_array=100, step=1e-5, floor=1e-7):
    """Central finite differences on a random subset of coordinates.

    Returns (max relative error, coordinates checked, coordinates skipped).
    Coordinates whose perturbation flips a ReLU on/off are skipped: the loss
    is not differentiable across the kink, so the difference quotient there
    says nothing about the analytic gradient.
    """
    X = features.values
    _, grads = cleanex.param_gradients(model, features, observed)
    base = _activation_pattern(model.params, X)
    worst, checked, skipped = 0.0, 0, 0
    for p, g in zip(model.params, grads):
        coords = rng.choice(p.size, size=min(p.size, per_array), replace=False)
        for j in coords:
            old = p.flat[j]
            values, same = [], True
            for delta in (step, -step):
                p.flat[j] = old + delta
                c, _ = cleanex._forward(model.params, X)
                values.append(cleanex.loss(c, observed))
                same &= all(np.array_equal(a, b) for a, b in zip(base, _activation_pattern(model.params, X)))
            p.flat[j] = old
            if not same:
                skipped += 1
                continue
            numeric = (values[0] - values[1]) / (2 * step)
            analytic = g.flat[j]
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor))
            checked += 1
    return worst, checked, skipped
