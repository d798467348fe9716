import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from accex.curves import PointStats, compute_rank_stats, observed_accuracy_curve
from accex.rroc import (
    accuracy_from_discriminability,
    default_grid,
    discriminability,
    reversed_auc,
    rroc_average,
    rroc_point,
)


@pytest.mark.parametrize("c, u, expected", [(1.0, 0.01, 1), (0.5, 0.5, 0), (0.5, 0.6, 1), (0.0, 1.0, 0), (0.25, 0.8, 1)])
def test_rroc_point(c, u, expected):
    assert rroc_point(c, u) == expected


def test_rroc_point_step_equivalence_on_dense_grid():
    cs = np.linspace(0, 1, 201)
    us = np.linspace(0, 1, 257)
    for c in cs:
        for u in us:
            assert rroc_point(c, u) == (1 if u > 1 - c else 0)


def test_m3_rroc_values(m3):
    stats = compute_rank_stats(m3)
    curve = rroc_average(stats, [0.0, 0.3, 0.6])
    np.testing.assert_allclose(curve.values, [0.0, 1 / 3, 1.0])


def test_rroc_at_zero_is_zero():
    stats = PointStats(np.array([0, 3, 5, 5]), 6)
    assert rroc_average(stats, [0.0]).values[0] == 0.0


def test_rroc_default_grid_and_shape():
    stats = PointStats(np.random.default_rng(0).integers(0, 50, 200), 50)
    curve = rroc_average(stats)
    assert curve.grid.size == 513
    assert np.all(np.diff(curve.values) >= 0)
    assert curve.values[0] >= 0 and curve.values[-1] <= 1


def test_rroc_empty_rejected():
    with pytest.raises(ValueError):
        rroc_average(PointStats(np.array([], dtype=int), 3))


def test_m3_reversed_auc(m3):
    stats = compute_rank_stats(m3)
    assert reversed_auc(stats) == pytest.approx(2 / 3, abs=1e-15)
    assert reversed_auc(stats) == pytest.approx(observed_accuracy_curve(stats, 3, 1, 3).at(2), abs=1e-12)


@pytest.mark.parametrize("R, expected", [([4, 4, 4], 1.0), ([0, 0], 0.0)])
def test_reversed_auc_extremes(R, expected):
    assert reversed_auc(PointStats(np.array(R), 5)) == expected


def test_m3_discriminability(m3):
    stats = compute_rank_stats(m3)
    assert discriminability(stats, 0.5) == pytest.approx(2 / 3)
    assert discriminability(stats, 1.0) == 1.0
    assert discriminability(PointStats(np.array([1, 2, 3]), 4), 0.0) == 0.0


def _avoid_jumps(C, u):
    """Drop grid values sitting on a step of either function."""
    jumps = np.concatenate([C, 1 - C])
    return u[np.min(np.abs(u[:, None] - jumps[None, :]), axis=1) > 1e-9]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_discriminability_reflects_rroc(K, n, seed):
    stats = PointStats(np.random.default_rng(seed).integers(0, K, n), K)
    u = _avoid_jumps(stats.C, default_grid(1001))
    d = discriminability(stats, u)
    rroc = rroc_average(stats, (1 - u)[::-1]).values[::-1]
    np.testing.assert_allclose(d + rroc, 1.0, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 500), st.integers(1, 400), st.integers(0, 2**32 - 1))
def test_integral_identity_matches_power_mean(K, n, seed):
    stats = PointStats(np.random.default_rng(seed).integers(0, K, n), K)
    for k in range(2, 21):
        lhs = accuracy_from_discriminability(stats, k)
        assert lhs == pytest.approx(np.mean(stats.C ** (k - 1)), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 100), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_reversed_auc_equals_two_class_accuracy(K, r, seed):
    stats = PointStats(np.random.default_rng(seed).integers(0, K, K * r), K)
    assert reversed_auc(stats) == pytest.approx(observed_accuracy_curve(stats, K, r, 2).at(2), abs=1e-12)


def test_area_under_step_average_is_mean_c():
    # exact area of the averaged step function: each point contributes 1 - (1 - C) = C
    stats = PointStats(np.array([0, 1, 7, 9, 9]), 10)
    grid = np.linspace(0, 1, 2**16 + 1)
    area = trapezoid(rroc_average(stats, grid).values, grid)
    assert area == pytest.approx(reversed_auc(stats), abs=1e-4)
