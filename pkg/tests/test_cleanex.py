import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accex import cleanex
from accex.cleanex import (
    DegenerateInputError,
    FeatureSet,
    TrainingDivergedError,
    build_features,
    extrapolate,
    forward,
    init_model,
    load_model,
    loss,
    raw_features,
    save_model,
    train,
)
from accex.curves import AccuracyCurve, power_mean_curve
from accex.score_model import ScoreMatrix

from helpers import gradient_check


def toy_problem(seed=0, N=8, k1=4):
    rng = np.random.default_rng(seed)
    features = FeatureSet(rng.standard_normal((N, k1)), 0.0, 1.0)
    C = rng.uniform(0.2, 0.95, N)
    observed = power_mean_curve(C, k1, "observed")
    return features, observed


def test_m3_raw_rows(m3):
    raw = raw_features(m3)
    np.testing.assert_array_equal(raw[0], [0.9, 0.1, 0.5])
    np.testing.assert_array_equal(raw[2], [0.4, 0.3, 0.8])


def test_global_standardization(m3):
    f = build_features(m3)
    raw = raw_features(m3)
    assert f.mean == pytest.approx(raw.mean()) and f.std == pytest.approx(raw.std())
    np.testing.assert_allclose(f.values, (raw - raw.mean()) / raw.std())
    assert f.values.mean() == pytest.approx(0, abs=1e-15) and f.values.std() == pytest.approx(1)


def test_standardization_constants_can_be_reused(m3):
    f = build_features(m3, mean=0.5, std=2.0)
    np.testing.assert_allclose(f.values, (raw_features(m3) - 0.5) / 2.0)


def test_incorrect_segment_sorted():
    rng = np.random.default_rng(0)
    m = ScoreMatrix(list("abcdef"), list("uvwxyz"), range(6), rng.standard_normal((6, 6)))
    f = build_features(m)
    assert np.all(np.diff(f.values[:, 1:], axis=1) >= 0)


def test_degenerate_features():
    m = ScoreMatrix(["a", "b"], ["p", "q"], [0, 1], np.ones((2, 2)))
    with pytest.raises(DegenerateInputError):
        build_features(m)


def test_architecture_dims():
    model = init_model(7, seed=0)
    assert model.dims == (7, 512, 128, 1)
    limit = np.sqrt(6 / (7 + 512))
    assert np.abs(model.params[0]).max() <= limit
    assert all(np.all(b == 0) for b in model.params[1::2])


def test_zero_weights_give_half(m3):
    model = init_model(3, seed=0)
    model.params = [np.zeros_like(p) for p in model.params]
    np.testing.assert_array_equal(forward(model, build_features(m3)), 0.5)


def test_output_bias_only(m3):
    model = init_model(3, seed=0)
    model.params = [np.zeros_like(p) for p in model.params]
    model.params[-1][:] = 10.0
    np.testing.assert_allclose(forward(model, build_features(m3)), 1 / (1 + np.exp(-10)), rtol=1e-15)
    assert forward(model, build_features(m3))[0] == pytest.approx(0.9999546021312976, rel=1e-15)


def test_rows_are_independent():
    features, _ = toy_problem()
    model = init_model(4, seed=3)
    perm = np.random.default_rng(1).permutation(len(features))
    permuted = FeatureSet(features.values[perm], 0.0, 1.0)
    np.testing.assert_array_equal(forward(model, permuted), forward(model, features)[perm])


def test_width_mismatch():
    features, _ = toy_problem()
    with pytest.raises(ValueError, match="width"):
        forward(init_model(5, seed=0), features)


def test_loss_single_term():
    assert loss(np.array([0.5]), AccuracyCurve([0.25])) == pytest.approx(0.0625, abs=1e-16)


def test_loss_two_points():
    assert loss(np.array([1.0, 0.0]), AccuracyCurve([0.5, 0.5])) == 0.0


def test_loss_zero_at_exact_fit():
    chat = np.random.default_rng(0).uniform(0.1, 0.9, 20)
    observed = AccuracyCurve([np.mean(chat ** (k - 1)) for k in range(2, 12)])
    assert loss(chat, observed) == pytest.approx(0.0, abs=1e-30)


def test_loss_is_mean_over_k():
    chat = np.array([0.3, 0.8])
    observed = AccuracyCurve([0.9, 0.1, 0.2])
    expected = np.mean([(np.mean(chat ** (k - 1)) - observed.at(k)) ** 2 for k in (2, 3, 4)])
    assert loss(chat, observed) == pytest.approx(expected, rel=1e-14)
    strided = np.mean([(np.mean(chat ** (k - 1)) - observed.at(k)) ** 2 for k in (2, 4)])
    assert loss(chat, observed, k_stride=2) == pytest.approx(strided, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_loss_invariant_to_row_permutation(N, k1, seed):
    rng = np.random.default_rng(seed)
    chat = rng.uniform(0, 1, N)
    observed = AccuracyCurve(np.sort(rng.uniform(0, 1, k1 - 1))[::-1])
    assert loss(rng.permutation(chat), observed) == pytest.approx(loss(chat, observed), rel=1e-12, abs=1e-15)


def test_chat_gradient_matches_finite_difference():
    rng = np.random.default_rng(4)
    chat = rng.uniform(0.1, 0.9, 6)
    observed = AccuracyCurve([0.7, 0.5, 0.4, 0.3])
    _, grad = cleanex.loss_and_grad(chat, observed)
    for i in range(chat.size):
        e = np.zeros_like(chat)
        e[i] = 1e-6
        numeric = (loss(chat + e, observed) - loss(chat - e, observed)) / 2e-6
        assert grad[i] == pytest.approx(numeric, rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_parameter_gradients(seed):
    features, observed = toy_problem(seed=100 + seed)
    model = init_model(4, seed=seed)
    worst, checked, skipped = gradient_check(model, features, observed, np.random.default_rng(seed))
    assert checked > 400 and skipped < 10
    assert worst < 1e-4


def test_zero_iterations_returns_initialization():
    features, observed = toy_problem()
    model, trace = train(features, observed, iters=0, seed=11)
    init = init_model(4, seed=11)
    for a, b in zip(model.params, init.params):
        np.testing.assert_array_equal(a, b)
    assert trace.losses.size == 0


def test_first_adam_step_is_signed_lr():
    features, observed = toy_problem()
    init = init_model(4, seed=2)
    _, grads = cleanex.param_gradients(init, features, observed)
    model, _ = train(features, observed, iters=1, lr=1e-3, seed=2)
    for before, after, g in zip(init.params, model.params, grads):
        np.testing.assert_allclose(after - before, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-18)
        big = np.abs(g) > 1e-4
        np.testing.assert_allclose((after - before)[big], -1e-3 * np.sign(g[big]), rtol=1e-3)


def test_training_reduces_loss():
    rng = np.random.default_rng(5)
    features = FeatureSet(rng.standard_normal((4, 3)), 0.0, 1.0)
    observed = power_mean_curve(np.array([0.95, 0.8, 0.6, 0.3]), 3, "observed")
    _, trace = train(features, observed, iters=200, lr=1e-3, seed=0, hidden=(64, 32))
    assert trace.final_loss < trace.losses[0]
    _, trace = train(features, observed, iters=200, seed=0)
    assert trace.final_loss < trace.losses[0]


def test_training_is_deterministic():
    features, observed = toy_problem()
    a, _ = train(features, observed, iters=25, seed=9)
    b, _ = train(features, observed, iters=25, seed=9)
    for x, y in zip(a.params, b.params):
        assert x.tobytes() == y.tobytes()


def test_float32_training_runs():
    features, observed = toy_problem()
    model, trace = train(features, observed, iters=50, seed=1, dtype=np.float32)
    assert model.params[0].dtype == np.float32
    assert np.all(np.isfinite(trace.losses))


def test_divergence_is_reported():
    features, observed = toy_problem()
    bad = FeatureSet(features.values.copy(), 0.0, 1.0)
    bad.values[2, 1] = np.nan
    with pytest.raises(TrainingDivergedError, match="iteration 0") as err:
        train(bad, observed, iters=5, seed=0)
    assert err.value.iteration == 0


def test_observed_must_match_width():
    features, _ = toy_problem()
    with pytest.raises(ValueError):
        train(features, AccuracyCurve([0.5, 0.4]), iters=1)


def test_extrapolate_saturated():
    curve = extrapolate(np.full(10, 1 - 1e-12), 1000)
    np.testing.assert_allclose(curve.values, 1.0, atol=1e-8)


def test_extrapolate_half():
    curve = extrapolate(np.full(4, 0.5), 50)
    np.testing.assert_allclose(curve.values, 0.5 ** (curve.ks - 1), rtol=1e-12)


def test_extrapolate_m3_c_values():
    assert extrapolate(np.array([1.0, 0.5, 0.5]), 3).at(3) == pytest.approx(0.5, abs=1e-11)


def test_extrapolate_rejects_out_of_range():
    with pytest.raises(ValueError):
        extrapolate(np.array([0.2, -0.1]), 5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.integers(2, 300))
def test_extrapolated_curves_are_valid(c, k2):
    curve = extrapolate(np.array(c), k2)
    assert curve.is_valid()
    assert np.all(curve.values >= 0) and np.all(curve.values < 1)


def test_model_file_roundtrip(tmp_path):
    features, observed = toy_problem()
    model, _ = train(features, observed, iters=3, seed=0, hidden=(16, 8))
    path = tmp_path / "model.clnx"
    save_model(model, path)
    data = path.read_bytes()
    assert data[:5] == b"CLNX1"
    assert struct.unpack_from("<5I", data, 5) == (4, 4, 16, 8, 1)
    back = load_model(path)
    assert back.dims == model.dims and back.step == 3 and back.iters == 3
    for group in ("params", "moment1", "moment2"):
        for a, b in zip(getattr(model, group), getattr(back, group)):
            assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(forward(back, features), forward(model, features))


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="CLNX1"):
        load_model(path)


def test_fit_and_predict_share_scaling(m3):
    model, trace, chat = cleanex.fit(m3, iters=5, seed=0, hidden=(8, 4))
    curve = cleanex.predict(model, m3, 10)
    np.testing.assert_allclose(curve.values, extrapolate(chat, 10).values)
    assert model.feature_std == pytest.approx(raw_features(m3).std())
