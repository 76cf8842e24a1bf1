import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coinn.ann import (
    FeatureMismatch, NetworkParams, TrainConfig, TrainedModel, TrainingError, forward,
    init_params, jacobian, lm_fit, minmax_range, mre, restart_rng, train_multistart,
)
from coinn.ann import training as training_mod
from oracles import forward_scalar


def random_params(rng, n_in, n_hidden):
    lo = rng.uniform(-5, 5, n_in)
    in_scale = np.column_stack([lo, lo + rng.uniform(0.5, 10, n_in)])
    out_lo = rng.uniform(-100, 100)
    return NetworkParams(rng.normal(size=(n_hidden, n_in)), rng.normal(size=n_hidden),
                         rng.normal(size=n_hidden), rng.normal(), in_scale, (out_lo, out_lo + rng.uniform(1, 50)))


# -- mre ---------------------------------------------------------------------

def test_mre_hand_values():
    assert mre([1.0, 2.0], [1.1, 1.8]) == pytest.approx(10.0, rel=1e-14)
    assert mre([5.0, 6.0], [5.0, 6.0]) == 0.0
    assert mre([100.0], [110.0]) == pytest.approx(10.0)
    assert mre([100.0, 200.0], [150.0, 200.0]) == pytest.approx(25.0)
    assert mre([-4.0], [-5.0]) == pytest.approx(25.0)


def test_mre_zero_target():
    with pytest.raises(ZeroDivisionError):
        mre([0.0, 1.0], [1.0, 1.0])


def test_mre_length_mismatch():
    with pytest.raises(ValueError):
        mre([1.0, 2.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.1, 1e4), min_size=1, max_size=20), st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_mre_scale_invariant(targets, k, seed):
    t = np.array(targets)
    y = t * np.random.default_rng(seed).uniform(0.5, 1.5, t.size)
    assert mre(k * t, k * y) == pytest.approx(mre(t, y), rel=1e-9, abs=1e-12)


# -- scaling and forward pass -------------------------------------------------

def test_minmax_constant_column_padded():
    r = minmax_range(np.array([[2.0, 0.0, 1.0], [2.0, 0.0, 3.0]]))
    assert r.tolist() == [[1.0, 3.0], [-1.0, 1.0], [1.0, 3.0]]


def test_zero_weights_give_output_midpoint():
    p = NetworkParams.zeros(3, 4, np.tile([0.0, 10.0], (3, 1)), (20.0, 60.0))
    assert forward(p, [1.0, 2.0, 3.0]) == 40.0
    assert forward(p, np.ones((5, 3))).tolist() == [40.0] * 5


def test_single_unit_is_scaled_tanh():
    # one hidden unit with identity-range scaling reproduces tanh
    p = NetworkParams([[1.0]], [0.0], [1.0], 0.0, [[-1.0, 1.0]], (-1.0, 1.0))
    for a in np.linspace(-3, 3, 13):
        assert forward(p, [a]) == pytest.approx(math.tanh(a), abs=1e-15)


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for n_in, n_h in [(1, 1), (3, 6), (5, 15)]:
        p = random_params(rng, n_in, n_h)
        for _ in range(20):
            a = rng.uniform(-10, 10, n_in)
            ref = forward_scalar(p.w1.tolist(), p.b1.tolist(), p.w2.tolist(), p.b2,
                                 p.in_scale.tolist(), p.out_scale.tolist(), a.tolist())
            assert forward(p, a) == pytest.approx(ref, rel=1e-14, abs=1e-12)


def test_forward_extrapolates_finitely():
    rng = np.random.default_rng(1)
    p = random_params(rng, 3, 6)
    span = p.in_scale[:, 1] - p.in_scale[:, 0]
    far = p.in_scale[:, 1] + 10 * span
    y = forward(p, far)
    assert math.isfinite(y)
    # no clamping: beyond the range the inputs still change the output
    assert forward(p, far) != forward(p, p.in_scale[:, 1] + span)


def test_theta_order_round_trip():
    rng = np.random.default_rng(2)
    p = random_params(rng, 3, 4)
    assert p.n_weights == 4 * 5 + 1 == p.theta.size
    assert np.array_equal(p.theta[:12], p.w1.ravel())
    assert p.theta[-1] == p.b2
    q = p.with_theta(p.theta)
    assert np.array_equal(q.theta, p.theta)


def test_rejects_non_finite_weights():
    with pytest.raises(ValueError):
        NetworkParams([[np.nan]], [0.0], [1.0], 0.0, [[0, 1]], (0, 1))


# -- Jacobian ----------------------------------------------------------------

def finite_difference(p, batch, h=1e-6):
    theta = p.theta
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        cols.append((forward(p.with_theta(theta + e), batch) - forward(p.with_theta(theta - e), batch)) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("n_h", [1, 6, 15])
def test_jacobian_matches_central_differences(n_h):
    rng = np.random.default_rng(n_h)
    p = random_params(rng, 3, n_h)
    batch = rng.uniform(p.in_scale[:, 0], p.in_scale[:, 1], size=(8, 3))
    j = jacobian(p, batch)
    fd = finite_difference(p, batch)
    assert j.shape == (8, p.n_weights)
    assert np.max(np.abs(j - fd)) <= 1e-6 * max(1.0, np.max(np.abs(j)))


def test_jacobian_zero_output_weights():
    p = NetworkParams([[0.3, -0.2]], [0.1], [0.0], 0.0, [[0, 1], [0, 1]], (-1, 1))
    j = jacobian(p, [[0.5, 0.5]])
    # w1 and b1 columns vanish; w2 column is the hidden activation; b2 column is 1
    assert j[0, :3].tolist() == [0.0, 0.0, 0.0]
    assert j[0, 3] == pytest.approx(math.tanh(0.1))
    assert j[0, 4] == 1.0


def test_jacobian_duplicate_rows():
    rng = np.random.default_rng(3)
    p = random_params(rng, 2, 5)
    row = rng.uniform(-1, 1, 2)
    j = jacobian(p, np.vstack([row, row]))
    assert np.array_equal(j[0], j[1])


# -- Levenberg-Marquardt -----------------------------------------------------

def linear_problem(n=40):
    x = np.linspace(0, 1, n)[:, None]
    return x, 3.0 * x[:, 0] + 1.0


def test_lm_fits_linear_target():
    x, y = linear_problem()
    start = init_params(1, 2, minmax_range(x), minmax_range(y)[0], restart_rng(0, 0))
    res = lm_fit(start, x, y, TrainConfig(max_iter=200))
    assert res.mse < 1e-8 and res.n_iter <= 200
    params, history = res
    assert params is res.params and history is res.mse_history


def test_lm_history_strictly_decreasing():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, (50, 2))
    y = np.sin(3 * x[:, 0]) * x[:, 1]
    for damping in ("levenberg", "marquardt"):
        start = init_params(2, 6, minmax_range(x), minmax_range(y)[0], restart_rng(1, 0))
        res = lm_fit(start, x, y, TrainConfig(max_iter=100, damping=damping))
        h = res.mse_history
        assert all(b < a for a, b in zip(h, h[1:]))
        assert h[-1] < 0.1 * h[0]


def test_lm_grad_tol_stops_immediately_at_optimum():
    # zero-weight net on a constant-midpoint target is already stationary
    x = np.linspace(0, 1, 10)[:, None]
    y = np.full(10, 5.0)
    start = NetworkParams.zeros(1, 3, minmax_range(x), (4.0, 6.0))
    res = lm_fit(start, x, y, TrainConfig(grad_tol=1e-10))
    assert res.stop_reason == "grad_tol" and res.n_iter == 1 and res.mse_history == [0.0]


def test_lm_lambda_max_flags_divergence():
    # damping starts above the ceiling, so no step can be tried
    x, y = linear_problem()
    start = init_params(1, 2, minmax_range(x), minmax_range(y)[0], restart_rng(0, 0))
    res = lm_fit(start, x, y, TrainConfig(lambda_init=1.0, lambda_max=0.5))
    assert res.stop_reason == "lambda_max" and res.diverged
    assert np.array_equal(res.params.theta, start.theta) and len(res.mse_history) == 1


def test_lm_marquardt_fits_linear_target():
    x, y = linear_problem()
    start = init_params(1, 2, minmax_range(x), minmax_range(y)[0], restart_rng(0, 0))
    assert lm_fit(start, x, y, TrainConfig(max_iter=300, damping="marquardt")).mse < 1e-8


# -- multi-start -------------------------------------------------------------

def smooth_problem(seed=0, n=60):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 2))
    y = 2.0 + x[:, 0] ** 2 + np.sin(2 * x[:, 1])
    return (x[:40], y[:40]), (x[40:], y[40:])


def test_restart_streams_are_pure_functions():
    a = restart_rng(9, 3).uniform(size=5)
    assert np.array_equal(a, restart_rng(9, 3).uniform(size=5))
    assert not np.array_equal(a, restart_rng(9, 4).uniform(size=5))


def test_single_restart_equals_direct_fit():
    tr, va = smooth_problem()
    cfg = TrainConfig(n_restarts=1, max_iter=30, seed=17)
    model = train_multistart(tr, va, cfg, n_hidden=4)
    start = init_params(2, 4, minmax_range(tr[0]), minmax_range(tr[1])[0], restart_rng(17, 0))
    direct = lm_fit(start, tr[0], tr[1], cfg)
    assert np.array_equal(model.params.theta, direct.params.theta)
    assert model.chosen_restart == 0 and model.seed_used == 17


def test_multistart_deterministic_and_parallel_invariant():
    tr, va = smooth_problem(1)
    cfg = TrainConfig(n_restarts=6, max_iter=25, seed=3)
    a = train_multistart(tr, va, cfg, n_hidden=3)
    b = train_multistart(tr, va, cfg, n_hidden=3)
    c = train_multistart(tr, va, cfg, n_hidden=3, n_jobs=2)
    assert a.dumps() == b.dumps() == c.dumps()
    assert a.history == c.history


def test_multistart_selects_first_minimum():
    tr, va = smooth_problem(2)
    model = train_multistart(tr, va, TrainConfig(n_restarts=8, max_iter=20, seed=5), n_hidden=3)
    scores = [h["mre"] for h in model.history]
    assert model.chosen_restart == int(np.argmin(scores))
    assert min(scores) <= float(np.median(scores))
    assert mre(va[1], model.predict(va[0])) == pytest.approx(min(scores), rel=1e-12)


def test_multistart_train_selection():
    tr, va = smooth_problem(2)
    model = train_multistart(tr, va, TrainConfig(n_restarts=4, max_iter=10, selection="train"), n_hidden=2)
    assert mre(tr[1], model.predict(tr[0])) == pytest.approx(min(h["mre"] for h in model.history))


def test_multistart_all_restarts_non_finite(monkeypatch):
    tr, va = smooth_problem()

    def broken(*args, **kwargs):
        rec = {"restart": args[0][0], "mse": math.nan, "mre": math.inf, "n_iter": 0,
               "stop_reason": "lambda_max", "diverged": True}
        return rec, None

    monkeypatch.setattr(training_mod, "_run_restart", broken)
    with pytest.raises(TrainingError) as info:
        train_multistart(tr, va, TrainConfig(n_restarts=3, max_iter=1))
    assert len(info.value.history) == 3


# -- persistence --------------------------------------------------------------

def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    model = TrainedModel(random_params(rng, 3, 6), 12, 99, ("x", "ID", "sun_mishima"))
    path = tmp_path / "m.json"
    model.save(path)
    doc = json.loads(path.read_text())
    assert {"w1", "b1", "w2", "b2", "in_scale", "out_scale", "seed_used", "chosen_restart",
            "input_feature_names", "version", "n_in", "n_hidden"} <= set(doc)
    loaded = TrainedModel.load(path)
    batch = rng.uniform(-5, 5, (10, 3))
    assert np.array_equal(loaded.predict(batch), model.predict(batch))
    assert loaded.dumps() == model.dumps()


def test_model_feature_mismatch():
    model = TrainedModel(NetworkParams.zeros(2, 1), 0, 0, ("x", "ID"))
    with pytest.raises(FeatureMismatch):
        model.predict([[0.1, 0.2]], feature_names=("x", "G"))
    model.predict([[0.1, 0.2]], feature_names=("x", "ID"))


def test_model_unknown_version():
    doc = TrainedModel(NetworkParams.zeros(1, 1), 0, 0).to_dict()
    doc["version"] = 42
    with pytest.raises(ValueError, match="version"):
        TrainedModel.from_dict(doc)


def test_model_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.json"):
        TrainedModel.load(tmp_path / "nope.json")
