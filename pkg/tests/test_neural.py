"""Networks, gradients, ADAM, early stopping, and the weights file."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uasml.narx import NarxDataset, NarxConfig, ScalerSet
from uasml.neural import (
    AdamState, EpochMetrics, MlpModel, MlpSpec, TrainConfig, adam_step,
    count_params, forward, init, init_adam, load_model, loss_and_grads,
    metric_mae, metric_mse, save_model, train)
from uasml.rng import stream


# -- specs and parameter counts -------------------------------------------------

def test_count_params_matches_published_network_sizes():
    # oracle: sum of (fan_in + 1) * fan_out over consecutive layer pairs
    assert count_params(MlpSpec(18, (100, 90), ("tanh", "tanh"))) == 11081
    assert count_params(MlpSpec(18, (150, 90, 150, 90, 150, 90),
                                ("tanh",) * 6)) == 71011
    assert count_params(MlpSpec(1, (), ())) == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(0, (4,), ("relu",))
    with pytest.raises(ValueError):
        MlpSpec(3, (0,), ("relu",))
    with pytest.raises(ValueError):
        MlpSpec(3, (4, 4), ("relu",))
    with pytest.raises(ValueError):
        MlpSpec(3, (4,), ("sigmoid",))
    with pytest.raises(ValueError):
        MlpSpec(3, (4,), ("relu",), learning_rate=-1.0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=300, max_epochs=300)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(beta2=1.0)


# -- initialization --------------------------------------------------------------

def test_init_deterministic_per_seed():
    spec = MlpSpec(5, (7, 3), ("relu", "tanh"))
    a = init(spec, stream(3, "init"))
    b = init(spec, stream(3, "init"))
    c = init(spec, stream(4, "init"))
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    assert any(not np.array_equal(Wa, Wc)
               for Wa, Wc in zip(a.weights, c.weights))
    assert all(np.all(bv == 0.0) for bv in a.biases)


def test_init_glorot_uniform_variance():
    # variance of U(-L, L) is L^2/3 with L = sqrt(2/(fan_in+fan_out))
    spec = MlpSpec(1000, (1000,), ("tanh",))
    m = init(spec, stream(0, "init-var"))
    W = m.weights[0]
    want = 2.0 / 2000.0 / 3.0
    assert abs(W.var() - want) / want < 0.20
    assert np.abs(W).max() <= math.sqrt(2.0 / 2000.0)


# -- forward pass ----------------------------------------------------------------

def _fixed_221():
    spec = MlpSpec(2, (2,), ("tanh",))
    m = init(spec, stream(0, "fw"))
    m.weights[0] = np.array([[0.5, -0.3], [0.2, 0.4]])
    m.biases[0] = np.array([0.1, -0.2])
    m.weights[1] = np.array([[0.7], [-0.6]])
    m.biases[1] = np.array([0.05])
    return m


def test_forward_matches_hand_computed_221_network():
    m = _fixed_221()
    x = np.array([[1.0, 2.0]])
    z1 = [0.5 * 1 + 0.2 * 2 + 0.1, -0.3 * 1 + 0.4 * 2 - 0.2]
    want = 0.7 * math.tanh(z1[0]) - 0.6 * math.tanh(z1[1]) + 0.05
    assert forward(m, x)[0] == pytest.approx(want, rel=1e-14)


def test_forward_zero_weights_and_tanh_bound():
    spec = MlpSpec(3, (4,), ("tanh",))
    m = init(spec, stream(1, "fw0"))
    for W in m.weights:
        W[:] = 0.0
    assert np.allclose(forward(m, np.ones((5, 3))), 0.0)

    probe = MlpSpec(1, (1,), ("tanh",))
    p = init(probe, stream(2, "fw-b"))
    p.weights[0][:] = 2.0
    p.weights[1][:] = 1.0
    out = forward(p, np.array([[-3.0], [3.0]]))
    assert np.all(np.abs(out) < 1.0)
    assert np.abs(out).max() > 0.999


def test_forward_rejects_wrong_width():
    m = init(MlpSpec(4, (3,), ("relu",)), stream(0, "fw-w"))
    with pytest.raises(ValueError):
        forward(m, np.ones((2, 5)))


# -- gradients -------------------------------------------------------------------

def _fd_check(model, X, y, h=1e-6, atol=1e-9):
    """Largest relative error between backprop and central differences.

    Components whose absolute disagreement stays below ``atol`` are treated
    as matching: the difference quotient's roundoff floor (machine epsilon
    on the loss divided by 2h) is about 1e-10, so below ``atol`` the
    comparison would measure noise, not gradients."""
    mse0, dW, db = loss_and_grads(model, X, y)
    worst = 0.0
    for arrs, grads in ((model.weights, dW), (model.biases, db)):
        for A, G in zip(arrs, grads):
            flat = A.ravel()
            gflat = G.ravel()
            for i in range(flat.shape[0]):
                keep = flat[i]
                flat[i] = keep + h
                up, _, _ = loss_and_grads(model, X, y)
                flat[i] = keep - h
                dn, _, _ = loss_and_grads(model, X, y)
                flat[i] = keep
                fd = (up - dn) / (2.0 * h)
                if abs(fd - gflat[i]) < atol:
                    continue
                denom = max(abs(fd), abs(gflat[i]))
                worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst


def test_gradients_match_finite_differences_on_reference_net():
    rng = stream(11, "fd")
    spec = MlpSpec(18, (10, 10), ("tanh", "relu"))
    m = init(spec, rng)
    X = rng.normal(size=(6, 18))
    y = rng.normal(size=6)
    assert _fd_check(m, X, y) < 1e-5


@pytest.mark.parametrize("depth", [1, 2, 3, 4, 5, 6, 7])
def test_gradients_match_finite_differences_all_depths(depth):
    rng = stream(100 + depth, "fd-depth")
    acts = tuple("relu" if k % 2 else "tanh" for k in range(depth))
    m = init(MlpSpec(3, (4,) * depth, acts), rng)
    # zero biases put relu pre-activations exactly on the kink, where a
    # difference quotient straddles two slopes; nudge them off it
    for b in m.biases:
        b += 0.05
    X = rng.normal(size=(5, 3))
    y = rng.normal(size=5)
    assert _fd_check(m, X, y) < 1e-5


def test_perfect_fit_has_zero_loss_and_gradients():
    rng = stream(5, "fd0")
    m = init(MlpSpec(4, (6,), ("tanh",)), rng)
    X = rng.normal(size=(8, 4))
    y = forward(m, X)
    mse, dW, db = loss_and_grads(m, X, y)
    assert mse == 0.0
    assert all(np.allclose(g, 0.0) for g in dW + db)


def test_relu_dead_unit_gets_zero_incoming_gradient():
    m = init(MlpSpec(2, (2,), ("relu",)), stream(6, "dead"))
    # unit 0 sees only negative pre-activations over the whole batch
    m.weights[0] = np.array([[-1.0, 0.3], [-1.0, 0.2]])
    m.biases[0] = np.array([-5.0, 0.0])
    X = np.abs(stream(6, "dead-x").normal(size=(7, 2)))
    y = np.ones(7)
    _, dW, db = loss_and_grads(m, X, y)
    assert np.allclose(dW[0][:, 0], 0.0)
    assert db[0][0] == 0.0
    assert not np.allclose(dW[0][:, 1], 0.0)


def test_empty_batch_rejected():
    m = init(MlpSpec(3, (2,), ("relu",)), stream(7, "empty"))
    with pytest.raises(ValueError):
        loss_and_grads(m, np.empty((0, 3)), np.empty(0))


# -- metrics ---------------------------------------------------------------------

def test_metric_oracles():
    assert metric_mae(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert metric_mae(np.array([2.0, -1.0]), np.array([1.0, 2.0])) == 2.0
    assert metric_mse(np.array([2.0, -1.0]), np.array([1.0, 2.0])) == 5.0
    with pytest.raises(ValueError):
        metric_mae(np.empty(0), np.empty(0))
    with pytest.raises(ValueError):
        metric_mse(np.ones(2), np.ones(3))


@given(st.integers(min_value=1, max_value=100),
       st.integers(min_value=0, max_value=10**6))
@settings(max_examples=60, deadline=None)
def test_mae_never_exceeds_rmse(n, seed):
    rng = stream(seed, "mae-rmse")
    pred = rng.normal(size=n) * rng.uniform(0.1, 10.0)
    y = rng.normal(size=n)
    assert metric_mae(pred, y) <= math.sqrt(metric_mse(pred, y)) + 1e-15


# -- ADAM ------------------------------------------------------------------------

def test_adam_update_invariant_to_loss_scaling():
    # scaling the loss by c scales m by c and sqrt(v) by c, so the step is
    # unchanged up to the epsilon guard
    rng = stream(8, "adam-c")
    spec = MlpSpec(4, (5,), ("tanh",), learning_rate=1e-3)
    base = init(spec, rng)
    X = rng.normal(size=(10, 4))
    y = rng.normal(size=10)
    cfg = TrainConfig()

    models = []
    for c in (1.0, 10.0):
        m = MlpModel(spec=spec, weights=[W.copy() for W in base.weights],
                     biases=[b.copy() for b in base.biases])
        state = init_adam(m)
        for _ in range(3):
            _, dW, db = loss_and_grads(m, X, y)
            dW = [c * g for g in dW]
            db = [c * g for g in db]
            adam_step(m, dW, db, state, cfg)
        models.append(m)
    for Wa, Wb in zip(models[0].weights, models[1].weights):
        assert np.allclose(Wa, Wb, rtol=1e-5, atol=1e-12)


# -- training --------------------------------------------------------------------

def _toy_dataset(n=240, seed=0, noise=0.0, val_random=False):
    """1-D dataset for y = 2x on [-1, 1] wrapped as a NarxDataset."""
    rng = stream(seed, "toy")
    x = rng.uniform(-1.0, 1.0, size=n)
    y = 2.0 * x + noise * rng.normal(size=n)
    if val_random:
        k = int(0.7 * n)
        y[k:] = rng.uniform(-1.0, 1.0, size=n - k)
    scalers = ScalerSet(feature_lo=np.array([-1.0]), feature_hi=np.array([1.0]),
                        target_lo=-1.0, target_hi=1.0)
    k = int(0.7 * n)
    k2 = int(0.85 * n)
    return NarxDataset(
        X=x[:, None], y=y, scalers=scalers,
        split_rows={"train": np.arange(k), "validation": np.arange(k, k2),
                    "test": np.arange(k2, n)},
        feature_names=("x",), target="y", config=NarxConfig(0, 1))


def test_zero_learning_rate_leaves_weights_unchanged():
    ds = _toy_dataset()
    m0 = init(MlpSpec(1, (6,), ("tanh",), learning_rate=0.0), stream(1, "lr0"))
    cfg = TrainConfig(max_epochs=3, patience=2, seed=5)
    m1 = train(m0, ds, cfg)
    for Wa, Wb in zip(m0.weights, m1.weights):
        assert np.array_equal(Wa, Wb)
    assert m1.epochs_trained == 3


def test_linear_task_converges():
    # single affine neuron: the loss is convex, so ADAM must reach the
    # exact solution y = 2x well inside the epoch budget
    ds = _toy_dataset()
    m0 = init(MlpSpec(1, (), (), learning_rate=5e-2), stream(2, "lin"))
    m1 = train(m0, ds, TrainConfig(seed=3))
    assert min(r.train_mse for r in m1.history) < 1e-4
    Xt, yt = ds.rows("test")
    assert metric_mse(forward(m1, Xt), yt) < 1e-4
    assert m1.epochs_trained <= 300
    assert m1.weights[0][0, 0] == pytest.approx(2.0, abs=1e-2)


def test_plateau_stops_exactly_patience_after_best():
    # validation targets are uncorrelated noise: validation MSE cannot keep
    # improving, so the stop lands exactly patience epochs past the best
    ds = _toy_dataset(val_random=True, seed=9)
    m0 = init(MlpSpec(1, (6,), ("tanh",), learning_rate=5e-3), stream(4, "plat"))
    cfg = TrainConfig(max_epochs=200, patience=12, seed=6)
    m1 = train(m0, ds, cfg)
    vals = [r.val_mse for r in m1.history]
    best_epoch = int(np.argmin(vals)) + 1
    assert m1.stopped_early
    assert m1.epochs_trained == best_epoch + cfg.patience
    # restored weights reproduce the best recorded validation loss exactly
    Xv, yv = ds.rows("validation")
    assert metric_mse(forward(m1, Xv), yv) == vals[best_epoch - 1]


def test_divergence_raises_with_epoch_index():
    # a catastrophic learning rate overflows the second forward pass: the
    # loss goes non-finite and training must fail loudly, naming the epoch
    ds = _toy_dataset()
    m0 = init(MlpSpec(1, (8,), ("relu",), learning_rate=1e200),
              stream(5, "div"))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(ValueError, match="epoch"):
            train(m0, ds, TrainConfig(max_epochs=50, patience=10, seed=7))


def test_training_is_deterministic():
    ds = _toy_dataset()
    spec = MlpSpec(1, (5,), ("relu",), learning_rate=3e-3)
    cfg = TrainConfig(max_epochs=25, patience=20, seed=11)
    a = train(init(spec, stream(12, "det")), ds, cfg)
    b = train(init(spec, stream(12, "det")), ds, cfg)
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    assert a.history == b.history


def test_train_requires_validation_rows():
    ds = _toy_dataset()
    ds.split_rows["validation"] = np.empty(0, dtype=int)
    m0 = init(MlpSpec(1, (4,), ("tanh",)), stream(13, "noval"))
    with pytest.raises(ValueError):
        train(m0, ds, TrainConfig())


def test_history_minimum_sits_at_restored_epoch():
    ds = _toy_dataset(noise=0.05, seed=14)
    m0 = init(MlpSpec(1, (10,), ("tanh",), learning_rate=1e-2),
              stream(14, "hist"))
    m1 = train(m0, ds, TrainConfig(max_epochs=60, patience=30, seed=15))
    Xv, yv = ds.rows("validation")
    assert metric_mse(forward(m1, Xv), yv) == min(r.val_mse for r in m1.history)
    assert len(m1.history) == m1.epochs_trained <= 60


# -- persistence -----------------------------------------------------------------

def test_weights_file_round_trips_bit_exactly(tmp_path):
    ds = _toy_dataset()
    m0 = init(MlpSpec(1, (6, 4), ("tanh", "relu"), learning_rate=2e-3),
              stream(16, "save"))
    m1 = train(m0, ds, TrainConfig(max_epochs=8, patience=4, seed=17))
    path = tmp_path / "model.json"
    save_model(m1, path)
    back = load_model(path)
    assert back.spec == m1.spec
    assert back.seed == m1.seed
    assert back.epochs_trained == m1.epochs_trained
    assert back.stopped_early == m1.stopped_early
    assert back.history == m1.history
    for Wa, Wb in zip(m1.weights, back.weights):
        assert np.array_equal(Wa, Wb)
    for ba, bb in zip(m1.biases, back.biases):
        assert np.array_equal(ba, bb)
    X = stream(18, "save-x").uniform(-1, 1, size=(20, 1))
    assert np.array_equal(forward(m1, X), forward(back, X))
    assert np.array_equal(back.scalers.feature_lo, m1.scalers.feature_lo)
    assert back.scalers.target_hi == m1.scalers.target_hi


def test_weights_file_header_is_versioned(tmp_path):
    m = init(MlpSpec(2, (3,), ("relu",)), stream(19, "ver"))
    path = tmp_path / "m.json"
    save_model(m, path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "uasml-mlp/1"
    assert doc["spec"]["hidden"] == [3]
    doc["format"] = "uasml-mlp/9"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)


def test_model_shape_validation():
    spec = MlpSpec(3, (4,), ("relu",))
    good = init(spec, stream(20, "shape"))
    with pytest.raises(ValueError):
        MlpModel(spec=spec, weights=good.weights[:1] + [np.zeros((9, 1))],
                 biases=good.biases)
    with pytest.raises(ValueError):
        MlpModel(spec=spec, weights=good.weights, biases=good.biases,
                 history=[], epochs_trained=3)
