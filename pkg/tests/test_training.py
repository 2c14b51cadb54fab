import math

import numpy as np
import pytest

from kshnn.dvr import build_grid
from kshnn.energynet import EnergyNet, QuadraticEnergy
from kshnn.ho import build_ho_dataset, ho_hamiltonian
from kshnn.training import AdamState, TrainConfig, TrainingDivergedError, adam_step, train
from kshnn.trajectory import TrajectoryDataset

SMALL_GRID = build_grid(-5, 5, 24)


def _small_dataset(M=3, n_t=60):
    return build_ho_dataset(M, SMALL_GRID, 0.0, 4 * math.pi, n_t)


def _net(seed=0):
    return EnergyNet.initialize(2, 4, "tanh", seed)


def _grads(net, value):
    return {k: np.full_like(v, value, dtype=float) for k, v in net.params().items()}


def test_adam_zero_gradient_leaves_parameters():
    net = _net()
    state = AdamState.zeros_like(net.params())
    cfg = TrainConfig()
    for _ in range(5):
        new, state = adam_step(net, _grads(net, 0.0), state, cfg)
    for k in net.params():
        np.testing.assert_array_equal(new.params()[k], net.params()[k])
    assert state.step_count == 5


def test_adam_first_step_closed_form():
    net = _net(1)
    cfg = TrainConfig(learning_rate=1e-2)
    g = {k: np.random.default_rng(2).normal(size=np.shape(v)) for k, v in net.params().items()}
    new, state = adam_step(net, g, AdamState.zeros_like(net.params()), cfg)
    for k, p in net.params().items():
        expected = p - cfg.learning_rate * g[k] / (np.abs(g[k]) + cfg.epsilon)
        np.testing.assert_allclose(new.params()[k], expected, rtol=0, atol=1e-12)
        np.testing.assert_allclose(state.first_moment[k], (1 - cfg.beta1) * g[k], rtol=1e-15)
        np.testing.assert_allclose(state.second_moment[k], (1 - cfg.beta2) * g[k] ** 2, rtol=1e-15)


def test_adam_constant_gradient_unit_step():
    net = _net(2)
    cfg = TrainConfig(learning_rate=1e-4)
    state = AdamState.zeros_like(net.params())
    g = _grads(net, 0.3)
    for _ in range(10_000):
        prev = net.W1
        net, state = adam_step(net, g, state, cfg)
    step = prev - net.W1
    np.testing.assert_allclose(step, cfg.learning_rate, rtol=1e-6)


def test_adam_rejects_mismatched_gradient():
    net = _net()
    with pytest.raises(ValueError):
        adam_step(net, {"W1": net.W1}, AdamState.zeros_like(net.params()), TrainConfig())


@pytest.mark.parametrize("kwargs", [{"beta1": 1.0}, {"beta2": 0.0}, {"learning_rate": 0.0}, {"batch_size": 0},
                                    {"max_epochs": 0}, {"activation": "relu"}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_train_config_roundtrip():
    cfg = TrainConfig(learning_rate=3e-4, target_loss=1e-3, seed=9)
    assert TrainConfig.from_dict({**cfg.to_dict(), "unknown": 1}) == cfg
    assert TrainConfig().activation == "softplus"


def test_preconverged_quadratic_hook_returns_immediately():
    grid = build_grid(-10, 10, 250)
    ds = build_ho_dataset(3, grid, 0, 4 * math.pi, 30)
    res = train(ds, TrainConfig(target_loss=1e-8, max_epochs=50), net=QuadraticEnergy(ho_hamiltonian(grid)))
    assert len(res.history) == 1
    assert res.history[0][1] < 1e-10
    assert res.stopped_on_target


def test_target_above_initial_loss_stops_after_one_epoch():
    res = train(_small_dataset(), TrainConfig(target_loss=1e6, hidden=8, max_epochs=100))
    assert [e for e, _ in res.history] == [1]


def test_same_seed_bit_identical_history():
    ds = _small_dataset()
    cfg = TrainConfig(hidden=8, max_epochs=4, batch_size=32, seed=5)
    a, b = train(ds, cfg), train(ds, cfg)
    assert a.history == b.history
    for k in a.net.params():
        np.testing.assert_array_equal(a.net.params()[k], b.net.params()[k])
    c = train(ds, TrainConfig(hidden=8, max_epochs=4, batch_size=32, seed=6))
    assert c.history != a.history


def test_progress_records():
    seen = []
    train(_small_dataset(), TrainConfig(hidden=8, max_epochs=3), progress=seen.append)
    assert [r["epoch"] for r in seen] == [1, 2, 3]
    assert all(set(r) == {"epoch", "loss", "wall_time"} for r in seen)


def test_divergence_raises_with_history():
    ds = _small_dataset(1, 4)
    huge = TrajectoryDataset(ds.grid, ds.q, ds.p, 1e300 * np.ones_like(ds.q), ds.p_dot, ds.t, {})
    with pytest.raises(TrainingDivergedError) as err:
        train(huge, TrainConfig(hidden=4, max_epochs=3))
    assert err.value.history == []


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        train(_small_dataset(), TrainConfig(max_epochs=1), net=EnergyNet.initialize(3, 4))


def test_loss_history_decreases_over_windows():
    ds = _small_dataset(3, 80)
    res = train(ds, TrainConfig(hidden=32, max_epochs=150, batch_size=64, learning_rate=3e-3, seed=1))
    losses = np.array([l for _, l in res.history])
    windows = losses.reshape(3, 50).mean(axis=1)
    assert np.all(np.diff(windows) <= 0)
    assert np.all(np.isfinite(losses))
    assert windows[-1] < 0.1 * losses[0]
