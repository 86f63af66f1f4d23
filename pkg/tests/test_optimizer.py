import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlbcd.exceptions import NonFiniteError
from mlbcd.galerkin import random_quadratic
from mlbcd.optimizer import AdamConfig, AdamState, GDConfig, adam_step, gd_step, lr_at, restart


def test_gd_zero_gradient():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(gd_step(x, np.zeros(3), 0.1), x)


def test_gd_scalar_quadratic():
    assert gd_step(np.array([1.0]), np.array([1.0]), 0.5)[0] == 0.5


def test_gd_block_locality():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(6)
    g = np.zeros(6)
    g[2:4] = rng.standard_normal(2)
    y = gd_step(x, g, 0.3)
    assert np.array_equal(y[:2], x[:2]) and np.array_equal(y[4:], x[4:])
    assert not np.array_equal(y[2:4], x[2:4])


def test_gd_config_rejects_nonpositive():
    with pytest.raises(ValueError):
        GDConfig(0.0)
    with pytest.raises(ValueError):
        gd_step(np.ones(1), np.ones(1), -1.0)


@given(seed=st.integers(0, 10_000), frac=st.floats(0.05, 0.99))
def test_gd_monotone_on_quadratic(seed, frac):
    qp = random_quadratic(1 + seed % 6, seed, cond=30.0)
    alpha = frac / qp.lipschitz()
    x = np.random.default_rng(seed).standard_normal(qp.n1 + qp.n2)
    f = qp.objective(x)
    for k in range(30):
        g = qp.gradient(x)
        pad = np.zeros_like(g)
        blk = qp.blocks()[k % 2]
        pad[blk] = g[blk]
        x = gd_step(x, pad, alpha)
        fn = qp.objective(x)
        assert fn <= f + 1e-12 * max(1.0, abs(f))
        f = fn


def test_lr_examples():
    cfg = AdamConfig()
    assert lr_at(cfg, 0) == 2e-4
    assert lr_at(cfg, 1) == pytest.approx(1.99998e-4, rel=1e-15)
    assert lr_at(AdamConfig(decay=1.0), 12345) == 2e-4


@given(e=st.integers(0, 10**6))
def test_lr_strictly_decreasing(e):
    cfg = AdamConfig()
    assert lr_at(cfg, e + 1) < lr_at(cfg, e)


def test_adam_zero_gradient_fresh_state():
    x = np.array([0.3, -0.1])
    _, y = adam_step(AdamState.zeros(2), x, np.zeros(2), AdamConfig())
    assert np.array_equal(y, x)


def test_adam_first_step_is_lr():
    cfg = AdamConfig(lr0=1e-3)
    state, y = adam_step(AdamState.zeros(1), np.array([0.0]), np.array([1.0]), cfg)
    assert y[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert (state.t, state.e) == (1, 1)


def test_adam_identical_blocks():
    cfg = AdamConfig()
    rng = np.random.default_rng(1)
    g = rng.standard_normal(3)
    x = np.concatenate([np.ones(3), np.ones(3)])
    s1, s2 = AdamState.zeros(3), AdamState.zeros(3)
    for _ in range(5):
        s1, x = adam_step(s1, x, g, cfg, slice(0, 3))
        s2, x = adam_step(s2, x, g, cfg, slice(3, 6))
    assert np.array_equal(x[:3], x[3:])


def test_adam_block_locality():
    x = np.arange(5.0)
    _, y = adam_step(AdamState.zeros(2), x, np.ones(2), AdamConfig(), slice(1, 3))
    assert np.array_equal(y[[0, 3, 4]], x[[0, 3, 4]])


def test_adam_nonfinite():
    with pytest.raises(NonFiniteError):
        adam_step(AdamState.zeros(2), np.zeros(2), np.array([1.0, np.nan]), AdamConfig())


def test_restart_keeps_epoch_and_lr():
    cfg = AdamConfig()
    state = AdamState.zeros(2)
    x = np.zeros(2)
    for _ in range(7):
        state, x = adam_step(state, x, np.ones(2), cfg)
    lr_before = lr_at(cfg, state.e)
    fresh = restart(state, size=4)
    assert fresh.e == 7 and fresh.t == 0
    assert np.array_equal(fresh.m, np.zeros(4)) and np.array_equal(fresh.v, np.zeros(4))
    assert lr_at(cfg, fresh.e) == lr_before
    _, y = adam_step(restart(state), x, np.zeros(2), cfg)
    assert np.array_equal(y, x)


def test_restart_resets_bias_correction():
    # after a restart the first step has magnitude lr again, which is the source of loss peaks
    cfg = AdamConfig(lr0=1e-2, decay=1.0)
    state = AdamState.zeros(1)
    x = np.zeros(1)
    for _ in range(50):
        state, x = adam_step(state, x, np.array([1.0]), cfg)
    state, y = adam_step(restart(state), x, np.array([-1.0]), cfg)
    assert y[0] - x[0] == pytest.approx(1e-2, rel=1e-6)


def test_adam_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(decay=0.0)
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)
