import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlbcd.composite import (
    CompositeNetwork, block_gradients, composite_forward, composite_input_gradient, composite_laplacian,
    init_composite, load_params, propagate_group, save_params, split_gradient,
)
from mlbcd.exceptions import DimensionError
from mlbcd.network import InputScaling, SFM, SubNetwork, forward, input_gradient, input_laplacian, mlp


def two_block(seed=0):
    cn = CompositeNetwork((mlp((5, 4)), mlp((3,), first=SFM(0.5), scaling=InputScaling.learnable(2.0))))
    return cn, init_composite(cn, seed)


def lap_loss(cn, z):
    def loss(x):
        _, g, lap = propagate_group(cn.subnets, x, z)
        return jnp.sum((lap - 1.0) ** 2) + jnp.sum(g**2)
    return loss


def test_single_subnet_matches_forward():
    net = mlp((4, 4))
    cn = CompositeNetwork((net,))
    x = init_composite(cn, 2)
    z = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    assert np.array_equal(composite_forward(cn, x, z), forward(net, x, z))


def test_zero_tanh_sum():
    cn = CompositeNetwork((mlp((3,)), mlp((2, 2))))
    assert composite_forward(cn, np.zeros(cn.n), [0.4, -0.1]) == 0.0


def test_linear_sum():
    lin = SubNetwork(2, (), ())
    cn = CompositeNetwork((lin, lin))
    x = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    assert composite_forward(cn, x, [2.0, 3.0]) == 5.0
    assert composite_laplacian(cn, x, [2.0, 3.0]) == 0.0


def test_offsets_cover():
    cn, _ = two_block()
    assert cn.offsets[0] == 0
    assert cn.offsets[1] == cn.sizes[0]
    assert cn.n == sum(cn.sizes)
    assert cn.block_slice(1) == slice(cn.sizes[0], cn.n)


def test_length_mismatch():
    cn, x = two_block()
    with pytest.raises(DimensionError):
        composite_forward(cn, x[:-1], [0.0, 0.0])


def test_sum_of_parts():
    cn, x = two_block(3)
    z = np.random.default_rng(3).uniform(-1, 1, (9, 2))
    parts = cn.split(x)
    g = sum(input_gradient(s, p, z) for s, p in zip(cn.subnets, parts))
    lap = sum(input_laplacian(s, p, z) for s, p in zip(cn.subnets, parts))
    assert np.allclose(composite_input_gradient(cn, x, z), g, rtol=1e-14, atol=1e-15)
    assert np.allclose(composite_laplacian(cn, x, z), lap, rtol=1e-14, atol=1e-15)


def test_two_neuron_sum_laplacian_fd():
    one = SubNetwork(2, (1,), ("tanh",))
    cn = CompositeNetwork((one, one))
    x = np.array([0.7, -0.4, 0.1, 1.3, 0.0, -1.1, 0.5, 0.2, 0.8, 0.0])
    z = np.array([0.2, 0.3])
    e = 1e-4
    fd = sum((composite_forward(cn, x, z + e * u) - 2 * composite_forward(cn, x, z)
              + composite_forward(cn, x, z - e * u)) / e**2 for u in np.eye(2))
    lap = composite_laplacian(cn, x, z)
    assert abs(fd - lap) <= 1e-5 * abs(lap)


def test_single_block_gradient_is_full():
    cn = CompositeNetwork((mlp((4,)),))
    x = init_composite(cn, 1)
    blocks, norm = block_gradients(cn, lap_loss(cn, np.ones((3, 2))), x)
    assert len(blocks) == 1
    assert np.array_equal(blocks[0].padded, blocks[0].g)
    assert norm == pytest.approx(blocks[0].norm, rel=1e-15)


def test_independent_block_gets_zero_gradient():
    cn, x = two_block()
    n0 = cn.sizes[0]

    def loss(p):
        return jnp.sum(p[:n0] ** 2)

    blocks, _ = block_gradients(cn, loss, x)
    assert np.array_equal(blocks[1].g, np.zeros(cn.sizes[1]))


@given(seed=st.integers(0, 5000))
def test_pythagoras(seed):
    cn, x = two_block(seed)
    z = np.random.default_rng(seed).uniform(-1, 1, (6, 2))
    blocks, norm = block_gradients(cn, lap_loss(cn, z), x)
    assert abs(norm**2 - sum(b.norm**2 for b in blocks)) <= 1e-12 * norm**2
    total = sum(b.padded for b in blocks)
    assert np.array_equal(np.concatenate([b.g for b in blocks]), total)
    for b in blocks:
        assert b.norm == pytest.approx(np.linalg.norm(b.padded), rel=1e-15)


def test_block_update_locality():
    cn, x = two_block(4)
    z = np.random.default_rng(4).uniform(-1, 1, (6, 2))
    before = forward(cn.subnets[0], cn.split(x)[0], z)
    y = x.copy()
    y[cn.block_slice(1)] += 0.3
    assert np.array_equal(forward(cn.subnets[0], cn.split(y)[0], z), before)
    assert np.array_equal(y[cn.block_slice(0)], x[cn.block_slice(0)])


def test_identical_subnets_identical_gradients():
    net = mlp((4, 3))
    cn = CompositeNetwork((net, net))
    p = init_composite(CompositeNetwork((net,)), 7)
    x = np.concatenate([p, p])
    blocks, _ = block_gradients(cn, lap_loss(cn, np.random.default_rng(7).uniform(-1, 1, (5, 2))), x)
    assert np.array_equal(blocks[0].g, blocks[1].g)


def test_split_gradient_padding():
    cn, _ = two_block()
    g = np.arange(cn.n, dtype=float)
    parts = split_gradient(cn, g)
    assert np.array_equal(parts[0].padded[cn.block_slice(1)], np.zeros(cn.sizes[1]))


def test_params_file_roundtrip(tmp_path):
    cn, x = two_block(5)
    path = tmp_path / "p.txt"
    save_params(path, cn, x)
    assert path.read_text().startswith("# mlbcd-params 1\n")
    cn2, x2 = load_params(path)
    assert cn2 == cn
    assert np.array_equal(x2, x)
