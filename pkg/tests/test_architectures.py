import numpy as np
import pytest

from mlbcd.architectures import MSCALE_LADDERS, NAMES, REFERENCE_COUNTS, build, build_initialized, spec


def test_reference_counts_within_bias_slack():
    for name, counts in REFERENCE_COUNTS.items():
        cn = build(name)
        assert len(cn.sizes) == len(counts)
        for got, want in zip(cn.sizes, counts):
            assert abs(got - want) <= 1, (name, got, want)


def test_sl1_count():
    assert build("SL1").sizes == (40041,)


def test_ml2_coarse():
    assert build("ML2").sizes == (40041, 20601)


def test_pwwp_structure():
    cn = build("PWWP")
    assert cn.n_blocks == 4
    for net in cn.subnets:
        assert net.hidden_widths == (100, 100, 100)
    assert cn.subnets[0].n_scales == 0
    assert cn.subnets[0].scaling.kind == "none"
    assert [s.scaling.init_std for s in cn.subnets[1:]] == [20.0, 40.0, 60.0]
    for net in cn.subnets[1:]:
        assert net.n_scales == 100
        assert str(net.activations[0]) == "sfm(0.5)"
        assert [a.kind for a in net.activations[1:]] == ["tanh", "tanh"]


def test_mscale_structure():
    cn = build("MSCALE")
    assert cn.n_blocks == 4
    assert [len(l) for l in MSCALE_LADDERS] == [20, 20, 21, 20]
    assert MSCALE_LADDERS[0][0] == 0.5 and MSCALE_LADDERS[0][-1] == 10.0
    assert MSCALE_LADDERS[2][-1] == MSCALE_LADDERS[3][0] == 51.0
    first = [str(s.activations[0]) for s in cn.subnets]
    assert first == ["sfm(1)", "sfm(0.5)", "sfm(0.5)", "sfm(0.5)"]
    assert cn.subnets[0].activations[1].kind == "tanh"
    assert all(s.activations[1].kind == "s2relu" for s in cn.subnets[1:])
    assert np.array_equal(cn.subnets[2].fixed_scales()[:22], np.resize(np.arange(31.0, 52.0), 22))


@pytest.mark.parametrize("name", NAMES)
def test_param_count_formula(name):
    cn = build(name)
    for net in cn.subnets:
        count, fan_in = 0, net.input_dim
        for w, act in zip(net.hidden_widths, net.activations):
            count += fan_in * w + w
            fan_in = w * (2 if act.kind == "sfm" else 1)
        count += fan_in + 1 + net.n_scales
        assert net.param_count == count


def test_downscaled_overrides():
    cn = build("ML1", width=40)
    assert [s.hidden_widths for s in cn.subnets] == [(40, 40, 40)] * 2
    assert build("PWWP", width=20).subnets[3].n_scales == 20
    assert spec("sl1", width=56).subnets[0].hidden_widths == (56, 56, 56)


def test_unknown_name():
    with pytest.raises(KeyError):
        build("ML9")


def test_initialized_reproducible():
    cn, x = build_initialized("PWWP", 3, width=10)
    _, y = build_initialized("PWWP", 3, width=10)
    assert x.shape == (cn.n,) and np.array_equal(x, y)
