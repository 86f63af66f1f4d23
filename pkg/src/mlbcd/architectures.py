"""Named experiment architectures.

``ML1``-``ML3`` pair a fine and a coarse tanh network (hierarchical
context), ``SL1``/``SL2`` are single tanh networks, ``PWWP`` sums four
subnetworks with learnable Gaussian input scalings behind an SFM first
layer, and ``MSCALE`` sums four subnetworks with fixed scaling ladders and
s2ReLU activations.  Widths may be overridden for desk-scale runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mlbcd.composite import CompositeNetwork, init_composite
from mlbcd.network import S2RELU, SFM, TANH, InputScaling, SubNetwork

HIER_COARSE = {"ML1": 140, "ML2": 100, "ML3": 70}
SINGLE = {"SL1": 140, "SL2": 200}
# reference block counts omit the output bias
REFERENCE_COUNTS = {
    "ML1": (40040, 40040),
    "ML2": (40040, 20600),
    "ML3": (40040, 10220),
    "SL1": (40040,),
    "SL2": (81200,),
}
PWWP_STDS = (20.0, 40.0, 60.0)
MSCALE_LADDERS = (
    tuple(np.arange(1, 21) * 0.5),  # 0.5, 1, ..., 10
    tuple(float(v) for v in range(11, 31)),
    tuple(float(v) for v in range(31, 52)),
    tuple(float(v) for v in range(51, 71)),
)
NAMES = ("ML1", "ML2", "ML3", "SL1", "SL2", "PWWP", "MSCALE")


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    subnets: tuple
    expected_counts: tuple

    def build(self) -> CompositeNetwork:
        cn = CompositeNetwork(self.subnets)
        for got, want in zip(cn.sizes, self.expected_counts):
            if abs(got - want) > 1:
                raise AssertionError(f"{self.name}: block with {got} parameters, expected about {want}")
        return cn


def _tanh_net(width: int, depth: int, input_dim: int) -> SubNetwork:
    return SubNetwork(input_dim, (width,) * depth, (TANH,) * depth)


def _frequency_net(width, depth, input_dim, first, rest, scaling) -> SubNetwork:
    return SubNetwork(input_dim, (width,) * depth, (first,) + (rest,) * (depth - 1), scaling)


def spec(name: str, width: int | None = None, coarse_width: int | None = None,
         depth: int = 3, input_dim: int = 2) -> ArchitectureSpec:
    key = name.upper()
    if key not in NAMES:
        raise KeyError(f"unknown architecture {name!r}; expected one of {NAMES}")
    default_size = width is None and coarse_width is None and depth == 3 and input_dim == 2
    if key in HIER_COARSE:
        fine = _tanh_net(width or 140, depth, input_dim)
        coarse = _tanh_net(coarse_width or (width if width and key == "ML1" else HIER_COARSE[key]), depth, input_dim)
        subnets = (fine, coarse)
    elif key in SINGLE:
        subnets = (_tanh_net(width or SINGLE[key], depth, input_dim),)
    elif key == "PWWP":
        w = width or 100
        subnets = (_tanh_net(w, depth, input_dim),) + tuple(
            _frequency_net(w, depth, input_dim, SFM(0.5), TANH, InputScaling.learnable(std)) for std in PWWP_STDS
        )
    else:
        w = width or 100
        subnets = tuple(
            _frequency_net(w, depth, input_dim, SFM(1.0) if i == 0 else SFM(0.5),
                           TANH if i == 0 else S2RELU, InputScaling.fixed(ladder))
            for i, ladder in enumerate(MSCALE_LADDERS)
        )
    if default_size and key in REFERENCE_COUNTS:
        expected = REFERENCE_COUNTS[key]
    else:
        expected = tuple(s.param_count for s in subnets)
    return ArchitectureSpec(key, subnets, expected)


def build(name: str, **overrides) -> CompositeNetwork:
    """Composite network for a named architecture."""
    return spec(name, **overrides).build()


def build_initialized(name: str, seed, **overrides):
    """``(network, initial parameters)`` for a named architecture."""
    cn = build(name, **overrides)
    return cn, init_composite(cn, seed)
