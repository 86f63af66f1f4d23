"""Sum-of-subnetworks models with block-structured parameters.

The global parameter vector is the concatenation of the subnetwork blocks in
order, so block ``i`` occupies ``[offsets[i], offsets[i] + n_i)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from mlbcd.exceptions import DimensionError, NonFiniteError
from mlbcd.network import SubNetwork, init_params, propagate
from mlbcd.numerics import make_rng

PARAMS_FORMAT = "mlbcd-params"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class CompositeNetwork:
    subnets: tuple

    def __post_init__(self):
        subnets = tuple(self.subnets)
        if not subnets:
            raise ValueError("a composite network needs at least one subnetwork")
        dims = {s.input_dim for s in subnets}
        if len(dims) != 1:
            raise ValueError(f"subnetworks disagree on input dimension: {sorted(dims)}")
        object.__setattr__(self, "subnets", subnets)

    @property
    def n_blocks(self) -> int:
        return len(self.subnets)

    @property
    def input_dim(self) -> int:
        return self.subnets[0].input_dim

    @property
    def sizes(self) -> tuple:
        return tuple(s.param_count for s in self.subnets)

    @property
    def offsets(self) -> tuple:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def block_slice(self, i: int) -> slice:
        if not 0 <= i < self.n_blocks:
            raise IndexError(f"block {i} out of range for {self.n_blocks} blocks")
        start = self.offsets[i]
        return slice(start, start + self.sizes[i])

    def group_slice(self, blocks: Sequence[int]) -> slice:
        """Contiguous slice covering consecutive blocks."""
        blocks = sorted(blocks)
        if blocks != list(range(blocks[0], blocks[-1] + 1)):
            raise ValueError(f"blocks {blocks} are not contiguous")
        return slice(self.block_slice(blocks[0]).start, self.block_slice(blocks[-1]).stop)

    def split(self, params) -> list:
        return [params[self.block_slice(i)] for i in range(self.n_blocks)]

    def to_dict(self) -> dict:
        return {"subnets": [s.to_dict() for s in self.subnets]}

    @classmethod
    def from_dict(cls, d: dict) -> "CompositeNetwork":
        return cls(tuple(SubNetwork.from_dict(s) for s in d["subnets"]))


def as_composite(model) -> CompositeNetwork:
    if isinstance(model, CompositeNetwork):
        return model
    if isinstance(model, SubNetwork):
        return CompositeNetwork((model,))
    return CompositeNetwork(tuple(model))


def init_composite(cn: CompositeNetwork, seed) -> np.ndarray:
    """Initialize every block from one seeded stream, block by block."""
    rng = make_rng(seed)
    return np.concatenate([init_params(s, rng) for s in cn.subnets])


def propagate_group(subnets: Sequence[SubNetwork], params, z, order: int = 2):
    """Sum of ``propagate`` over consecutive subnetworks sharing ``params``."""
    u = grad = lap = None
    pos = 0
    for net in subnets:
        block = params[pos : pos + net.param_count]
        pos += net.param_count
        ui, gi, li = propagate(net, block, z, order=order)
        u = ui if u is None else u + ui
        if order >= 1:
            grad = gi if grad is None else grad + gi
        if order >= 2:
            lap = li if lap is None else lap + li
    return u, grad, lap


_group_jit = jax.jit(propagate_group, static_argnames=("subnets", "order"))


def _prepare(cn: CompositeNetwork, params, z):
    params = jnp.asarray(params, dtype=jnp.float64)
    if params.shape != (cn.n,):
        raise DimensionError(f"global params has shape {params.shape}, expected ({cn.n},)")
    z = jnp.asarray(z, dtype=jnp.float64)
    single = z.ndim == 1
    zz = z[None, :] if single else z
    if zz.ndim != 2 or zz.shape[1] != cn.input_dim:
        raise DimensionError(f"points have shape {z.shape}, expected (..., {cn.input_dim})")
    return params, zz, single


def composite_forward(cn: CompositeNetwork, params, z):
    params, zz, single = _prepare(cn, params, z)
    u, _, _ = _group_jit(cn.subnets, params, zz, order=0)
    return float(u[0]) if single else np.asarray(u)


def composite_input_gradient(cn: CompositeNetwork, params, z):
    params, zz, single = _prepare(cn, params, z)
    _, g, _ = _group_jit(cn.subnets, params, zz, order=1)
    g = np.asarray(g)
    return g[0] if single else g


def composite_laplacian(cn: CompositeNetwork, params, z):
    params, zz, single = _prepare(cn, params, z)
    _, _, lap = _group_jit(cn.subnets, params, zz, order=2)
    return float(lap[0]) if single else np.asarray(lap)


@dataclass(frozen=True)
class BlockGradient:
    index: int
    g: np.ndarray
    padded: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.g))


def split_gradient(cn: CompositeNetwork, grad) -> list[BlockGradient]:
    grad = np.asarray(grad, dtype=float)
    out = []
    for i in range(cn.n_blocks):
        sl = cn.block_slice(i)
        padded = np.zeros_like(grad)
        padded[sl] = grad[sl]
        out.append(BlockGradient(i, grad[sl].copy(), padded))
    return out


def block_gradients(cn: CompositeNetwork, loss: Callable, params):
    """Per-block gradients of ``loss`` and the full gradient norm."""
    params = jnp.asarray(params, dtype=jnp.float64)
    value, grad = jax.value_and_grad(loss)(params)
    grad = np.asarray(grad)
    if not (np.isfinite(float(value)) and np.all(np.isfinite(grad))):
        locate = getattr(loss, "locate_nonfinite", None)
        raise NonFiniteError("non-finite loss or gradient", layer=locate(params) if locate else None)
    return split_gradient(cn, grad), float(np.linalg.norm(grad))


def save_params(path, model, params) -> None:
    """Decimal-text parameter file.

    Line 1 is ``# mlbcd-params <version>``, line 2 is ``# `` followed by the
    architecture as JSON, then one value per line with 17 significant digits.
    """
    cn = as_composite(model)
    params = np.asarray(params, dtype=float)
    if params.shape != (cn.n,):
        raise DimensionError(f"params has shape {params.shape}, expected ({cn.n},)")
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {PARAMS_FORMAT} {PARAMS_VERSION}\n")
        fh.write("# " + json.dumps(cn.to_dict(), sort_keys=True) + "\n")
        for v in params:
            fh.write(f"{v:.17g}\n")


def load_params(path):
    """Inverse of :func:`save_params`; returns ``(CompositeNetwork, params)``."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 3 or head[1] != PARAMS_FORMAT:
            raise ValueError(f"{path}: not an {PARAMS_FORMAT} file")
        if int(head[2]) != PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported version {head[2]}")
        arch = json.loads(fh.readline()[2:])
        values = np.array([float(line) for line in fh if line.strip()])
    cn = CompositeNetwork.from_dict(arch)
    if values.shape != (cn.n,):
        raise DimensionError(f"{path}: {values.size} values for an architecture of {cn.n}")
    return cn, values
