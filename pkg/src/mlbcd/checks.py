"""Finite-difference oracles for parameter gradients and input derivatives.

The reference forward pass here is plain numpy and shares no code with the
JAX propagation, so agreement checks both the derivative propagation and
the layer bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mlbcd.composite import as_composite, composite_input_gradient, composite_laplacian
from mlbcd.numerics import make_rng
from mlbcd.pinn import Batch, PINNLoss, PoissonProblem, draw_batch, sample_pool

FD_STEP = 1e-5
TOLERANCE = 1e-4


def _activation(act, h):
    if act.kind == "tanh":
        return np.tanh(h)
    if act.kind == "identity":
        return h
    if act.kind == "s2relu":
        return np.sin(2 * np.pi * h) * np.maximum(h, 0) * np.maximum(1 - h, 0)
    if act.kind == "sfm":
        return np.concatenate([act.s * np.cos(h), act.s * np.sin(h)], axis=-1)
    raise ValueError(act.kind)


def reference_forward(net, params, z, pattern: list | None = None) -> np.ndarray:
    """Network output at ``z`` (N, d) by direct numpy evaluation.

    When ``pattern`` is a list, the side of each s2ReLU kink (0 and 1) for
    every neuron is appended to it.
    """
    params = np.asarray(params, dtype=float)
    a = np.atleast_2d(np.asarray(z, dtype=float))
    pos = 0
    n_layers = len(net.layer_shapes)
    for j, (fan_out, fan_in) in enumerate(net.layer_shapes):
        w = params[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = params[pos : pos + fan_out]
        pos += fan_out
        h = a @ w.T
        if j == 0 and net.scaling.kind != "none":
            if net.scaling.kind == "learnable":
                scales = params[net.param_count - net.n_scales :]
            else:
                scales = np.resize(np.asarray(net.scaling.values, dtype=float), fan_out)
            h = h * scales
        h = h + b
        if j == n_layers - 1:
            return h[:, 0]
        if pattern is not None and net.activations[j].kind == "s2relu":
            pattern.append(np.concatenate([h > 0, h > 1], axis=1))
        a = _activation(net.activations[j], h)
    raise AssertionError("unreachable")


def reference_composite(cn, params, z) -> np.ndarray:
    cn = as_composite(cn)
    return sum(reference_forward(net, blk, z) for net, blk in zip(cn.subnets, cn.split(params)))


def smooth_stencil(cn, params, z, h: float = FD_STEP) -> np.ndarray:
    """Mask of points whose difference stencil ``z, z +- h e_k`` crosses no s2ReLU kink."""
    cn = as_composite(cn)
    z = np.atleast_2d(np.asarray(z, dtype=float))

    def kinks(q):
        pat = []
        for net, blk in zip(cn.subnets, cn.split(params)):
            reference_forward(net, blk, q, pat)
        return np.concatenate(pat, axis=1) if pat else np.zeros((len(q), 0), dtype=bool)

    centre = kinks(z)
    ok = np.ones(len(z), dtype=bool)
    for k in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[k] = h
        for q in (z + e, z - e):
            ok &= np.all(kinks(q) == centre, axis=1)
    return ok


def fd_input_gradient(fun, z, h: float = FD_STEP) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    for k in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[k] = h
        out[:, k] = (fun(z + e) - fun(z - e)) / (2 * h)
    return out


def fd_laplacian(fun, z, h: float = FD_STEP) -> np.ndarray:
    """Second differences of ``fun``; rounding limits this to about ``eps |u| / h^2``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u0 = fun(z)
    out = np.zeros(z.shape[0])
    for k in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[k] = h
        out += (fun(z + e) - 2 * u0 + fun(z - e)) / h**2
    return out


def fd_divergence(grad_fun, z, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a gradient field summed over axes (a Laplacian oracle)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.zeros(z.shape[0])
    for k in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[k] = h
        out += (grad_fun(z + e)[:, k] - grad_fun(z - e)[:, k]) / (2 * h)
    return out


def relative_error(got, ref) -> float:
    """Norm-wise ``|got - ref| / |ref|`` (absolute when ``ref`` vanishes)."""
    got = np.ravel(np.asarray(got, dtype=float))
    ref = np.ravel(np.asarray(ref, dtype=float))
    scale = np.linalg.norm(ref)
    diff = np.linalg.norm(got - ref)
    return float(diff / scale) if scale > 0 else float(diff)


def fd_param_probe(value, params, grad, rng, n_directions: int = 4, n_coords: int = 16,
                   blocks=None, h: float = FD_STEP):
    """Finite-difference and analytic values of directional and partial derivatives.

    Probes ``n_directions`` random unit directions and ``n_coords`` random
    coordinates (spread over ``blocks`` when given).
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    n = params.size
    dirs = [d / np.linalg.norm(d) for d in rng.standard_normal((n_directions, n))]
    if blocks:
        per = max(1, n_coords // len(blocks))
        coords = np.concatenate([rng.choice(np.arange(b.start, b.stop), size=min(per, b.stop - b.start),
                                            replace=False) for b in blocks])
    else:
        coords = rng.choice(n, size=min(n_coords, n), replace=False)
    fd, an = [], []
    for d in dirs:
        fd.append((value(params + h * d) - value(params - h * d)) / (2 * h))
        an.append(grad @ d)
    for i in coords:
        e = np.zeros(n)
        e[i] = h
        fd.append((value(params + e) - value(params - e)) / (2 * h))
        an.append(grad[i])
    return np.array(fd), np.array(an)


@dataclass(frozen=True)
class GradcheckResult:
    architecture: str
    problem: str
    seed: int
    grad_error: float
    laplacian_error: float
    input_grad_error: float
    tol: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return max(self.grad_error, self.laplacian_error, self.input_grad_error) <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.architecture} {self.problem} seed={self.seed} "
                f"grad={self.grad_error:.2e} lap={self.laplacian_error:.2e} dz={self.input_grad_error:.2e}")


def gradcheck(cn, params, problem: PoissonProblem, seed, n_points: int = 20, n_boundary: int = 10,
              h: float = FD_STEP, tol: float = TOLERANCE, architecture: str = "", grad_fn=None,
              pool=None) -> GradcheckResult:
    """Compare exact derivatives with central differences at random points.

    ``grad_fn(loss, params) -> (value, grad)`` replaces the analytic
    gradient (used for negative controls).
    """
    cn = as_composite(cn)
    params = np.asarray(params, dtype=float)
    rng = make_rng(seed)
    if pool is None:
        pool = sample_pool(problem, 5 * n_points, n_boundary, 1, rng)
    idx = draw_batch(pool, n_points, n_boundary, rng)
    # differences across an s2ReLU kink do not approximate derivatives
    ok = np.flatnonzero(smooth_stencil(cn, params, pool.interior, h))
    if ok.size < n_points:
        raise RuntimeError(f"only {ok.size} interior points avoid activation kinks")
    idx["interior"] = np.sort(rng.choice(ok, size=n_points, replace=False))
    batch = Batch.from_pool(pool, idx)
    loss = PINNLoss(problem, cn, batch)
    value_fn = lambda p: loss.components(p)[0]  # noqa: E731
    _, grad = grad_fn(loss, params) if grad_fn else loss.value_and_grad(params)
    fd, an = fd_param_probe(value_fn, params, grad, rng, blocks=[cn.block_slice(i) for i in range(cn.n_blocks)], h=h)
    z = batch.interior
    ref = lambda q: reference_composite(cn, params, q)  # noqa: E731
    # the input gradient is checked against the numpy reference, the
    # Laplacian against differences of that gradient: plain second
    # differences at this step are dominated by rounding for wide tanh nets
    dz_err = relative_error(composite_input_gradient(cn, params, z), fd_input_gradient(ref, z, h))
    grad_field = lambda q: composite_input_gradient(cn, params, q)  # noqa: E731
    lap_err = relative_error(composite_laplacian(cn, params, z), fd_divergence(grad_field, z, h))
    return GradcheckResult(architecture, problem.name, int(seed) if not isinstance(seed, np.random.Generator) else -1,
                           relative_error(an, fd), lap_err, dz_err, tol)
