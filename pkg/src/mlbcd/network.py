"""Feedforward subnetworks with exact input derivatives.

A subnetwork maps ``z`` in R^d to a scalar.  Hidden layers use one of the
activations below; the output layer is affine.  Input gradients and
Laplacians are obtained by propagating, alongside the values, the first
derivative and the per-axis second derivative of every pre-activation with
respect to each input coordinate.  This is exact (no finite differences) and
stays differentiable, so ``jax.grad`` of any loss built from these quantities
gives exact parameter gradients.

Parameter layout of the flat block: for every layer in order, the weight
matrix (fan_out x fan_in, row-major) then the bias vector; learnable input
scalings come last.  A layer following an SFM layer has twice the fan-in,
since SFM emits a cosine channel block followed by a sine channel block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from mlbcd.exceptions import DimensionError, NonFiniteError
from mlbcd.numerics import make_rng, sample_normal

ACTIVATION_KINDS = ("tanh", "sfm", "s2relu", "identity")
SCALING_KINDS = ("none", "fixed", "learnable")


@dataclass(frozen=True)
class Activation:
    kind: str = "tanh"
    s: float = 1.0  # SFM relaxation, unused by the other kinds

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {ACTIVATION_KINDS}")
        if self.kind == "sfm" and not 0.0 <= self.s <= 1.0:
            raise ValueError(f"SFM relaxation must lie in [0, 1], got {self.s}")
        if self.kind != "sfm":
            object.__setattr__(self, "s", 1.0)

    @property
    def width_factor(self) -> int:
        return 2 if self.kind == "sfm" else 1

    @classmethod
    def parse(cls, text) -> "Activation":
        """Accept ``"tanh"``, ``"s2relu"``, ``"identity"``, ``"sfm(0.5)"`` or a dict."""
        if isinstance(text, Activation):
            return text
        if isinstance(text, dict):
            return cls(**text)
        t = str(text).strip().lower()
        if t.startswith("sfm"):
            inner = t[3:].strip("() ")
            return cls("sfm", float(inner) if inner else 1.0)
        return cls(t)

    def __str__(self):
        return f"sfm({self.s:g})" if self.kind == "sfm" else self.kind


TANH = Activation("tanh")
IDENTITY = Activation("identity")
S2RELU = Activation("s2relu")


def SFM(s: float) -> Activation:
    return Activation("sfm", s)


@dataclass(frozen=True)
class InputScaling:
    """Per-neuron scaling of the first-layer weighted sum.

    The first hidden pre-activation of neuron j is ``lam_j * (w_j . z) + b_j``.
    ``fixed`` values shorter than the layer width repeat cyclically;
    ``learnable`` scalings are drawn from N(0, init_std**2) and stored at the
    end of the parameter block.
    """

    kind: str = "none"
    values: tuple = ()
    init_std: float = 0.0

    def __post_init__(self):
        if self.kind not in SCALING_KINDS:
            raise ValueError(f"unknown scaling {self.kind!r}; expected one of {SCALING_KINDS}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "fixed" and not self.values:
            raise ValueError("fixed scaling needs at least one value")
        if self.kind == "learnable" and not self.init_std >= 0:
            raise ValueError(f"init_std must be non-negative, got {self.init_std}")

    @classmethod
    def fixed(cls, values) -> "InputScaling":
        return cls("fixed", tuple(values))

    @classmethod
    def learnable(cls, init_std: float) -> "InputScaling":
        return cls("learnable", (), float(init_std))


NO_SCALING = InputScaling()


@dataclass(frozen=True)
class SubNetwork:
    input_dim: int
    hidden_widths: tuple
    activations: tuple
    scaling: InputScaling = field(default=NO_SCALING)
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        acts = self.activations
        if isinstance(acts, (str, Activation)):
            acts = (acts,) * len(self.hidden_widths)
        object.__setattr__(self, "activations", tuple(Activation.parse(a) for a in acts))
        if len(self.activations) != len(self.hidden_widths):
            raise ValueError(
                f"{len(self.hidden_widths)} hidden layers but {len(self.activations)} activations"
            )
        if self.input_dim < 1 or self.output_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("layer sizes must be positive")
        if self.scaling.kind != "none" and not self.hidden_widths:
            raise ValueError("input scaling needs at least one hidden layer")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, effective fan_in) of every affine layer, output layer last."""
        shapes = []
        fan_in = self.input_dim
        for w, act in zip(self.hidden_widths, self.activations):
            shapes.append((w, fan_in))
            fan_in = w * act.width_factor
        shapes.append((self.output_dim, fan_in))
        return shapes

    @property
    def n_scales(self) -> int:
        return self.hidden_widths[0] if self.scaling.kind == "learnable" else 0

    @property
    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes) + self.n_scales

    def fixed_scales(self) -> np.ndarray | None:
        if self.scaling.kind != "fixed":
            return None
        return np.resize(np.asarray(self.scaling.values), self.hidden_widths[0])

    def unflatten(self, params):
        """Split a flat block into ``([(W, b), ...], scales)``."""
        layers = []
        pos = 0
        for o, i in self.layer_shapes:
            w = params[pos : pos + o * i].reshape(o, i)
            pos += o * i
            b = params[pos : pos + o]
            pos += o
            layers.append((w, b))
        if self.scaling.kind == "learnable":
            scales = params[pos : pos + self.n_scales]
        else:
            scales = self.fixed_scales()
        return layers, scales

    def flatten(self, layers, scales=None) -> np.ndarray:
        parts = []
        for w, b in layers:
            parts.append(np.asarray(w, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        if self.scaling.kind == "learnable":
            parts.append(np.asarray(scales, dtype=float).ravel())
        out = np.concatenate(parts) if parts else np.zeros(0)
        if out.size != self.param_count:
            raise DimensionError(f"flattened {out.size} values, expected {self.param_count}")
        return out

    def to_dict(self) -> dict:
        sc = {"kind": self.scaling.kind}
        if self.scaling.kind == "fixed":
            sc["values"] = list(self.scaling.values)
        elif self.scaling.kind == "learnable":
            sc["init_std"] = self.scaling.init_std
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "activations": [str(a) for a in self.activations],
            "scaling": sc,
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubNetwork":
        sc = d.get("scaling") or {"kind": "none"}
        if isinstance(sc, str):
            sc = {"kind": sc}
        scaling = InputScaling(sc.get("kind", "none"), tuple(sc.get("values", ())), float(sc.get("init_std", 0.0)))
        return cls(
            input_dim=int(d.get("input_dim", 2)),
            hidden_widths=tuple(d["hidden_widths"]),
            activations=tuple(d["activations"]),
            scaling=scaling,
            output_dim=int(d.get("output_dim", 1)),
        )


# -- scalar activations -------------------------------------------------------


def s2relu(z):
    """sin(2 pi z) * ReLU(1 - z) * ReLU(z); zero outside (0, 1)."""
    z = jnp.asarray(z)
    inside = (z > 0) & (z < 1)
    return jnp.where(inside, jnp.sin(2 * jnp.pi * z) * (1 - z) * z, 0.0)


def sfm(z, s):
    """Soft Fourier mapping: the pair (s cos z, s sin z)."""
    return s * jnp.cos(z), s * jnp.sin(z)


def activation_derivatives(act: Activation, h):
    """Value, first and second derivative of a one-channel activation at ``h``.

    The s2ReLU derivatives are taken as zero at the kinks 0 and 1.
    """
    if act.kind == "tanh":
        t = jnp.tanh(h)
        d1 = 1.0 - t * t
        return t, d1, -2.0 * t * d1
    if act.kind == "identity":
        return h, jnp.ones_like(h), jnp.zeros_like(h)
    if act.kind == "s2relu":
        inside = (h > 0) & (h < 1)
        two_pi = 2 * jnp.pi
        sn, cs = jnp.sin(two_pi * h), jnp.cos(two_pi * h)
        q = h - h * h
        dq = 1.0 - 2.0 * h
        f = sn * q
        f1 = two_pi * cs * q + sn * dq
        f2 = -(two_pi**2) * sn * q + 2 * two_pi * cs * dq - 2.0 * sn
        zero = jnp.zeros_like(h)
        return jnp.where(inside, f, zero), jnp.where(inside, f1, zero), jnp.where(inside, f2, zero)
    raise ValueError(f"activation {act.kind!r} has two channels; use the SFM branch")


# -- propagation --------------------------------------------------------------


def _check_finite(arrays, layer):
    for a in arrays:
        if a is not None and not bool(jnp.all(jnp.isfinite(a))):
            raise NonFiniteError("non-finite value during forward propagation", layer=layer)


def propagate(net: SubNetwork, params, z, order: int = 2, check: bool = False):
    """Evaluate the subnetwork and its input derivatives at a batch of points.

    ``z`` has shape ``(N, d)``.  Returns ``(u, grad, lap)`` with shapes
    ``(N,)``, ``(N, d)`` and ``(N,)``; entries beyond ``order`` are None.
    With ``check=True`` (eager use only) a NonFiniteError names the first
    layer that produced a NaN or infinity.
    """
    layers, scales = net.unflatten(params)
    a = z
    da = None  # (N, d, width): d a / d z_k
    d2a = None  # (N, d, width): d^2 a / d z_k^2, None means identically zero
    n_layers = len(layers)
    for j, (w, b) in enumerate(layers):
        h = a @ w.T
        if order >= 1:
            if da is None:
                dh = jnp.broadcast_to(w.T, (z.shape[0],) + w.T.shape)
            else:
                dh = da @ w.T
            d2h = None if (order < 2 or d2a is None) else d2a @ w.T
        if j == 0 and scales is not None:
            h = h * scales
            if order >= 1:
                dh = dh * scales
                if d2h is not None:
                    d2h = d2h * scales
        h = h + b
        if j == n_layers - 1:
            if check:
                _check_finite((h, dh if order >= 1 else None, d2h if order >= 2 else None), j)
            u = h[:, 0]
            grad = dh[:, :, 0] if order >= 1 else None
            if order >= 2:
                lap = jnp.zeros_like(u) if d2h is None else jnp.sum(d2h[:, :, 0], axis=1)
            else:
                lap = None
            return u, grad, lap
        act = net.activations[j]
        if act.kind == "sfm":
            s = act.s
            c, sn = jnp.cos(h), jnp.sin(h)
            a = jnp.concatenate([s * c, s * sn], axis=-1)
            if order >= 1:
                hc = c[:, None, :]
                hs = sn[:, None, :]
                da = jnp.concatenate([-s * hs * dh, s * hc * dh], axis=-1)
                if order >= 2:
                    dh2 = dh * dh
                    if d2h is None:
                        d2a = jnp.concatenate([-s * hc * dh2, -s * hs * dh2], axis=-1)
                    else:
                        d2a = jnp.concatenate(
                            [-s * hc * dh2 - s * hs * d2h, -s * hs * dh2 + s * hc * d2h], axis=-1
                        )
        else:
            f, f1, f2 = activation_derivatives(act, h)
            a = f
            if order >= 1:
                g1 = f1[:, None, :]
                da = g1 * dh
                if order >= 2:
                    d2a = f2[:, None, :] * dh * dh
                    if d2h is not None:
                        d2a = d2a + g1 * d2h
        if check:
            _check_finite((a, da, d2a), j)


_propagate_jit = jax.jit(propagate, static_argnames=("net", "order", "check"))


def _prepare(net: SubNetwork, params, z):
    params = jnp.asarray(params, dtype=jnp.float64)
    if params.shape != (net.param_count,):
        raise DimensionError(f"params has shape {params.shape}, expected ({net.param_count},)")
    z = jnp.asarray(z, dtype=jnp.float64)
    single = z.ndim == 1
    zz = z[None, :] if single else z
    if zz.ndim != 2 or zz.shape[1] != net.input_dim:
        raise DimensionError(f"points have shape {z.shape}, expected (..., {net.input_dim})")
    return params, zz, single


def forward(net: SubNetwork, params, z):
    """Network output at one point (returns float) or a batch ``(N, d)``."""
    params, zz, single = _prepare(net, params, z)
    u, _, _ = _propagate_jit(net, params, zz, order=0)
    return float(u[0]) if single else np.asarray(u)


def input_gradient(net: SubNetwork, params, z):
    params, zz, single = _prepare(net, params, z)
    _, g, _ = _propagate_jit(net, params, zz, order=1)
    g = np.asarray(g)
    return g[0] if single else g


def input_laplacian(net: SubNetwork, params, z):
    params, zz, single = _prepare(net, params, z)
    _, _, lap = _propagate_jit(net, params, zz, order=2)
    return float(lap[0]) if single else np.asarray(lap)


def locate_nonfinite(net: SubNetwork, params, z, order: int = 2):
    """Index of the first layer producing a non-finite value, or None."""
    params, zz, _ = _prepare(net, params, z)
    try:
        propagate(net, params, zz, order=order, check=True)
    except NonFiniteError as err:
        return err.layer
    return None


def param_gradient(loss: Callable, params) -> np.ndarray:
    """Exact gradient of a scalar ``loss(params)`` built from the primitives.

    ``loss`` must be traceable by JAX.  If it exposes ``locate_nonfinite``
    (as the PINN losses do), a non-finite result is reported with the
    offending layer index.
    """
    params = jnp.asarray(params, dtype=jnp.float64)
    value, grad = jax.value_and_grad(loss)(params)
    grad = np.asarray(grad)
    if not (np.isfinite(float(value)) and np.all(np.isfinite(grad))):
        locate = getattr(loss, "locate_nonfinite", None)
        layer = locate(params) if locate is not None else None
        raise NonFiniteError("non-finite loss or gradient", layer=layer)
    return grad


def init_params(net: SubNetwork, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases, learnable scalings ~ N(0, init_std^2)."""
    rng = make_rng(seed)
    layers = []
    for fan_out, fan_in in net.layer_shapes:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    scales = None
    if net.scaling.kind == "learnable":
        scales = sample_normal(net.hidden_widths[0], net.scaling.init_std, rng)
    return net.flatten(layers, scales)


def mlp(widths, activation="tanh", input_dim: int = 2, scaling: InputScaling = NO_SCALING, first=None) -> SubNetwork:
    """Shorthand: equal activations everywhere except an optional first one."""
    widths = tuple(widths)
    acts = [Activation.parse(activation)] * len(widths)
    if first is not None and widths:
        acts[0] = Activation.parse(first)
    return SubNetwork(input_dim, widths, tuple(acts), scaling)


__all__ = [
    "Activation",
    "IDENTITY",
    "InputScaling",
    "NO_SCALING",
    "S2RELU",
    "SFM",
    "SubNetwork",
    "TANH",
    "activation_derivatives",
    "forward",
    "init_params",
    "input_gradient",
    "input_laplacian",
    "locate_nonfinite",
    "mlp",
    "param_gradient",
    "propagate",
    "s2relu",
    "sfm",
]
