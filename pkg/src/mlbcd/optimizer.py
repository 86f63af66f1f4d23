"""Block-restricted fixed-step gradient descent and Adam.

Both optimizers take a slice designating the active block of the global
parameter vector and never touch coordinates outside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mlbcd.exceptions import NonFiniteError


@dataclass(frozen=True)
class GDConfig:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class AdamConfig:
    lr0: float = 2e-4
    decay: float = 0.99999
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0  # local step, reset on restart
    e: int = 0  # global epoch, survives restarts

    @classmethod
    def zeros(cls, size: int, epoch: int = 0) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, epoch)


def _as_slice(block, n):
    return slice(0, n) if block is None else block


def gd_step(params, block_gradient, alpha: float):
    """``x - alpha * g_bar`` with ``g_bar`` the zero-padded block gradient."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    params = np.asarray(params, dtype=float)
    g = np.asarray(block_gradient, dtype=float)
    if g.shape != params.shape:
        raise ValueError(f"padded gradient has shape {g.shape}, params {params.shape}")
    out = params.copy()
    nz = np.flatnonzero(g)
    out[nz] = params[nz] - alpha * g[nz]
    return out


def lr_at(cfg: AdamConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay**epoch


def adam_update(x, m, v, g, t, lr, beta1, beta2, eps_hat, xp=np):
    """One bias-corrected Adam update at local step ``t`` (1-based)."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    return x - lr * mhat / (xp.sqrt(vhat) + eps_hat), m, v


def adam_step(state: AdamState, params, block_gradient, cfg: AdamConfig, block: slice | None = None):
    """Adam on ``params[block]`` with the decayed rate at the global epoch.

    ``block_gradient`` is the dense gradient of the active block.  Returns
    the new state (``t`` and ``e`` incremented) and new parameters.
    """
    params = np.asarray(params, dtype=float)
    block = _as_slice(block, params.size)
    g = np.asarray(block_gradient, dtype=float)
    if g.shape != state.m.shape or params[block].shape != g.shape:
        raise ValueError(f"block gradient has shape {g.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise NonFiniteError(f"non-finite gradient at {bad.size} coordinates (first {bad[0]})")
    t = state.t + 1
    x, m, v = adam_update(params[block], state.m, state.v, g, t, lr_at(cfg, state.e),
                          cfg.beta1, cfg.beta2, cfg.eps_hat)
    out = params.copy()
    out[block] = x
    return AdamState(m, v, t, state.e + 1), out


def restart(state: AdamState, size: int | None = None) -> AdamState:
    """Fresh moments and local counter; the global epoch (hence lr) is kept.

    ``size`` resizes the moments when the next subproblem has another block.
    """
    size = state.m.size if size is None else size
    return AdamState(np.zeros(size), np.zeros(size), 0, state.e)


__all__ = [
    "AdamConfig",
    "AdamState",
    "GDConfig",
    "adam_step",
    "adam_update",
    "gd_step",
    "lr_at",
    "restart",
]
