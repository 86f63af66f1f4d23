"""The multilevel block-coordinate descent driver.

Theory mode runs fixed-step gradient descent on one block at a time with
a full-gradient check at every major iteration.  Practice mode follows a
deterministic epoch schedule with Adam, restarting the optimizer whenever
the trained group of blocks changes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import jax.numpy as jnp
import numpy as np

from mlbcd.cost import CostLedger, Schedule, epoch_cost_units, forward_flops
from mlbcd.exceptions import DescentError, NonFiniteError, SelectionError
from mlbcd.numerics import make_rng
from mlbcd.optimizer import AdamConfig, lr_at
from mlbcd.pinn import BOUNDARIES, COMPONENTS, PINNObjective, draw_batch

# -- selection and termination ------------------------------------------------


@dataclass(frozen=True)
class SelectionRule:
    """``threshold_first`` (needs ``tau``), ``max_ratio`` or ``fixed_cycle`` (needs ``order``)."""

    kind: str = "max_ratio"
    tau: float | None = None
    order: tuple = ()

    def __post_init__(self):
        if self.kind == "threshold_first":
            if self.tau is None or not 0 < self.tau < 1:
                raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        elif self.kind == "fixed_cycle":
            if not self.order:
                raise ValueError("fixed_cycle needs a non-empty order")
        elif self.kind != "max_ratio":
            raise ValueError(f"unknown selection rule {self.kind!r}")

    @classmethod
    def threshold_first(cls, tau: float) -> "SelectionRule":
        return cls("threshold_first", tau=tau)

    @classmethod
    def max_ratio(cls) -> "SelectionRule":
        return cls("max_ratio")

    @classmethod
    def fixed_cycle(cls, order: Sequence[int]) -> "SelectionRule":
        return cls("fixed_cycle", order=tuple(int(i) for i in order))


def select_block(block_norms, full_norm: float, rule: SelectionRule, cycle_index: int = 0) -> int:
    norms = np.asarray(block_norms, dtype=float)
    if norms.ndim != 1 or norms.size == 0:
        raise ValueError("block_norms must be a non-empty vector")
    if rule.kind == "threshold_first":
        for i, g in enumerate(norms):
            if g > rule.tau * full_norm:
                return i
        raise SelectionError(
            f"no block has norm above tau*|g| = {rule.tau * full_norm:.3g}; tau={rule.tau} is too large"
        )
    if rule.kind == "max_ratio":
        return int(np.argmax(norms))
    i = rule.order[cycle_index % len(rule.order)]
    if not 0 <= i < norms.size:
        raise SelectionError(f"fixed cycle names block {i} but there are {norms.size}")
    return i


@dataclass(frozen=True)
class TerminationRule:
    """Subproblem stop criteria; any active one ends the subproblem.

    ``grad_floor`` of ``None`` means ``tau * eps`` in theory mode and off
    in practice mode.
    """

    max_subproblem_epochs: int | None = None
    grad_floor: float | None = None
    loss_decrease_floor: float | None = None


def complexity_bound(f0: float, flow: float, alpha: float, tau: float, eps: float) -> int:
    """Worst-case iteration count ``ceil(2 (f0 - flow) / (alpha tau^2 eps^2) - 1)``, at least 0."""
    if f0 < flow:
        raise ValueError(f"f0={f0} is below flow={flow}")
    if min(alpha, tau, eps) <= 0:
        raise ValueError("alpha, tau and eps must be positive")
    value = 2.0 * (f0 - flow) / (alpha * tau**2 * eps**2) - 1.0
    # absorb rounding so that exact integers are not bumped up
    return max(0, math.ceil(value - 1e-9 * max(1.0, abs(value))))


# -- traces -------------------------------------------------------------------

TRACE_COLUMNS = (
    "epoch", "cost_units", "flops", "loss", "loss_interior", "loss_gamma_e", "loss_gamma_i",
    "mse", "active_block", "lr", "grad_norm", "block_grad_norms",
)


@dataclass
class EpochRecord:
    epoch: int
    cost_units: float
    flops: int
    loss: float
    loss_interior: float | None = None
    loss_gamma_e: float | None = None
    loss_gamma_i: float | None = None
    mse: float | None = None
    active_block: str = "full"
    lr: float | None = None
    grad_norm: float | None = None
    block_grad_norms: tuple | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _parse(name, text):
    if text == "":
        return None
    if name in ("epoch", "flops"):
        return int(text)
    if name == "active_block":
        return text
    if name == "block_grad_norms":
        return tuple(float(x) for x in text.split(";"))
    return float(text)


@dataclass
class RunTrace:
    """Per-epoch records plus run metadata (the metadata is not part of the CSV)."""

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    failed: bool = False

    def append(self, rec: EpochRecord) -> None:
        if self.records:
            last = self.records[-1]
            if rec.epoch <= last.epoch or rec.cost_units < last.cost_units:
                raise ValueError("trace epochs must increase and cost must not decrease")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "RunTrace":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"trace header {header} does not match schema {TRACE_COLUMNS}")
        trace = cls()
        for row in reader:
            trace.records.append(EpochRecord(**{c: _parse(c, v) for c, v in zip(header, row)}))
        return trace

    @classmethod
    def read_csv(cls, path) -> "RunTrace":
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())


assert tuple(f.name for f in fields(EpochRecord)) == TRACE_COLUMNS


# -- theory mode --------------------------------------------------------------


@dataclass
class TheoryResult:
    x: np.ndarray
    trace: RunTrace
    iterations: int
    major_iterations: int
    converged: bool


def run_theory(
    f: Callable,
    grad: Callable,
    x0,
    blocks: Sequence[slice],
    alpha: float,
    eps: float,
    selection: SelectionRule,
    termination: TerminationRule | None = None,
    max_iters: int = 10**7,
    check_descent: bool = True,
) -> TheoryResult:
    """Fixed-step ML-BCD.

    Each major iteration evaluates the full gradient, stops once its norm is
    at most ``eps``, selects a block and takes gradient steps on it until
    the block gradient falls to ``grad_floor`` (``tau * eps`` by default),
    the subproblem epoch cap is hit or the per-step decrease falls below
    the loss-decrease floor.  Every step counts as one iteration.

    The trace has one record per iterate.  ``grad_norm`` is the block
    gradient norm after the step, except on records where a major
    iteration took place (``block_grad_norms`` set), which carry the full
    gradient norm.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    term = termination or TerminationRule()
    tau = selection.tau if selection.tau is not None else 0.5
    floor = term.grad_floor if term.grad_floor is not None else tau * eps
    x = np.array(x0, dtype=float)
    n = x.size
    fx = float(f(x))
    trace = RunTrace(meta={"mode": "theory", "alpha": alpha, "eps": eps})
    k = major = 0
    cost = 0.0
    converged = False
    while True:
        g = np.asarray(grad(x), dtype=float)
        norms = tuple(float(np.linalg.norm(g[b])) for b in blocks)
        full = float(np.linalg.norm(g))
        # major-iteration norms annotate the record of the iterate they belong to
        if trace.records and trace.records[-1].epoch == k:
            trace.records[-1].grad_norm = full
            trace.records[-1].block_grad_norms = norms
        else:
            trace.append(EpochRecord(k, cost, 0, fx, active_block="init", lr=alpha,
                                     grad_norm=full, block_grad_norms=norms))
        if full <= eps:
            converged = True
            break
        if k >= max_iters:
            break
        i = select_block(norms, full, selection, major)
        major += 1
        b = blocks[i]
        frac = (b.stop - b.start) / n
        gi = g[b]
        p = 0
        while k < max_iters:
            gnorm = float(np.linalg.norm(gi))
            if gnorm <= floor or (term.max_subproblem_epochs is not None and p >= term.max_subproblem_epochs):
                break
            x_new = x.copy()
            x_new[b] = x[b] - alpha * gi
            f_new = float(f(x_new))
            if not np.isfinite(f_new):
                raise NonFiniteError(f"objective became non-finite at iteration {k + 1}", trace=trace)
            if check_descent and not f_new < fx:
                raise DescentError(f"iteration {k + 1}: f rose from {fx!r} to {f_new!r} on block {i}")
            decrease = fx - f_new
            x, fx = x_new, f_new
            k += 1
            p += 1
            cost += frac
            gi = np.asarray(grad(x), dtype=float)[b]
            trace.append(EpochRecord(k, cost, 0, fx, active_block=str(i), lr=alpha,
                                     grad_norm=float(np.linalg.norm(gi))))
            if term.loss_decrease_floor is not None and decrease < term.loss_decrease_floor:
                break
    return TheoryResult(x, trace, k, major, converged)


# -- practice mode ------------------------------------------------------------


@dataclass(frozen=True)
class PracticeConfig:
    schedule: Schedule
    adam: AdamConfig = AdamConfig()
    selection: SelectionRule = SelectionRule.max_ratio()
    batch_interior: int = 2000
    batch_boundary: int = 500
    budget: float | None = None
    grad_floor: float | None = None


def run_practice(objective: PINNObjective, params0, cfg: PracticeConfig, seed) -> tuple[np.ndarray, RunTrace]:
    """Scheduled Adam training of a composite PINN.

    The recorded loss and MSE of each epoch are those of the parameters the
    epoch starts from, evaluated on that epoch's minibatch and on the test
    set respectively.  The run stops before any epoch that would exceed
    ``cfg.budget`` cost units.
    """
    cn = objective.cn
    x = np.array(params0, dtype=float)
    if x.shape != (cn.n,):
        raise ValueError(f"params0 has shape {x.shape}, expected ({cn.n},)")
    rng = make_rng(seed)
    ledger = CostLedger()
    trace = RunTrace(meta={"mode": "practice"})
    adam = cfg.adam
    n_points = cfg.batch_interior + len(BOUNDARIES) * cfg.batch_boundary
    e = 0
    group = None
    cycle = 0
    m = v = None
    t = 0
    stop = False
    for kind, epochs in cfg.schedule.phases():
        norms = None
        if kind == "full":
            new_group, block = tuple(range(cn.n_blocks)), None
        else:
            norms, full_norm = objective.block_norms(x)
            block = select_block(norms, full_norm, cfg.selection, cycle)
            new_group = (block,)
            cycle += 1
        sl = objective.group_slice(new_group)
        if new_group != group:
            group = new_group
            m = jnp.zeros(sl.stop - sl.start)
            v = jnp.zeros(sl.stop - sl.start)
            t = 0
        cache = objective.frozen_fields(x, group)
        step = objective.step_fn(group, adam.beta1, adam.beta2, adam.eps_hat)
        units = epoch_cost_units(cn, block)
        flops = sum(forward_flops(cn.subnets[i], n_points) for i in group)
        xg = jnp.asarray(x[sl])
        label = "full" if block is None else str(block)
        for _ in range(epochs):
            if cfg.budget is not None and ledger.units + units > cfg.budget + 1e-9:
                stop = True
                break
            idx = draw_batch(objective.pool, cfg.batch_interior, cfg.batch_boundary, rng)
            lr = lr_at(adam, e)
            t += 1
            x_new, m, v, total, comps, err, gnorm = step(xg, m, v, t, lr, cache, objective.device_indices(idx))
            total = float(total)
            comps = [float(c) for c in np.asarray(comps)]
            if not (np.isfinite(total) and np.isfinite(float(gnorm))):
                x[sl] = np.asarray(xg)
                trace.failed = True
                raise NonFiniteError(f"non-finite loss or gradient at epoch {e + 1}", trace=trace)
            ledger.charge(label, units, flops)
            e += 1
            trace.append(EpochRecord(
                epoch=e, cost_units=ledger.units, flops=ledger.flops, loss=total,
                loss_interior=comps[0], loss_gamma_e=comps[1], loss_gamma_i=comps[2],
                mse=None if np.isnan(float(err)) else float(err), active_block=label, lr=lr,
                grad_norm=float(gnorm), block_grad_norms=norms,
            ))
            norms = None
            xg = x_new
            if cfg.grad_floor is not None and block is not None and float(gnorm) <= cfg.grad_floor:
                break
        x[sl] = np.asarray(xg)
        if stop:
            break
    trace.meta["cost_units"] = ledger.units
    trace.meta["breakdown"] = {str(k): list(val) for k, val in ledger.breakdown.items()}
    return x, trace


__all__ = [
    "COMPONENTS",
    "EpochRecord",
    "PracticeConfig",
    "RunTrace",
    "SelectionRule",
    "TerminationRule",
    "TheoryResult",
    "TRACE_COLUMNS",
    "complexity_bound",
    "run_practice",
    "run_theory",
    "select_block",
]
