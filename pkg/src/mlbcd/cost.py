"""FLOP and cost-unit accounting.

One cost unit is one epoch on the complete composite network; an epoch on
block ``i`` alone costs ``n_i / n`` units because the frozen blocks are
cached and first-order cost is linear in the number of parameters.

FLOPs count forward-pass matrix-vector products only, with the first layer
weighted by 2 and later layers by 1 (``N (2 d d_h + d_h^2 + d_h)`` for two
hidden layers of width ``d_h``).  The asymmetry is kept as-is so numbers
stay comparable with reference counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from mlbcd.composite import CompositeNetwork, as_composite
from mlbcd.network import SubNetwork


def forward_flops(net, n_points: int) -> int:
    """Forward FLOPs of a subnetwork (or sum over a composite) on ``n_points``."""
    if n_points < 0:
        raise ValueError(f"n_points must be >= 0, got {n_points}")
    if isinstance(net, CompositeNetwork):
        return sum(forward_flops(s, n_points) for s in net.subnets)
    if not isinstance(net, SubNetwork):
        raise TypeError(f"expected SubNetwork or CompositeNetwork, got {type(net).__name__}")
    per_point = 0
    for j, (fan_out, fan_in) in enumerate(net.layer_shapes):
        per_point += (2 if j == 0 else 1) * fan_in * fan_out
    return n_points * per_point


def block_fraction(cn: CompositeNetwork, block: int | None) -> float:
    cn = as_composite(cn)
    if block is None:
        return 1.0
    return cn.sizes[block] / cn.n


def epoch_cost_units(cn: CompositeNetwork, block: int | None = None) -> float:
    """1.0 for the full network, ``n_i / n`` for block ``i``."""
    return block_fraction(cn, block)


@dataclass(frozen=True)
class Schedule:
    """Deterministic practice schedule.

    ``initial_full_epochs`` on the full network, then ``cycles`` cycles each
    made of ``full_epochs_per_cycle`` full epochs and ``sub_epochs_per_cycle``
    epochs on one selected block, in ``cycle_order``.
    """

    initial_full_epochs: int = 0
    cycles: int = 0
    full_epochs_per_cycle: int = 0
    sub_epochs_per_cycle: int = 0
    cycle_order: str = "full_then_sub"

    def __post_init__(self):
        for name in ("initial_full_epochs", "cycles", "full_epochs_per_cycle", "sub_epochs_per_cycle"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.cycle_order not in ("full_then_sub", "sub_then_full"):
            raise ValueError(f"unknown cycle_order {self.cycle_order!r}")

    def phases(self):
        """Yield ``("full" | "sub", epochs)`` in execution order, skipping empty phases."""
        if self.initial_full_epochs:
            yield "full", self.initial_full_epochs
        cycle = [("full", self.full_epochs_per_cycle), ("sub", self.sub_epochs_per_cycle)]
        if self.cycle_order == "sub_then_full":
            cycle.reverse()
        for _ in range(self.cycles):
            for kind, epochs in cycle:
                if epochs:
                    yield kind, epochs

    @property
    def total_epochs(self) -> int:
        return self.initial_full_epochs + self.cycles * (self.full_epochs_per_cycle + self.sub_epochs_per_cycle)


def schedule_cost(schedule: Schedule, cn, selected_blocks: Sequence[int] | None = None) -> float:
    """Total cost units of ``schedule``.

    ``selected_blocks`` gives the block trained in each cycle's sub phase.
    When omitted all blocks must have the same size.
    """
    cn = as_composite(cn)
    if selected_blocks is None:
        if len(set(cn.sizes)) != 1:
            raise ValueError("blocks differ in size; pass the selected block of every cycle")
        fractions = [1.0 / cn.n_blocks] * schedule.cycles
    else:
        if len(selected_blocks) != schedule.cycles:
            raise ValueError(f"{len(selected_blocks)} selected blocks for {schedule.cycles} cycles")
        fractions = [block_fraction(cn, b) for b in selected_blocks]
    total = float(schedule.initial_full_epochs)
    for frac in fractions:
        total += schedule.full_epochs_per_cycle + schedule.sub_epochs_per_cycle * frac
    return total


@dataclass
class CostLedger:
    """Cumulative cost units and FLOPs with a per-block breakdown.

    Breakdown keys are block indices, or ``"full"`` for full-network epochs.
    """

    units: float = 0.0
    flops: int = 0
    breakdown: dict = field(default_factory=dict)

    def charge(self, key, units: float, flops: int) -> None:
        if units < 0 or flops < 0:
            raise ValueError("cost increments must be non-negative")
        self.units += units
        self.flops += int(flops)
        u, f = self.breakdown.get(key, (0.0, 0))
        self.breakdown[key] = (u + units, f + int(flops))
