"""Budgeted summaries over seeds.

Per method, the traces of all seeds are truncated to the epochs whose
cumulative cost fits in the budget and to their common length; the median
loss is taken epoch by epoch, its minimum is the reported loss and the
median MSE at that same epoch is reported alongside.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mlbcd.driver import RunTrace
from mlbcd.exceptions import MLBCDError

SUMMARY_COLUMNS = ("problem", "method", "budget", "best_median_loss", "median_mse", "epoch", "seeds")


@dataclass(frozen=True)
class SummaryRow:
    problem: str
    method: str
    budget: float
    best_median_loss: float
    median_mse: float | None
    epoch: int
    seeds: int


def median_curve(traces, budget: float, column: str = "loss"):
    """``(epochs, median values)`` of a column over traces, within the budget."""
    cols, epochs = [], None
    for tr in traces:
        keep = [r for r in tr.records if r.cost_units <= budget + 1e-9]
        cols.append(keep)
    n = min(len(c) for c in cols) if cols else 0
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    epochs = np.array([r.epoch for r in cols[0][:n]])
    vals = np.array([[np.nan if getattr(r, column) is None else getattr(r, column) for r in c[:n]] for c in cols])
    return epochs, np.median(vals, axis=0)


def summarize(traces, budget: float, problem: str = "", method: str = "") -> SummaryRow:
    if not traces:
        raise MLBCDError(f"no traces for method {method!r}")
    epochs, med = median_curve(traces, budget, "loss")
    if med.size == 0:
        return SummaryRow(problem, method, budget, float("nan"), None, 0, len(traces))
    k = int(np.nanargmin(med))
    _, mse = median_curve(traces, budget, "mse")
    m = None if np.isnan(mse[k]) else float(mse[k])
    return SummaryRow(problem, method, budget, float(med[k]), m, int(epochs[k]), len(traces))


def load_runs(root) -> dict:
    """``{(problem, method): [RunTrace, ...]}`` for every run directory under ``root``."""
    root = Path(root)
    runs = {}
    dirs = [root] + sorted(p for p in root.rglob("*") if p.is_dir())
    header = None
    for d in dirs:
        for csv_path in sorted(d.glob("seed_*.csv")):
            meta_path = csv_path.with_suffix(".json")
            meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
            cfg = meta.get("config", {})
            problem = cfg.get("problem", {}).get("name", "")
            method = cfg.get("name", d.name)
            text = csv_path.read_text()
            first = text.split("\n", 1)[0]
            if header is not None and first != header:
                raise MLBCDError(f"{csv_path}: trace schema differs from other traces")
            header = first
            runs.setdefault((problem, method), []).append(RunTrace.from_csv(text))
    if not runs:
        raise MLBCDError(f"no traces found under {root}")
    return runs


def report(root, budgets) -> list:
    """Summary rows sorted by problem, budget, then ascending best median loss."""
    runs = load_runs(root)
    rows = [summarize(trs, float(b), prob, meth) for (prob, meth), trs in runs.items() for b in budgets]
    return sorted(rows, key=lambda r: (r.problem, r.budget, np.inf if np.isnan(r.best_median_loss)
                                       else r.best_median_loss, r.method))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r.problem, r.method, f"{r.budget:.17g}", f"{r.best_median_loss:.17g}",
                    "" if r.median_mse is None else f"{r.median_mse:.17g}", r.epoch, r.seeds])
    return buf.getvalue()


def rows_to_text(rows) -> str:
    table = [SUMMARY_COLUMNS] + [
        (r.problem, r.method, f"{r.budget:g}", f"{r.best_median_loss:.4e}",
         "-" if r.median_mse is None else f"{r.median_mse:.4e}", str(r.epoch), str(r.seeds))
        for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(SUMMARY_COLUMNS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table) + "\n"
