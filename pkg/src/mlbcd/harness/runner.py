"""Execution of one configured seed and the files it leaves behind.

Each seed writes ``seed_<s>.csv`` (the trace) and ``seed_<s>.json`` (config,
seed and status, used by replay).  Practice runs also write the final
parameters as ``seed_<s>.params``.  A run that aborts keeps its partial
trace and leaves a ``seed_<s>.FAILED`` marker with the error message.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from mlbcd import architectures
from mlbcd.composite import CompositeNetwork, init_composite, save_params
from mlbcd.driver import PracticeConfig, RunTrace, SelectionRule, complexity_bound, run_practice, run_theory
from mlbcd.exceptions import MLBCDError, NonFiniteError
from mlbcd.galerkin import random_quadratic
from mlbcd.harness.config import ExperimentConfig, from_dict
from mlbcd.network import SubNetwork
from mlbcd.pinn import PINNObjective, make_problem, sample_pool

THREADS_ENV = "MLBCD_THREADS"


def seed_streams(seed: int):
    """Independent generators for the pool, the initialization and the batches."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(3)]


def build_network(cfg: ExperimentConfig) -> CompositeNetwork:
    a = cfg.architecture
    if a.subnets:
        return CompositeNetwork(tuple(SubNetwork.from_dict(d) for d in a.subnets))
    return architectures.build(a.name, width=a.width, coarse_width=a.coarse_width, depth=a.depth)


def build_problem(cfg: ExperimentConfig):
    prob = make_problem(cfg.problem.name, **cfg.problem.params)
    if cfg.problem.weights is not None:
        prob = prob.with_weights(cfg.problem.weights)
    return prob


@dataclass
class SeedResult:
    seed: int
    trace: RunTrace
    params: np.ndarray | None
    error: str | None = None
    info: dict | None = None


def run_seed(cfg: ExperimentConfig, seed: int, budget: float | None = None) -> SeedResult:
    if cfg.mode == "theory":
        return _run_theory_seed(cfg, seed)
    pool_rng, init_rng, batch_rng = seed_streams(seed)
    problem = build_problem(cfg)
    cn = build_network(cfg)
    pool = sample_pool(problem, cfg.pool.n_interior, cfg.pool.n_boundary, cfg.pool.n_test, pool_rng)
    x0 = init_composite(cn, init_rng)
    objective = PINNObjective(problem, cn, pool)
    pcfg = PracticeConfig(
        schedule=cfg.schedule.build(), adam=cfg.optimizer, selection=cfg.selection.build(),
        batch_interior=cfg.batch.n_interior, batch_boundary=cfg.batch.n_boundary,
        budget=budget if budget is not None else cfg.budget,
    )
    try:
        x, trace = run_practice(objective, x0, pcfg, batch_rng)
    except NonFiniteError as err:
        return SeedResult(seed, err.trace or RunTrace(), None, str(err))
    return SeedResult(seed, trace, x, info={"cost_units": trace.meta.get("cost_units", 0.0),
                                            "breakdown": trace.meta.get("breakdown", {})})


def _run_theory_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    th = cfg.theory
    qp_rng, x0_rng, _ = seed_streams(seed)
    qp = random_quadratic(th.n2, qp_rng, cond=th.cond)
    alpha = th.alpha_factor / qp.lipschitz()
    x0 = x0_rng.standard_normal(qp.n1 + qp.n2)
    rule = cfg.selection.build()
    if rule.tau is None:
        rule = SelectionRule(rule.kind, th.tau, rule.order)
    res = run_theory(qp.objective, qp.gradient, x0, qp.blocks(), alpha, th.eps, rule, max_iters=th.max_iters)
    f0 = qp.objective(x0)
    bound = complexity_bound(f0, qp.f_low(), alpha, rule.tau, th.eps)
    info = {"iterations": res.iterations, "major_iterations": res.major_iterations, "bound": bound,
            "converged": res.converged, "alpha": alpha, "f0": f0, "f_low": qp.f_low()}
    return SeedResult(seed, res.trace, res.x, info=info)


def write_result(out_dir, cfg: ExperimentConfig, res: SeedResult, budget=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"seed_{res.seed}"
    res.trace.write_csv(f"{stem}.csv")
    meta = {
        "config": cfg.to_dict(), "digest": cfg.digest(), "seed": res.seed, "budget": budget,
        "status": "failed" if res.error else "ok", "error": res.error, "records": len(res.trace),
        "info": res.info or {},
    }
    with open(f"{stem}.json", "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    marker = Path(f"{stem}.FAILED")
    if res.error:
        marker.write_text(res.error + "\n")
    elif marker.exists():
        marker.unlink()
    if res.params is not None and cfg.mode != "theory":
        save_params(f"{stem}.params", build_network(cfg), res.params)
    return Path(f"{stem}.csv")


def _worker(payload):
    cfg_dict, seed, budget, out_dir = payload
    cfg = from_dict(cfg_dict)
    res = run_seed(cfg, seed, budget)
    write_result(out_dir, cfg, res, budget)
    return seed, res.error


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, out_dir, seeds=None, budget=None, threads: int | None = None) -> dict:
    """Run every seed, one worker process per seed when ``threads > 1``.

    Returns ``{seed: error message or None}``.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(seeds) == 1:
        out = {}
        for s in seeds:
            res = run_seed(cfg, s, budget)
            write_result(out_dir, cfg, res, budget)
            out[s] = res.error
        return out
    payloads = [(cfg.to_dict(), s, budget, str(out_dir)) for s in seeds]
    with ProcessPoolExecutor(max_workers=threads, mp_context=get_context("spawn")) as ex:
        return dict(ex.map(_worker, payloads))


def replay(run_dir, seed: int) -> tuple[bool, str]:
    """Re-run a stored seed and compare trace bytes with the file on disk."""
    stem = Path(run_dir) / f"seed_{seed}"
    try:
        meta = json.loads(Path(f"{stem}.json").read_text())
        stored = Path(f"{stem}.csv").read_bytes()
    except FileNotFoundError as err:
        raise MLBCDError(f"no stored run for seed {seed} in {run_dir}") from err
    cfg = from_dict(meta["config"])
    res = run_seed(cfg, seed, meta.get("budget"))
    fresh = res.trace.to_csv().encode()
    if fresh == stored:
        return True, f"seed {seed}: identical ({len(stored)} bytes)"
    old, new = stored.decode().splitlines(), fresh.decode().splitlines()
    first = next((i for i, (a, b) in enumerate(zip(old, new)) if a != b), min(len(old), len(new)))
    return False, f"seed {seed}: traces differ from line {first + 1}"
