"""Command-line entry point: ``mlbcd run | report | gradcheck | verify | replay``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from mlbcd.exceptions import ConfigError, MLBCDError


def _seeds(text):
    if text is None:
        return None
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def cmd_run(args) -> int:
    from mlbcd.harness import config, report, runner

    cfg = config.load(args.config)
    out_dir = Path(args.out_dir) / cfg.name
    budget = args.budget[-1] if args.budget else None
    errors = runner.run_experiment(cfg, out_dir, seeds=_seeds(args.seeds), budget=budget, threads=args.threads)
    for seed, err in sorted(errors.items()):
        print(f"seed {seed}: {'FAILED ' + err if err else 'ok'}")
    budgets = args.budget or cfg.budgets
    if budgets and cfg.mode != "theory":
        rows = report.report(out_dir, budgets)
        (out_dir / "summary.csv").write_text(report.rows_to_csv(rows))
        print(report.rows_to_text(rows), end="")
    return 1 if any(errors.values()) else 0


def cmd_report(args) -> int:
    from mlbcd.harness import report

    if not args.budget:
        raise ConfigError("report needs at least one --budget")
    rows = report.report(args.out_dir, args.budget)
    Path(args.out_dir, "summary.csv").write_text(report.rows_to_csv(rows))
    print(report.rows_to_text(rows), end="")
    return 0


def cmd_gradcheck(args) -> int:
    from mlbcd.architectures import NAMES, build_initialized
    from mlbcd.checks import gradcheck
    from mlbcd.pinn import PROBLEM_NAMES, make_problem

    archs = NAMES if args.arch == "all" else [a.strip().upper() for a in args.arch.split(",")]
    probs = PROBLEM_NAMES if args.problem == "all" else args.problem.split(",")
    seeds = _seeds(args.seeds) or [0]
    ok = True
    for pname in probs:
        problem = make_problem(pname)
        for arch in archs:
            for seed in seeds:
                cn, x = build_initialized(arch, seed, width=args.width)
                res = gradcheck(cn, x, problem, seed, architecture=arch)
                print(res.line())
                ok &= res.passed
    return 0 if ok else 1


def cmd_verify(args) -> int:
    from mlbcd.harness.verify import run_suite

    suites = ["galerkin", "complexity"] if args.suite == "all" else [args.suite]
    ok = True
    for suite in suites:
        for row in run_suite(suite, _seeds(args.seeds)):
            print(json.dumps(row, sort_keys=True))
            ok &= row["passed"]
    return 0 if ok else 1


def cmd_replay(args) -> int:
    from mlbcd.harness.runner import replay

    run_dir = Path(args.out_dir)
    seeds = _seeds(args.seeds)
    if seeds is None:
        seeds = sorted(int(p.stem.split("_")[1]) for p in run_dir.glob("seed_*.json"))
    if not seeds:
        raise MLBCDError(f"no stored runs in {run_dir}")
    ok = True
    for seed in seeds:
        same, msg = replay(run_dir, seed)
        print(msg)
        ok &= same
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlbcd", description="Multilevel block-coordinate PINN training")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for seeds (default: $MLBCD_THREADS or 1)")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--seeds", help="e.g. 0,1,2 or 0-4 (default: from config)")
    p.add_argument("--budget", type=float, action="append", help="cost-unit budget (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize traces under a directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--budget", type=float, action="append")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference derivative checks")
    p.add_argument("--arch", default="all")
    p.add_argument("--problem", default="all")
    p.add_argument("--seeds", default="0")
    p.add_argument("--width", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("verify", help="quadratic theory suites")
    p.add_argument("--suite", choices=("galerkin", "complexity", "all"), default="all")
    p.add_argument("--seeds")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="re-run stored seeds and compare trace bytes")
    p.add_argument("--out-dir", required=True, help="run directory holding seed_<s>.json files")
    p.add_argument("--seeds")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MLBCDError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
