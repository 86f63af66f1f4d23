"""Seeded verification suites for the quadratic theory.

``galerkin``: the coarse minimizer against an independent restricted
least-squares minimizer, and the second-order Taylor model against the
coarse quadratic increment.  ``complexity``: fixed-step runs against the
worst-case iteration bound, with strict descent asserted at every step.
"""

from __future__ import annotations

import warnings

import numpy as np

from mlbcd.driver import SelectionRule, complexity_bound, run_theory
from mlbcd.galerkin import coarse_reduce, random_quadratic, restricted_minimizer, taylor_h2
from mlbcd.numerics import make_rng

GALERKIN_TOL = 1e-10
TAYLOR_TOL = 1e-12
EPSILONS = (1e-1, 1e-2, 1e-3)


def galerkin_case(seed: int) -> dict:
    rng = make_rng(seed)
    n2 = 2 + seed % 14  # n1 = 2 n2 + 1 <= 31
    qp = random_quadratic(n2, rng, cond=100.0)
    x1 = rng.standard_normal(qp.n1)
    coarse = coarse_reduce(qp, x1)
    x2_coarse = coarse.minimizer()
    x2_ref = restricted_minimizer(qp, x1)
    min_err = float(np.max(np.abs(x2_coarse - x2_ref)))
    delta = rng.standard_normal(qp.n2)
    h2 = taylor_h2(qp.A @ x1 + qp.b, qp.A, qp.P, 1.0, delta)
    inc = coarse.value(delta)
    taylor_err = abs(h2 - inc) / max(1.0, abs(inc))
    return {
        "suite": "galerkin", "seed": seed, "n1": qp.n1, "n2": qp.n2,
        "minimizer_error": min_err, "taylor_error": taylor_err,
        "passed": bool(min_err <= GALERKIN_TOL and taylor_err <= TAYLOR_TOL),
    }


def complexity_case(seed: int, eps: float, tau: float = 0.5, alpha_factor: float = 0.9,
                    cond: float = 50.0) -> dict:
    rng = make_rng(seed)
    n2 = 3 + seed % 13  # n = 3 n2 + 1 <= 46
    qp = random_quadratic(n2, rng, cond=cond)
    L = qp.lipschitz()
    alpha = alpha_factor / L
    x0 = rng.standard_normal(qp.n1 + qp.n2)
    out = {"suite": "complexity", "seed": seed, "eps": eps, "n": qp.n1 + qp.n2, "alpha_L": alpha * L}
    if alpha * L >= 1:
        warnings.warn(f"alpha*L = {alpha * L:.3g} >= 1: the bound does not apply, check skipped", stacklevel=2)
        out.update(skipped=True, passed=True)
        return out
    res = run_theory(qp.objective, qp.gradient, x0, qp.blocks(), alpha, eps, SelectionRule.threshold_first(tau))
    losses = np.array(res.trace.column("loss"))
    bound = complexity_bound(qp.objective(x0), qp.f_low(), alpha, tau, eps)
    decreasing = bool(np.all(np.diff(losses) < 0))
    out.update(
        skipped=False, iterations=res.iterations, major_iterations=res.major_iterations, bound=bound,
        converged=res.converged, strictly_decreasing=decreasing,
        passed=bool(res.converged and res.iterations <= bound and decreasing),
    )
    return out


def run_suite(name: str, seeds=None) -> list:
    if name == "galerkin":
        return [galerkin_case(s) for s in (range(50) if seeds is None else seeds)]
    if name == "complexity":
        return [complexity_case(s, e) for s in (range(20) if seeds is None else seeds) for e in EPSILONS]
    raise KeyError(f"unknown suite {name!r}; expected galerkin or complexity")
