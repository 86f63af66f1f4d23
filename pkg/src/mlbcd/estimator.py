"""scikit-learn style facade over a scheduled PINN training run."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from mlbcd import architectures
from mlbcd.composite import composite_forward, init_composite
from mlbcd.cost import Schedule
from mlbcd.driver import PracticeConfig, SelectionRule, run_practice
from mlbcd.exceptions import GeometryError
from mlbcd.optimizer import AdamConfig
from mlbcd.pinn import BOUNDARIES, PINNObjective, SamplePool, make_problem, sample_pool


class PINNRegressor(RegressorMixin, BaseEstimator):
    """Train a composite PINN on a named Poisson problem.

    ``fit(X)`` uses ``X`` as interior collocation points when given (they
    must lie in the problem's region); otherwise points are sampled.  ``y``
    is ignored: the PDE supplies the targets.  ``predict`` evaluates the
    trained network, so ``score(X, u_exact)`` is the usual R^2.
    """

    def __init__(self, problem="test3", architecture="SL1", width=None, coarse_width=None, depth=3,
                 initial_full_epochs=100, cycles=0, full_epochs_per_cycle=0, sub_epochs_per_cycle=0,
                 cycle_order="full_then_sub", lr0=2e-4, decay=0.99999, n_interior=2000, n_boundary=400,
                 n_test=500, batch_interior=500, batch_boundary=100, budget=None, random_state=0):
        self.problem = problem
        self.architecture = architecture
        self.width = width
        self.coarse_width = coarse_width
        self.depth = depth
        self.initial_full_epochs = initial_full_epochs
        self.cycles = cycles
        self.full_epochs_per_cycle = full_epochs_per_cycle
        self.sub_epochs_per_cycle = sub_epochs_per_cycle
        self.cycle_order = cycle_order
        self.lr0 = lr0
        self.decay = decay
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.n_test = n_test
        self.batch_interior = batch_interior
        self.batch_boundary = batch_boundary
        self.budget = budget
        self.random_state = random_state

    def fit(self, X=None, y=None):
        problem = make_problem(self.problem)
        pool_rng, init_rng, batch_rng = (np.random.default_rng(s) for s in
                                         np.random.SeedSequence(self.random_state).spawn(3))
        pool = sample_pool(problem, self.n_interior, self.n_boundary, self.n_test, pool_rng)
        if X is not None:
            X = check_array(X, dtype=np.float64)
            if X.shape[1] != 2:
                raise ValueError(f"X must have 2 columns, got {X.shape[1]}")
            inside = problem.geometry.contains(X)
            if not inside.all():
                raise GeometryError(f"{int((~inside).sum())} collocation points lie outside the region")
            pool = SamplePool(X, np.asarray(problem.source(X), dtype=float), pool.boundaries, pool.test,
                              pool.exact_test, pool.seed, pool.geometry, pool.problem)
        network = architectures.build(self.architecture, width=self.width, coarse_width=self.coarse_width,
                                      depth=self.depth)
        x0 = init_composite(network, init_rng)
        cfg = PracticeConfig(
            schedule=Schedule(self.initial_full_epochs, self.cycles, self.full_epochs_per_cycle,
                              self.sub_epochs_per_cycle, self.cycle_order),
            adam=AdamConfig(lr0=self.lr0, decay=self.decay), selection=SelectionRule.max_ratio(),
            batch_interior=min(self.batch_interior, len(pool.interior)),
            batch_boundary=min(self.batch_boundary, *(len(pool.boundaries[k]) for k in BOUNDARIES)),
            budget=self.budget,
        )
        self.params_, self.trace_ = run_practice(PINNObjective(problem, network, pool), x0, cfg, batch_rng)
        self.network_ = network
        self.problem_ = problem
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.atleast_1d(composite_forward(self.network_, self.params_, X))

    def exact(self, X):
        """Exact solution of the fitted problem at ``X``."""
        check_is_fitted(self, "problem_")
        return np.asarray(self.problem_.exact(check_array(X, dtype=np.float64)))
