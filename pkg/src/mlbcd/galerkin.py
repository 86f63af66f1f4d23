"""Two-level quadratic problems and their Galerkin coarse models.

The objective is ``f(x1, x2) = 1/2 (x1 + P x2)^T A (x1 + P x2) + b^T (x1 + P x2)``
with ``A`` SPD (n1 x n1) and ``P`` a full-column-rank prolongation
(n1 x n2).  Minimizing over ``x2`` with ``x1`` frozen gives the coarse
quadratic ``1/2 x2^T H x2 + c^T x2`` with ``H = P^T A P`` and
``c = P^T (A x1 + b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mlbcd.exceptions import DimensionError, RankDeficientError
from mlbcd.numerics import as_matrix, cholesky, is_symmetric, make_rng, random_spd, spd_solve

QUADRATIC_FORMAT = "mlbcd-quadratic"


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    A: np.ndarray
    b: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        P = as_matrix(self.P, "P")
        b = np.asarray(self.b, dtype=float)
        n1 = A.shape[0]
        if A.shape != (n1, n1):
            raise DimensionError(f"A must be square, got {A.shape}")
        if b.shape != (n1,):
            raise DimensionError(f"b has shape {b.shape}, expected ({n1},)")
        if P.shape[0] != n1 or P.shape[1] > n1:
            raise DimensionError(f"P has shape {P.shape}, expected ({n1}, n2) with n2 <= {n1}")
        if not is_symmetric(A):
            raise ValueError("A is not symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "P", P)

    @property
    def n1(self) -> int:
        return self.A.shape[0]

    @property
    def n2(self) -> int:
        return self.P.shape[1]

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.n1], x[self.n1 :]

    def joint_hessian(self) -> np.ndarray:
        """Hessian of ``f`` in the joint variable ``(x1, x2)``."""
        m = np.hstack([np.eye(self.n1), self.P])
        return m.T @ self.A @ m

    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.joint_hessian())[-1])

    def f_low(self) -> float:
        """Minimum value: ``-1/2 b^T A^{-1} b``."""
        return float(-0.5 * self.b @ spd_solve(self.A, self.b))

    def objective(self, x) -> float:
        x1, x2 = self.split(x)
        return full_objective(self, x1, x2)

    def gradient(self, x) -> np.ndarray:
        x1, x2 = self.split(x)
        g1 = self.A @ (x1 + self.P @ x2) + self.b
        return np.concatenate([g1, self.P.T @ g1])

    def blocks(self) -> list[slice]:
        return [slice(0, self.n1), slice(self.n1, self.n1 + self.n2)]


@dataclass(frozen=True, eq=False)
class CoarseQuadratic:
    H: np.ndarray
    c: np.ndarray

    def value(self, dx2) -> float:
        dx2 = np.asarray(dx2, dtype=float)
        return float(0.5 * dx2 @ self.H @ dx2 + self.c @ dx2)

    def gradient(self, dx2) -> np.ndarray:
        return self.H @ np.asarray(dx2, dtype=float) + self.c

    def minimizer(self) -> np.ndarray:
        return spd_solve(self.H, -self.c)


def _check_dims(qp: QuadraticProblem, x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (qp.n1,) or x2.shape != (qp.n2,):
        raise DimensionError(f"x1, x2 have shapes {x1.shape}, {x2.shape}; expected ({qp.n1},), ({qp.n2},)")
    return x1, x2


def full_objective(qp: QuadraticProblem, x1, x2) -> float:
    x1, x2 = _check_dims(qp, x1, x2)
    y = x1 + qp.P @ x2
    return float(0.5 * y @ qp.A @ y + qp.b @ y)


def coarse_reduce(qp: QuadraticProblem, x1) -> CoarseQuadratic:
    """Galerkin coarse quadratic for the increment in ``x2`` from ``x2 = 0``.

    ``x1 + P x2*`` with ``x2*`` the coarse minimizer minimizes the full
    objective over the affine set ``{x1 + P x2}``.
    """
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (qp.n1,):
        raise DimensionError(f"x1 has shape {x1.shape}, expected ({qp.n1},)")
    rank = np.linalg.matrix_rank(qp.P)
    if rank < qp.n2:
        raise RankDeficientError(f"P has rank {rank} < {qp.n2} columns")
    H = qp.P.T @ qp.A @ qp.P
    H = 0.5 * (H + H.T)
    c = qp.P.T @ (qp.A @ x1 + qp.b)
    return CoarseQuadratic(H, c)


def restricted_minimizer(qp: QuadraticProblem, x1) -> np.ndarray:
    """argmin over x2 of the full objective, without forming ``P^T A P``.

    With ``A = L L^T`` the objective equals ``1/2 |L^T (x1 + P x2) + L^{-1} b|^2``
    up to a constant, so x2 solves a linear least-squares problem.
    """
    x1 = np.asarray(x1, dtype=float)
    low = cholesky(qp.A)
    # A = L L^T: minimize |L^T (x1 + P x2) + L^{-1} b|^2
    m = low.T @ qp.P
    rhs = -(low.T @ x1 + cho_solve_lower(low, qp.b))
    x2, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return x2


def cho_solve_lower(low: np.ndarray, b) -> np.ndarray:
    n = low.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - low[i, :i] @ y[:i]) / low[i, i]
    return y


def linear_prolongation(n2: int) -> np.ndarray:
    """1-D linear interpolation from ``n2`` coarse to ``2 n2 + 1`` fine nodes."""
    if n2 < 1:
        raise ValueError(f"n2 must be >= 1, got {n2}")
    P = np.zeros((2 * n2 + 1, n2))
    for j in range(n2):
        P[2 * j, j] = 0.5
        P[2 * j + 1, j] = 1.0
        P[2 * j + 2, j] = 0.5
    return P


def taylor_h1(grad_f, P, sigma: float, dx2) -> float:
    """First-order Galerkin model ``sigma (P^T grad F)^T dx2``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return float(sigma * (np.asarray(P).T @ np.asarray(grad_f, dtype=float)) @ np.asarray(dx2, dtype=float))


def taylor_h2(grad_f, hess_f, P, sigma: float, dx2) -> float:
    """Second-order Galerkin model ``h1 + 1/2 sigma^2 dx2^T (P^T hess F P) dx2``."""
    hess_f = np.asarray(hess_f, dtype=float)
    if not is_symmetric(hess_f):
        raise ValueError("Hessian is not symmetric")
    P = np.asarray(P, dtype=float)
    dx2 = np.asarray(dx2, dtype=float)
    quad = dx2 @ (P.T @ hess_f @ P) @ dx2
    return taylor_h1(grad_f, P, sigma, dx2) + 0.5 * sigma**2 * float(quad)


def random_quadratic(n2: int, seed, cond: float = 100.0) -> QuadraticProblem:
    """Random SPD instance on ``2 n2 + 1`` fine nodes with linear prolongation."""
    rng = make_rng(seed)
    n1 = 2 * n2 + 1
    A = random_spd(n1, rng, cond=cond)
    b = rng.standard_normal(n1)
    return QuadraticProblem(A, b, linear_prolongation(n2))


def save_quadratic(path, qp: QuadraticProblem) -> None:
    """Text format: a format line, ``n1 n2``, then A, b and P row by row."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {QUADRATIC_FORMAT} 1\n{qp.n1} {qp.n2}\n")
        for row in qp.A:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in qp.b) + "\n")
        for row in qp.P:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_quadratic(path) -> QuadraticProblem:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        n1, n2 = (int(v) for v in lines[0].split())
        rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
        A = np.array(rows[:n1])
        b = np.array(rows[n1])
        P = np.array(rows[n1 + 1 : 2 * n1 + 1])
    except (ValueError, IndexError) as err:
        raise ValueError(f"{path}: malformed quadratic file ({err})") from err
    if A.shape != (n1, n1) or P.shape != (n1, n2):
        raise DimensionError(f"{path}: entries do not match header {n1} {n2}")
    return QuadraticProblem(A, b, P)
