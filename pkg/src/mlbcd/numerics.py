"""Seeded sampling and a dense SPD solver.

All sampling routines are pure functions of their arguments and seed: the
same seed and call sequence give a bit-identical stream.  Matrices are plain
row-major ``float64`` numpy arrays.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from mlbcd.exceptions import DimensionError, GeometryError, NotSPDError

SEED_MAX = 2**64


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    """Generator for ``seed``; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(check_seed(seed))


def check_box(box) -> np.ndarray:
    arr = np.asarray(box, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise GeometryError(f"box must be a list of (lo, hi) pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("box bounds must be finite")
    bad = np.flatnonzero(arr[:, 0] >= arr[:, 1])
    if bad.size:
        i = int(bad[0])
        raise GeometryError(f"box dimension {i} has lo={arr[i, 0]} >= hi={arr[i, 1]}")
    return arr


def lhs_sample(n: int, box: Sequence[tuple[float, float]], seed) -> np.ndarray:
    """Latin hypercube sample of ``n`` points in an axis-aligned box.

    Each dimension is split into ``n`` equal strata and every stratum holds
    exactly one point, drawn uniformly inside the stratum.  Returns an
    ``(n, d)`` array.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    bounds = check_box(box)
    rng = make_rng(seed)
    d = bounds.shape[0]
    out = np.empty((n, d))
    for k in range(d):
        strata = rng.permutation(n)
        u = (strata + rng.random(n)) / n
        lo, hi = bounds[k]
        out[:, k] = lo + (hi - lo) * u
    # guards against lo + (hi-lo)*u rounding up to hi
    np.minimum(out, np.nextafter(bounds[:, 1], bounds[:, 0]), out=out)
    return out


def sample_normal(n: int, std: float, seed) -> np.ndarray:
    """``n`` draws from a centred normal with standard deviation ``std``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not std >= 0:
        raise ValueError(f"std must be non-negative, got {std}")
    rng = make_rng(seed)
    if std == 0:
        return np.zeros(n)
    return rng.normal(0.0, std, size=n)


def as_matrix(a, name="matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.all(np.abs(a - a.T) <= rtol * scale))


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotSPDError naming the first pivot that is not positive.
    """
    a = as_matrix(a, "A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"A must be square, got shape {a.shape}")
    low = np.zeros_like(a)
    for j in range(n):
        row = low[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > 0:
            raise NotSPDError(j, float(pivot))
        low[j, j] = math.sqrt(pivot)
        low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ row) / low[j, j]
    return low


def cho_solve(low: np.ndarray, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    n = low.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - low[i + 1 :, i] @ x[i + 1 :]) / low[i, i]
    return x


def spd_solve(a, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky."""
    a = as_matrix(a, "A")
    b = np.asarray(b, dtype=float)
    if b.shape != (a.shape[0],):
        raise DimensionError(f"b has shape {b.shape}, expected ({a.shape[0]},)")
    if not is_symmetric(a):
        raise ValueError("A is not symmetric")
    return cho_solve(cholesky(a), b)


def random_spd(n: int, seed, cond: float = 100.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-spaced in ``[1, cond]``."""
    rng = make_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n) if n > 1 else np.ones(1)
    a = (q * eig) @ q.T
    return 0.5 * (a + a.T)


def write_points_csv(path, points) -> None:
    """One point per row, 17 significant digits, LF line endings."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in pts:
            w.writerow([f"{v:.17g}" for v in row])


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.asarray(rows, dtype=float)
