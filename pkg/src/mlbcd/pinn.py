"""Poisson benchmark problems, collocation pools and the PINN loss.

Every problem is posed on the exterior region ``Omega_e`` of a domain with an
embedded boundary: the PDE residual is sampled in ``Omega_e``, the outer
boundary ``gamma_e`` and the inner boundary ``gamma_i`` each carry a Robin
type condition ``a u + b du/dn = data`` with ``n`` the unit normal pointing
into ``Omega_e``.

Loss components are reported as weighted contributions, so that
``total = sum(components)``; the unweighted mean squared residuals are
``component / weight``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from mlbcd.composite import CompositeNetwork, as_composite, propagate_group
from mlbcd.exceptions import DimensionError, GeometryError, NonFiniteError
from mlbcd.network import locate_nonfinite
from mlbcd.numerics import lhs_sample, make_rng
from mlbcd.optimizer import adam_update

BOUNDARIES = ("gamma_e", "gamma_i")
COMPONENTS = ("interior", "gamma_e", "gamma_i")
CONSISTENCY_TOL = 1e-8
MIN_ACCEPTANCE = 0.01


# -- geometry -----------------------------------------------------------------


def _square_perimeter(t, half):
    """Arclength-uniform points on the square boundary with inward normals."""
    s = np.mod(np.asarray(t, dtype=float), 1.0) * 4.0
    side = np.minimum(s.astype(int), 3)
    u = (s - side) * 2 * half - half
    pts = np.empty((s.size, 2))
    nrm = np.empty((s.size, 2))
    for k, (px, py, nx, ny) in enumerate(
        [(u, -half, 0.0, 1.0), (half, u, -1.0, 0.0), (-u, half, 0.0, -1.0), (-half, -u, 1.0, 0.0)]
    ):
        m = side == k
        pts[m, 0] = px[m] if isinstance(px, np.ndarray) else px
        pts[m, 1] = py[m] if isinstance(py, np.ndarray) else py
        nrm[m] = (nx, ny)
    return pts, nrm


def _circle(t, radius, sign):
    ang = 2 * np.pi * np.asarray(t, dtype=float)
    radial = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return radius * radial, sign * radial


@dataclass(frozen=True)
class SquareWithCircle:
    """``[-h, h]^2`` minus the disk of radius ``radius`` at the origin."""

    half_width: float = 1.0
    radius: float = 0.5
    name: str = "square_with_circle"

    def box(self):
        return [(-self.half_width, self.half_width)] * 2

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (np.max(np.abs(z), axis=1) < self.half_width) & (np.hypot(z[:, 0], z[:, 1]) > self.radius)

    def boundary(self, name, t):
        if name == "gamma_e":
            return _square_perimeter(t, self.half_width)
        if name == "gamma_i":
            return _circle(t, self.radius, +1.0)
        raise KeyError(name)

    def on_boundary(self, name, z) -> np.ndarray:
        """Distance of each point to the named boundary curve."""
        z = np.asarray(z, dtype=float)
        if name == "gamma_e":
            return np.abs(np.max(np.abs(z), axis=1) - self.half_width)
        return np.abs(np.hypot(z[:, 0], z[:, 1]) - self.radius)


@dataclass(frozen=True)
class SquareWithFourLobe:
    """Unit square centred on a lobed inclusion ``r < |r_mean + r_dev cos(4 theta)|``.

    Coordinates are centred on the inclusion, so the square is
    ``[-0.5, 0.5]^2``.  With the default constants ``r_mean < r_dev`` the
    polar function changes sign and the inclusion has eight lobes; swap the
    constants for a four-lobe flower.
    """

    r_mean: float = 0.0305
    r_dev: float = 0.117
    half_width: float = 0.5
    name: str = "square_with_four_lobe"

    def __post_init__(self):
        if abs(self.r_mean) + abs(self.r_dev) >= self.half_width:
            raise GeometryError("lobed inclusion does not fit inside the square")

    def box(self):
        return [(-self.half_width, self.half_width)] * 2

    def radius(self, theta):
        return np.abs(self.r_mean + self.r_dev * np.cos(4 * theta))

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.hypot(z[:, 0], z[:, 1])
        theta = np.arctan2(z[:, 1], z[:, 0])
        return (np.max(np.abs(z), axis=1) < self.half_width) & (r > self.radius(theta))

    def boundary(self, name, t):
        if name == "gamma_e":
            return _square_perimeter(t, self.half_width)
        if name != "gamma_i":
            raise KeyError(name)
        theta = 2 * np.pi * np.asarray(t, dtype=float)
        raw = self.r_mean + self.r_dev * np.cos(4 * theta)
        rho = np.abs(raw)
        drho = np.sign(raw) * (-4 * self.r_dev * np.sin(4 * theta))
        c, s = np.cos(theta), np.sin(theta)
        pts = np.stack([rho * c, rho * s], axis=1)
        tangent = np.stack([drho * c - rho * s, drho * s + rho * c], axis=1)
        nrm = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return pts, nrm

    def on_boundary(self, name, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if name == "gamma_e":
            return np.abs(np.max(np.abs(z), axis=1) - self.half_width)
        theta = np.arctan2(z[:, 1], z[:, 0])
        return np.abs(np.hypot(z[:, 0], z[:, 1]) - self.radius(theta))


@dataclass(frozen=True)
class Annulus:
    r_inner: float = 0.25
    r_outer: float = 0.75
    name: str = "annulus"

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise GeometryError(f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}")

    def box(self):
        return [(-self.r_outer, self.r_outer)] * 2

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.hypot(z[:, 0], z[:, 1])
        return (r > self.r_inner) & (r < self.r_outer)

    def boundary(self, name, t):
        if name == "gamma_e":
            return _circle(t, self.r_outer, -1.0)
        if name == "gamma_i":
            return _circle(t, self.r_inner, +1.0)
        raise KeyError(name)

    def on_boundary(self, name, z) -> np.ndarray:
        r = np.hypot(np.asarray(z)[:, 0], np.asarray(z)[:, 1])
        return np.abs(r - (self.r_outer if name == "gamma_e" else self.r_inner))


def geometry_header(geometry) -> str:
    fields = {k: v for k, v in geometry.__dict__.items() if k != "name"}
    return geometry.name + "(" + ",".join(f"{k}={v!r}" for k, v in sorted(fields.items())) + ")"


# -- problems -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """``coef_u * u + coef_dn * du/dn = data(z)``."""

    coef_u: float
    coef_dn: float
    data: Callable

    def __post_init__(self):
        if self.coef_u == 0 and self.coef_dn == 0:
            raise ValueError("boundary condition needs a non-zero coefficient")

    @classmethod
    def dirichlet(cls, data) -> "BoundaryCondition":
        return cls(1.0, 0.0, data)

    @classmethod
    def neumann(cls, data) -> "BoundaryCondition":
        return cls(0.0, 1.0, data)


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    """``Laplacian(u) = source`` in Omega_e with conditions on both boundaries."""

    name: str
    geometry: object
    source: Callable
    bc_e: BoundaryCondition
    bc_i: BoundaryCondition
    weights: tuple = (1.0, 1.0, 1.0)  # interior, gamma_e, gamma_i
    exact: Callable | None = None
    params: dict = field(default_factory=dict)

    def bc(self, name) -> BoundaryCondition:
        return self.bc_e if name == "gamma_e" else self.bc_i

    def weight(self, component) -> float:
        return float(self.weights[COMPONENTS.index(component)])

    def with_weights(self, weights) -> "PoissonProblem":
        return PoissonProblem(self.name, self.geometry, self.source, self.bc_e, self.bc_i,
                              tuple(float(w) for w in weights), self.exact, dict(self.params))


def _const(value):
    def data(z):
        z = jnp.asarray(z)
        return jnp.full(z.shape[:-1], float(value), dtype=z.dtype)

    return data


def _polar(z):
    z = jnp.asarray(z)
    return jnp.sqrt(z[..., 0] ** 2 + z[..., 1] ** 2), jnp.arctan2(z[..., 1], z[..., 0])


def consistency_residuals(problem: PoissonProblem, n: int = 1000, seed: int = 20240601) -> dict:
    """Max absolute PDE and boundary residuals of the exact solution.

    Derivatives of the exact solution come from automatic differentiation,
    independent of the hand-derived source and boundary data.
    """
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    rng = make_rng(seed)
    u = problem.exact
    grad_u = jax.vmap(jax.grad(lambda p: u(p[None, :])[0]))
    lap_u = jax.vmap(lambda p: jnp.trace(jax.hessian(lambda q: u(q[None, :])[0])(p)))
    z = _reject(problem.geometry, n, rng)
    out = {"interior": float(np.max(np.abs(np.asarray(lap_u(z)) - np.asarray(problem.source(z)))))}
    for name in BOUNDARIES:
        bc = problem.bc(name)
        t = lhs_sample(n, [(0.0, 1.0)], rng)[:, 0]
        pts, nrm = problem.geometry.boundary(name, t)
        dn = np.sum(np.asarray(grad_u(pts)) * nrm, axis=1)
        lhs = bc.coef_u * np.asarray(u(pts)) + bc.coef_dn * dn
        out[name] = float(np.max(np.abs(lhs - np.asarray(bc.data(pts)))))
    return out


def check_consistency(problem: PoissonProblem, tol: float = CONSISTENCY_TOL) -> PoissonProblem:
    res = consistency_residuals(problem)
    bad = {k: v for k, v in res.items() if not v <= tol}
    if bad:
        raise ValueError(f"exact solution of {problem.name!r} violates its equations: {bad}")
    return problem


def make_hier_problem(alpha: int = 2, beta: int = 4, verify: bool = True) -> PoissonProblem:
    """Two-frequency cosine solution on the square with a circular hole, Dirichlet everywhere."""
    if int(alpha) != alpha or int(beta) != beta:
        raise ValueError("alpha and beta must be integers")
    a, b = float(alpha) * math.pi, float(beta) * math.pi
    pi = math.pi

    def exact(z):
        z = jnp.asarray(z)
        return jnp.cos(a * z[..., 0] + pi * z[..., 1]) + jnp.cos(pi * z[..., 0] + b * z[..., 1])

    def source(z):
        z = jnp.asarray(z)
        return (-(a**2 + pi**2) * jnp.cos(a * z[..., 0] + pi * z[..., 1])
                - (pi**2 + b**2) * jnp.cos(pi * z[..., 0] + b * z[..., 1]))

    prob = PoissonProblem(
        name="hier", geometry=SquareWithCircle(), source=source,
        bc_e=BoundaryCondition.dirichlet(exact), bc_i=BoundaryCondition.dirichlet(exact),
        weights=(1.0, 1.0, 1.0), exact=exact, params={"alpha": int(alpha), "beta": int(beta)},
    )
    return check_consistency(prob) if verify else prob


TEST_WEIGHTS = (1.0, 100.0, 1.0)


def _test1():
    k, n, R = 1, -5, 0.5
    D = math.sqrt(2.0) ** (-max(k, n))
    C = -D * k / n

    def exact(z):
        rho, om = _polar(z)
        return C * (rho / R) ** (n - k) * rho**k * jnp.sin(n * om) + R * jnp.log(rho)

    # the solution is harmonic for rho > 0, so the source vanishes
    def h(z):
        rho, om = _polar(z)
        return C * n * R ** (k - n) * rho ** (n - 1) * jnp.sin(n * om) + R / rho

    return PoissonProblem(
        name="test1", geometry=SquareWithCircle(), source=_const(0.0),
        bc_e=BoundaryCondition.dirichlet(exact), bc_i=BoundaryCondition.neumann(h),
        weights=TEST_WEIGHTS, exact=exact, params={"k": k, "n": n, "R": R, "D": D},
    )


def _test2(r_mean=0.0305, r_dev=0.117):
    centres = [(sx * 0.45, sy * 0.45) for sx in (1, -1) for sy in (1, -1)]

    def exact(z):
        z = jnp.asarray(z)
        x, y = z[..., 0], z[..., 1]
        u = 0.3 * jnp.exp(-10 * (x**2 + y**2))
        for cx, cy in centres:
            u = u + jnp.exp(-10 * ((x - cx) ** 2 + (y - cy) ** 2))
        return u

    def source(z):
        z = jnp.asarray(z)
        x, y = z[..., 0], z[..., 1]
        r2 = x**2 + y**2
        r = 12 * (10 * r2 - 1) * jnp.exp(-10 * r2)
        for cx, cy in centres:
            rk2 = (x - cx) ** 2 + (y - cy) ** 2
            r = r + 40 * (10 * rk2 - 1) * jnp.exp(-10 * rk2)
        return r

    return PoissonProblem(
        name="test2", geometry=SquareWithFourLobe(r_mean, r_dev), source=source,
        bc_e=BoundaryCondition.dirichlet(exact), bc_i=BoundaryCondition.dirichlet(exact),
        weights=TEST_WEIGHTS, exact=exact, params={"r_mean": r_mean, "r_dev": r_dev},
    )


def _annulus_problem(name, exact, source_value):
    geo = Annulus()
    return PoissonProblem(
        name=name, geometry=geo, source=_const(source_value),
        bc_e=BoundaryCondition.dirichlet(_const(0.0)), bc_i=BoundaryCondition.neumann(_const(1.0)),
        weights=TEST_WEIGHTS, exact=exact, params={"r_inner": geo.r_inner, "r_outer": geo.r_outer},
    )


def _test3():
    ri, ro = 0.25, 0.75

    def exact(z):
        rho, _ = _polar(z)
        return ri * jnp.log(rho / ro)

    return _annulus_problem("test3", exact, 0.0)


def _test4():
    ri, ro = 0.25, 0.75

    def exact(z):
        rho, _ = _polar(z)
        return (rho**2 - ro**2) / 4 + ri * (1 - ri / 2) * jnp.log(rho / ro)

    return _annulus_problem("test4", exact, 1.0)


def make_test_problem(pid: int, verify: bool = True, **geometry) -> PoissonProblem:
    """Benchmark problems 1-4 (circle-in-square, lobed inclusion, two annulus problems)."""
    builders = {1: _test1, 2: _test2, 3: _test3, 4: _test4}
    if pid not in builders:
        raise KeyError(f"unknown test problem {pid!r}; expected 1-4")
    if geometry and pid != 2:
        raise TypeError(f"test problem {pid} takes no geometry overrides")
    prob = builders[pid](**geometry)
    return check_consistency(prob) if verify else prob


PROBLEM_NAMES = ("hier", "test1", "test2", "test3", "test4")


def make_problem(name: str, verify: bool = True, **kw) -> PoissonProblem:
    if name == "hier":
        return make_hier_problem(verify=verify, **kw)
    if name in PROBLEM_NAMES:
        return make_test_problem(int(name[-1]), verify=verify, **kw)
    raise KeyError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")


# -- sampling -----------------------------------------------------------------


def _reject(geometry, n: int, rng) -> np.ndarray:
    """``n`` points of a Latin hypercube stream over the box that fall in the region.

    Each round draws a fresh Latin hypercube; stratification of the
    accepted set is therefore only approximate.
    """
    box = geometry.box()
    kept = []
    total = drawn = 0
    rate = None
    while total < n:
        need = n - total
        m = need if rate is None else int(math.ceil(need / rate * 1.1)) + 16
        pts = lhs_sample(m, box, rng)
        ok = geometry.contains(pts)
        drawn += m
        kept.append(pts[ok])
        total += int(ok.sum())
        rate = max(total, 1) / drawn
        if total / drawn < MIN_ACCEPTANCE and drawn >= 100:
            raise GeometryError(f"acceptance rate {total / drawn:.4f} below {MIN_ACCEPTANCE}")
    return np.concatenate(kept)[:n]


@dataclass(frozen=True, eq=False)
class BoundarySet:
    points: np.ndarray
    normals: np.ndarray
    target: np.ndarray
    coef_u: float
    coef_dn: float

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class SamplePool:
    interior: np.ndarray
    source: np.ndarray
    boundaries: dict  # name -> BoundarySet
    test: np.ndarray
    exact_test: np.ndarray | None
    seed: int | None = None
    geometry: str = ""
    problem: str = ""

    @property
    def sizes(self) -> dict:
        out = {"interior": len(self.interior)}
        out.update({k: len(v) for k, v in self.boundaries.items()})
        out["test"] = len(self.test)
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.interior, self.source, self.test):
            h.update(np.ascontiguousarray(arr).tobytes())
        for name in BOUNDARIES:
            b = self.boundaries[name]
            for arr in (b.points, b.normals, b.target):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _boundary_set(problem: PoissonProblem, name, pts, nrm) -> BoundarySet:
    bc = problem.bc(name)
    return BoundarySet(pts, nrm, np.asarray(bc.data(pts), dtype=float), float(bc.coef_u), float(bc.coef_dn))


def sample_pool(problem: PoissonProblem, n_interior: int, n_boundary, n_test: int, seed) -> SamplePool:
    """Training and test points for ``problem``.

    Interior and test points come from Latin hypercube streams over the
    bounding box with rejection outside ``Omega_e``; boundary points come
    from a Latin hypercube in the curve parameter.  ``n_boundary`` is an int
    (per boundary) or a dict keyed by boundary name.
    """
    if isinstance(n_boundary, dict):
        nb = {k: int(n_boundary[k]) for k in BOUNDARIES}
    else:
        nb = {k: int(n_boundary) for k in BOUNDARIES}
    if n_interior < 1 or n_test < 1 or min(nb.values()) < 1:
        raise ValueError("pool sizes must be >= 1")
    rng = make_rng(seed)
    geo = problem.geometry
    interior = _reject(geo, n_interior, rng)
    boundaries = {}
    for name in BOUNDARIES:
        t = lhs_sample(nb[name], [(0.0, 1.0)], rng)[:, 0]
        pts, nrm = geo.boundary(name, t)
        boundaries[name] = _boundary_set(problem, name, pts, nrm)
    test = _reject(geo, n_test, rng)
    exact_test = None if problem.exact is None else np.asarray(problem.exact(test), dtype=float)
    return SamplePool(
        interior=interior, source=np.asarray(problem.source(interior), dtype=float),
        boundaries=boundaries, test=test, exact_test=exact_test,
        seed=None if isinstance(seed, np.random.Generator) else int(seed),
        geometry=geometry_header(geo), problem=problem.name,
    )


def draw_batch(pool: SamplePool, n_interior: int, n_boundary, rng) -> dict:
    """Index sets of a minibatch: uniform without replacement within each set."""
    nb = n_boundary if isinstance(n_boundary, dict) else {k: n_boundary for k in BOUNDARIES}
    sizes = pool.sizes
    want = {"interior": int(n_interior), **{k: int(nb[k]) for k in BOUNDARIES}}
    for k, m in want.items():
        if m > sizes[k]:
            raise ValueError(f"batch asks for {m} {k} points but the pool holds {sizes[k]}")
        if m < 1:
            raise ValueError(f"batch size for {k} must be >= 1")
    rng = make_rng(rng)
    return {k: np.sort(rng.choice(sizes[k], size=m, replace=False)) for k, m in want.items()}


def save_pool(path, pool: SamplePool) -> None:
    """CSV with a two-line header (seed and geometry), one point per row.

    Columns: set, x, y, nx, ny, target.  ``target`` is the source term for
    interior points, the boundary data for boundary points and the exact
    solution (or empty) for test points.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={pool.seed} problem={pool.problem}\n# geometry={pool.geometry}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "x", "y", "nx", "ny", "target"])
        fmt = lambda v: f"{v:.17g}"  # noqa: E731
        for p, r in zip(pool.interior, pool.source):
            w.writerow(["interior", fmt(p[0]), fmt(p[1]), "", "", fmt(r)])
        for name in BOUNDARIES:
            b = pool.boundaries[name]
            for p, nv, g in zip(b.points, b.normals, b.target):
                w.writerow([name, fmt(p[0]), fmt(p[1]), fmt(nv[0]), fmt(nv[1]), fmt(g)])
        ex = pool.exact_test if pool.exact_test is not None else [None] * len(pool.test)
        for p, u in zip(pool.test, ex):
            w.writerow(["test", fmt(p[0]), fmt(p[1]), "", "", "" if u is None else fmt(u)])


def load_pool(path, problem: PoissonProblem) -> SamplePool:
    """Read a pool written by :func:`save_pool`; coefficients come from ``problem``."""
    seed = None
    geometry = prob_name = ""
    rows = {k: [] for k in ("interior", "test") + BOUNDARIES}
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("seed="):
                parts = dict(p.split("=", 1) for p in body.split())
                seed = None if parts.get("seed") in (None, "None") else int(parts["seed"])
                prob_name = parts.get("problem", "")
            elif body.startswith("geometry="):
                geometry = body.split("=", 1)[1]
        reader = csv.DictReader(fh, fieldnames=line.strip().split(","))
        for row in reader:
            rows[row["set"]].append(row)
    if prob_name and prob_name != problem.name:
        raise ValueError(f"{path}: pool was sampled for {prob_name!r}, not {problem.name!r}")
    f = lambda rs, k: np.array([float(r[k]) for r in rs])  # noqa: E731
    interior = np.stack([f(rows["interior"], "x"), f(rows["interior"], "y")], axis=1)
    boundaries = {}
    for name in BOUNDARIES:
        rs = rows[name]
        bc = problem.bc(name)
        boundaries[name] = BoundarySet(
            np.stack([f(rs, "x"), f(rs, "y")], axis=1), np.stack([f(rs, "nx"), f(rs, "ny")], axis=1),
            f(rs, "target"), float(bc.coef_u), float(bc.coef_dn),
        )
    test = np.stack([f(rows["test"], "x"), f(rows["test"], "y")], axis=1)
    ex = [r["target"] for r in rows["test"]]
    exact_test = None if any(v == "" for v in ex) else np.array([float(v) for v in ex])
    return SamplePool(interior, f(rows["interior"], "target"), boundaries, test, exact_test,
                      seed, geometry, problem.name)


# -- losses -------------------------------------------------------------------


def residual_components(lap, source, bnd, weights):
    """Weighted loss contributions from precomputed network fields.

    ``bnd`` maps boundary name to ``(u, grad or None, normals, target, a, b)``.
    """
    comps = [weights[0] * jnp.mean((lap - source) ** 2)]
    for k, name in enumerate(BOUNDARIES):
        u, grad, nrm, target, a, b = bnd[name]
        res = a * u - target
        if grad is not None:
            res = res + b * jnp.sum(grad * nrm, axis=1)
        comps.append(weights[k + 1] * jnp.mean(res**2))
    comps = jnp.stack(comps)
    return jnp.sum(comps), comps


def _fields(subnets, params, z_int, boundaries):
    """Network Laplacian at interior points and values/gradients on boundaries.

    A boundary whose normal-derivative coefficient is ``None`` gets no gradient.
    """
    _, _, lap = propagate_group(subnets, params, z_int, order=2)
    out = {}
    for name, (pts, nrm, target, a, b) in boundaries.items():
        order = 0 if b is None else 1
        u, g, _ = propagate_group(subnets, params, pts, order=order)
        out[name] = (u, g, nrm, target, a, b)
    return lap, out


@dataclass(frozen=True, eq=False)
class Batch:
    """Materialized collocation points with their targets."""

    interior: np.ndarray
    source: np.ndarray
    boundaries: dict  # name -> BoundarySet

    @classmethod
    def from_pool(cls, pool: SamplePool, idx: dict | None = None) -> "Batch":
        if idx is None:
            return cls(pool.interior, pool.source, dict(pool.boundaries))
        bnd = {}
        for name in BOUNDARIES:
            b = pool.boundaries[name]
            i = idx[name]
            bnd[name] = BoundarySet(b.points[i], b.normals[i], b.target[i], b.coef_u, b.coef_dn)
        return cls(pool.interior[idx["interior"]], pool.source[idx["interior"]], bnd)

    def device(self):
        bnd = {
            name: (jnp.asarray(b.points), jnp.asarray(b.normals), jnp.asarray(b.target), b.coef_u, b.coef_dn)
            for name, b in self.boundaries.items()
        }
        return jnp.asarray(self.interior), jnp.asarray(self.source), bnd


def _batch_components(subnets, neumann, params, z, r, pts, nrms, targets, coefs, weights):
    # coefficient values and weights are traced; ``neumann`` only says which
    # boundaries need gradients
    bnd = {
        name: (pts[k], nrms[k], targets[k], coefs[k, 0], coefs[k, 1] if neumann[k] else None)
        for k, name in enumerate(BOUNDARIES)
    }
    lap, fields_ = _fields(subnets, params, z, bnd)
    return residual_components(lap, r, fields_, weights)


_components_jit = jax.jit(_batch_components, static_argnums=(0, 1))


def _batch_value_and_grad(subnets, neumann, params, *arrays):
    f = lambda p: _batch_components(subnets, neumann, p, *arrays)[0]  # noqa: E731
    return jax.value_and_grad(f)(params)


_value_and_grad_jit = jax.jit(_batch_value_and_grad, static_argnums=(0, 1))


class PINNLoss:
    """Total PINN loss on a fixed batch as a function of the global parameters.

    Compiled code is shared by every loss with the same architecture and
    batch shapes.
    """

    def __init__(self, problem: PoissonProblem, cn, batch: Batch):
        if len(batch.interior) == 0 or any(len(b) == 0 for b in batch.boundaries.values()):
            raise ValueError("batches must be non-empty")
        self.problem = problem
        self.cn = as_composite(cn)
        self.batch = batch
        bs = [batch.boundaries[k] for k in BOUNDARIES]
        # boundary gradients are always formed (a zero coefficient adds an
        # exact 0.0), so all problems share one compilation per architecture
        self._static = (tuple(self.cn.subnets), (True,) * len(bs))
        self._arrays = (
            jnp.asarray(batch.interior), jnp.asarray(batch.source),
            tuple(jnp.asarray(b.points) for b in bs),
            tuple(jnp.asarray(b.normals) for b in bs),
            tuple(jnp.asarray(b.target) for b in bs),
            jnp.asarray([(b.coef_u, b.coef_dn) for b in bs], dtype=jnp.float64),
            jnp.asarray(problem.weights, dtype=jnp.float64),
        )

    def __call__(self, params):
        return _batch_components(*self._static, params, *self._arrays)[0]

    def components(self, params):
        total, comps = _components_jit(*self._static, jnp.asarray(params, dtype=jnp.float64), *self._arrays)
        return float(total), dict(zip(COMPONENTS, (float(c) for c in np.asarray(comps))))

    def value_and_grad(self, params):
        value, g = _value_and_grad_jit(*self._static, jnp.asarray(params, dtype=jnp.float64), *self._arrays)
        return float(value), np.asarray(g)

    def locate_nonfinite(self, params):
        params = np.asarray(params, dtype=float)
        pts = [self.batch.interior] + [b.points for b in self.batch.boundaries.values()]
        for net, block in zip(self.cn.subnets, self.cn.split(params)):
            for z in pts:
                layer = locate_nonfinite(net, block, z)
                if layer is not None:
                    return layer
        return None


def pinn_loss(problem: PoissonProblem, cn, params, batch: Batch):
    """``(total, {component: weighted contribution})`` on a batch."""
    cn = as_composite(cn)
    params = np.asarray(params, dtype=float)
    if params.shape != (cn.n,):
        raise DimensionError(f"params has shape {params.shape}, expected ({cn.n},)")
    loss = PINNLoss(problem, cn, batch)
    total, comps = loss.components(params)
    if not np.isfinite(total):
        raise NonFiniteError("non-finite PINN loss", layer=loss.locate_nonfinite(params))
    return total, comps


def mse(cn, params, test_points, exact) -> float:
    """Mean squared error against ``exact`` (array of values or callable)."""
    from mlbcd.composite import composite_forward

    cn = as_composite(cn)
    pred = np.atleast_1d(composite_forward(cn, params, np.atleast_2d(test_points)))
    ref = exact(test_points) if callable(exact) else exact
    ref = np.asarray(ref, dtype=float)
    return float(np.mean((pred - ref) ** 2))


# -- training objective -------------------------------------------------------
#
# Compiled kernels are module-level with the architecture, boundary types
# and weights as static arguments, so every objective with the same
# structure (e.g. all seeds of one experiment) shares one compilation.
# ``data`` is ``(z, r, pts, nrms, targets, test, exact)`` with per-boundary
# tuples in ``BOUNDARIES`` order.


def _bnd_dict(data, coefs):
    _, _, pts, nrms, targets, _, _ = data
    return {name: (pts[k], nrms[k], targets[k], coefs[k][0], coefs[k][1] or None)
            for k, name in enumerate(BOUNDARIES)}


def _frozen_kernel(subnets, coefs, params, data):
    z, _, pts, _, _, test, _ = data
    _, _, lap = propagate_group(subnets, params, z, order=2)
    bnd = []
    for k in range(len(BOUNDARIES)):
        u, g, _ = propagate_group(subnets, params, pts[k], order=1 if coefs[k][1] != 0 else 0)
        bnd.append((u, jnp.zeros(pts[k].shape) if g is None else g))
    u_test, _, _ = propagate_group(subnets, params, test, order=0)
    return lap, tuple(bnd), u_test


_frozen_jit = jax.jit(_frozen_kernel, static_argnums=(0, 1))


def _batch_loss_kernel(subnets, coefs, weights, x, cache, idx, data):
    z, r, pts, nrms, targets, _, _ = data
    c_lap, c_bnd, _ = cache
    i_int, i_bnd = idx
    _, _, lap = propagate_group(subnets, x, z[i_int], order=2)
    lap = lap + c_lap[i_int]
    bnd = {}
    for k, name in enumerate(BOUNDARIES):
        i = i_bnd[k]
        a, b = coefs[k]
        u, g, _ = propagate_group(subnets, x, pts[k][i], order=1 if b != 0 else 0)
        cu, cg = c_bnd[k]
        u = u + cu[i]
        g = None if g is None else g + cg[i]
        bnd[name] = (u, g, nrms[k][i], targets[k][i], a, b)
    return residual_components(lap, r[i_int], bnd, weights)


def _step_kernel(subnets, coefs, weights, betas, x, m, v, t, lr, cache, idx, data):
    beta1, beta2, eps_hat = betas
    (total, comps), g = jax.value_and_grad(
        lambda p: _batch_loss_kernel(subnets, coefs, weights, p, cache, idx, data), has_aux=True
    )(x)
    test, exact = data[5], data[6]
    if exact is None:
        err = jnp.nan
    else:
        u_test, _, _ = propagate_group(subnets, x, test, order=0)
        err = jnp.mean((u_test + cache[2] - exact) ** 2)
    x_new, m, v = adam_update(x, m, v, g, t, lr, beta1, beta2, eps_hat, xp=jnp)
    return x_new, m, v, total, comps, err, jnp.linalg.norm(g)


_step_jit = jax.jit(_step_kernel, static_argnums=(0, 1, 2, 3))


def _full_grad_kernel(subnets, coefs, weights, params, data):
    z, r = data[0], data[1]

    def loss(p):
        lap, bnd = _fields(subnets, p, z, _bnd_dict(data, coefs))
        return residual_components(lap, r, bnd, weights)[0]

    return jax.value_and_grad(loss)(params)


_full_grad_jit = jax.jit(_full_grad_kernel, static_argnums=(0, 1, 2))


class PINNObjective:
    """Device-resident pool plus compiled per-group training steps.

    A group is a run of consecutive blocks trained together: all blocks for
    a full-network epoch, or one block.  Blocks outside the group are frozen
    and their fields on the whole pool are computed once per phase, so an
    epoch only evaluates the active blocks.
    """

    def __init__(self, problem: PoissonProblem, cn, pool: SamplePool):
        self.problem = problem
        self.cn = as_composite(cn)
        self.pool = pool
        self.weights = tuple(float(w) for w in problem.weights)
        bs = [pool.boundaries[k] for k in BOUNDARIES]
        self.coefs = tuple((b.coef_u, b.coef_dn) for b in bs)
        self._data = (
            jnp.asarray(pool.interior), jnp.asarray(pool.source),
            tuple(jnp.asarray(b.points) for b in bs),
            tuple(jnp.asarray(b.normals) for b in bs),
            tuple(jnp.asarray(b.target) for b in bs),
            jnp.asarray(pool.test),
            None if pool.exact_test is None else jnp.asarray(pool.exact_test),
        )

    def group_slice(self, group) -> slice:
        return self.cn.group_slice(group)

    def _subnets(self, group):
        return tuple(self.cn.subnets[i] for i in group)

    def frozen_fields(self, params, group):
        """Sum of the non-group blocks' fields on the whole pool (zeros if none)."""
        others = tuple(i for i in range(self.cn.n_blocks) if i not in group)
        if not others:
            pts = self._data[2]
            zero_b = tuple((jnp.zeros(p.shape[0]), jnp.zeros(p.shape)) for p in pts)
            return jnp.zeros(self._data[0].shape[0]), zero_b, jnp.zeros(self._data[5].shape[0])
        parts = [np.asarray(params)[self.cn.block_slice(i)] for i in others]
        return _frozen_jit(self._subnets(others), self.coefs, jnp.asarray(np.concatenate(parts)), self._data)

    def step_fn(self, group, beta1, beta2, eps_hat):
        """``step(x, m, v, t, lr, cache, idx) -> (x, m, v, loss, components, mse, |g|)``.

        Loss, components and MSE are those of the input parameters.
        """
        static = (self._subnets(tuple(group)), self.coefs, self.weights, (beta1, beta2, eps_hat))

        def step(x, m, v, t, lr, cache, idx):
            return _step_jit(*static, x, m, v, t, lr, cache, idx, self._data)

        return step

    def full_gradient(self, params):
        value, g = _full_grad_jit(tuple(self.cn.subnets), self.coefs, self.weights,
                                  jnp.asarray(params, dtype=jnp.float64), self._data)
        return float(value), np.asarray(g)

    def block_norms(self, params):
        _, g = self.full_gradient(params)
        norms = tuple(float(np.linalg.norm(g[self.cn.block_slice(i)])) for i in range(self.cn.n_blocks))
        return norms, float(np.linalg.norm(g))

    def device_indices(self, idx):
        return jnp.asarray(idx["interior"]), tuple(jnp.asarray(idx[k]) for k in BOUNDARIES)
