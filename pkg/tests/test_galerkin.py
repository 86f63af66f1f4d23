import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlbcd.exceptions import DimensionError, RankDeficientError
from mlbcd.galerkin import (
    QuadraticProblem, coarse_reduce, full_objective, linear_prolongation, load_quadratic, random_quadratic,
    restricted_minimizer, save_quadratic, taylor_h1, taylor_h2,
)
from mlbcd.numerics import random_spd, spd_solve


def test_objective_at_origin():
    qp = random_quadratic(3, 0)
    assert full_objective(qp, np.zeros(qp.n1), np.zeros(qp.n2)) == 0.0


def test_objective_unit_vector():
    qp = QuadraticProblem(np.eye(3), np.zeros(3), np.eye(3))
    assert full_objective(qp, [1.0, 0, 0], np.zeros(3)) == 0.5


def test_objective_expansion():
    rng = np.random.default_rng(1)
    A = random_spd(6, 1)
    b = rng.standard_normal(6)
    P = rng.standard_normal((6, 3))
    qp = QuadraticProblem(A, b, P)
    x1, x2 = rng.standard_normal(6), rng.standard_normal(3)
    naive = (0.5 * x1 @ A @ x1 + x1 @ A @ P @ x2 + 0.5 * x2 @ P.T @ A @ P @ x2 + b @ x1 + b @ P @ x2)
    assert full_objective(qp, x1, x2) == pytest.approx(naive, rel=1e-12)


def test_dimension_errors():
    qp = random_quadratic(2, 0)
    with pytest.raises(DimensionError):
        full_objective(qp, np.zeros(qp.n1 + 1), np.zeros(qp.n2))
    with pytest.raises(DimensionError):
        QuadraticProblem(np.eye(3), np.zeros(2), np.eye(3))


def test_identity_prolongation_reproduces_problem():
    A = random_spd(4, 2)
    b = np.arange(4.0)
    coarse = coarse_reduce(QuadraticProblem(A, b, np.eye(4)), np.zeros(4))
    assert np.allclose(coarse.H, A, rtol=0, atol=1e-15)
    assert np.array_equal(coarse.c, b)


def test_interpolation_case():
    # 4 fine nodes from 2 coarse nodes by linear interpolation
    P = np.array([[1.0, 0], [0.5, 0.5], [0, 1.0], [0, 0.5]])
    A = random_spd(4, 3)
    b = np.random.default_rng(3).standard_normal(4)
    qp = QuadraticProblem(A, b, P)
    x1 = np.random.default_rng(4).standard_normal(4)
    x2 = coarse_reduce(qp, x1).minimizer()
    ref = spd_solve(P.T @ A @ P, -P.T @ (A @ x1 + b))
    assert np.max(np.abs(x2 - ref)) <= 1e-10
    assert np.max(np.abs(x2 - restricted_minimizer(qp, x1))) <= 1e-10


def test_zero_linear_term():
    qp = QuadraticProblem(random_spd(5, 5), np.zeros(5), linear_prolongation(2))
    coarse = coarse_reduce(qp, np.zeros(5))
    assert np.array_equal(coarse.c, np.zeros(2))
    assert np.array_equal(coarse.minimizer(), np.zeros(2))


def test_rank_deficient_prolongation():
    P = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(RankDeficientError):
        coarse_reduce(QuadraticProblem(np.eye(3), np.zeros(3), P), np.zeros(3))


def test_prolongation_single():
    assert np.array_equal(linear_prolongation(1), [[0.5], [1.0], [0.5]])


@given(n2=st.integers(1, 30))
def test_prolongation_stencil(n2):
    P = linear_prolongation(n2)
    assert P.shape == (2 * n2 + 1, n2)
    assert np.array_equal(P.sum(axis=0), np.full(n2, 2.0))
    assert np.linalg.matrix_rank(P) == n2


def test_prolongation_ones():
    assert np.array_equal(linear_prolongation(3) @ np.ones(3), [0.5, 1, 1, 1, 1, 1, 0.5])


def test_taylor_h1_examples():
    P = np.eye(2)
    assert taylor_h1(np.zeros(2), P, 1.0, [3.0, 4.0]) == 0.0
    assert taylor_h1([1.0, 2.0], P, 1.0, np.zeros(2)) == 0.0
    assert taylor_h1([1.0, 2.0], P, 1.0, [3.0, 4.0]) == 11.0
    with pytest.raises(ValueError):
        taylor_h1([1.0], np.eye(1), 0.0, [1.0])


def test_taylor_h2_zero_hessian():
    P = linear_prolongation(2)
    g = np.arange(5.0)
    d = np.array([0.3, -0.2])
    assert taylor_h2(g, np.zeros((5, 5)), P, 1.5, d) == taylor_h1(g, P, 1.5, d)


def test_taylor_h2_sigma_homogeneity():
    P = linear_prolongation(2)
    g = np.array([1.0, -2.0, 0.5, 3.0, 1.0])
    H = random_spd(5, 8)
    d = np.array([0.7, -0.4])
    lin = taylor_h1(g, P, 1.0, d)
    quad = taylor_h2(g, H, P, 1.0, d) - lin
    assert taylor_h2(g, H, P, 2.0, d) == pytest.approx(2 * lin + 4 * quad, rel=1e-13)


def test_taylor_h2_asymmetric():
    with pytest.raises(ValueError):
        taylor_h2(np.zeros(2), np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2), 1.0, np.ones(2))


@given(seed=st.integers(0, 10_000))
def test_taylor_h2_equals_coarse_increment(seed):
    rng = np.random.default_rng(seed)
    qp = random_quadratic(1 + seed % 10, rng)
    x1 = rng.standard_normal(qp.n1)
    d = rng.standard_normal(qp.n2)
    inc = coarse_reduce(qp, x1).value(d)
    h2 = taylor_h2(qp.A @ x1 + qp.b, qp.A, qp.P, 1.0, d)
    assert abs(h2 - inc) <= 1e-12 * max(1.0, abs(inc))
    # the affine-set increment of the full objective matches too
    full = full_objective(qp, x1, d) - full_objective(qp, x1, np.zeros(qp.n2))
    assert full == pytest.approx(inc, rel=1e-10, abs=1e-10)


@given(seed=st.integers(0, 10_000))
def test_galerkin_first_order_coherence(seed):
    rng = np.random.default_rng(seed)
    qp = random_quadratic(1 + seed % 8, rng)
    x1 = rng.standard_normal(qp.n1)
    coarse = coarse_reduce(qp, x1)
    g_full = qp.A @ x1 + qp.b
    assert np.allclose(coarse.gradient(np.zeros(qp.n2)), qp.P.T @ g_full, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_restricted_minimizer_oracle(seed):
    rng = np.random.default_rng(seed)
    qp = random_quadratic(2 + seed % 14, rng)
    x1 = rng.standard_normal(qp.n1)
    assert np.max(np.abs(coarse_reduce(qp, x1).minimizer() - restricted_minimizer(qp, x1))) <= 1e-10


def test_nesting_rank():
    P = linear_prolongation(4)
    stacked = np.hstack([np.eye(9), P])
    assert np.linalg.matrix_rank(stacked) == np.linalg.matrix_rank(np.eye(9))


def test_quadratic_file_roundtrip(tmp_path):
    qp = random_quadratic(3, 2)
    save_quadratic(tmp_path / "q.txt", qp)
    back = load_quadratic(tmp_path / "q.txt")
    assert np.array_equal(back.A, qp.A) and np.array_equal(back.b, qp.b) and np.array_equal(back.P, qp.P)


def test_joint_gradient_matches_fd():
    qp = random_quadratic(3, 9)
    x = np.random.default_rng(9).standard_normal(qp.n1 + qp.n2)
    e = 1e-6
    fd = np.array([(qp.objective(x + e * u) - qp.objective(x - e * u)) / (2 * e) for u in np.eye(x.size)])
    assert np.allclose(fd, qp.gradient(x), rtol=1e-7, atol=1e-7)
    assert qp.f_low() <= qp.objective(x)
