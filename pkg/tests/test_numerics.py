import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlbcd.exceptions import GeometryError, NotSPDError
from mlbcd.numerics import (
    cholesky, lhs_sample, random_spd, read_points_csv, sample_normal, spd_solve, write_points_csv,
)


def test_lhs_single_stratum():
    pts = lhs_sample(1, [(0, 1)], 0)
    assert pts.shape == (1, 1)
    assert 0 <= pts[0, 0] < 1


def test_lhs_one_per_quartile():
    pts = lhs_sample(4, [(0, 1), (0, 1)], 3)
    for k in range(2):
        assert sorted(np.floor(pts[:, k] * 4).astype(int)) == [0, 1, 2, 3]


def test_lhs_golden_stream(golden):
    pts = lhs_sample(8, [(-1, 1), (-1, 1)], 42)
    assert np.array_equal(pts, read_points_csv(golden / "lhs_n8_seed42.csv"))


@pytest.mark.parametrize("box", [[(1, 0)], [(0, 0)], [(0, np.inf)], [], [(0, 1, 2)]])
def test_lhs_rejects_malformed_box(box):
    with pytest.raises(GeometryError):
        lhs_sample(3, box, 0)


@given(n=st.integers(1, 60), d=st.integers(1, 4), seed=st.integers(0, 2**32),
       lo=st.floats(-5, 5), span=st.floats(0.1, 10))
def test_lhs_stratification(n, d, seed, lo, span):
    box = [(lo, lo + span)] * d
    pts = lhs_sample(n, box, seed)
    assert np.all(pts >= lo) and np.all(pts < lo + span)
    idx = np.floor((pts - lo) / span * n).astype(int)
    for k in range(d):
        assert sorted(idx[:, k]) == list(range(n))


@given(seed=st.integers(0, 2**63))
def test_lhs_deterministic(seed):
    assert np.array_equal(lhs_sample(5, [(0, 1)] * 2, seed), lhs_sample(5, [(0, 1)] * 2, seed))


def test_normal_degenerate():
    assert np.array_equal(sample_normal(5, 0.0, 1), np.zeros(5))


def test_normal_moments():
    x = sample_normal(100_000, 20.0, 11)
    assert 19.5 <= x.std(ddof=1) <= 20.5
    assert abs(x.mean()) <= 5 * 20.0 / np.sqrt(x.size)


def test_normal_golden(golden):
    ref = read_points_csv(golden / "normal_n3_seed7.csv")[:, 0]
    assert np.array_equal(sample_normal(3, 1.0, 7), ref)


def test_normal_negative_std():
    with pytest.raises(ValueError):
        sample_normal(3, -1.0, 0)


def test_seed_validation():
    with pytest.raises(ValueError):
        lhs_sample(2, [(0, 1)], -1)
    with pytest.raises(ValueError):
        lhs_sample(2, [(0, 1)], 2**64)
    with pytest.raises(TypeError):
        lhs_sample(2, [(0, 1)], 1.5)


def test_solve_identity():
    assert np.array_equal(spd_solve(np.eye(3), [1, 2, 3]), [1, 2, 3])


def test_solve_diagonal():
    assert np.allclose(spd_solve(np.diag([2.0, 4.0]), [2, 4]), [1, 1], rtol=0, atol=1e-15)


def test_solve_random_residual():
    A = random_spd(6, 5)
    b = np.random.default_rng(0).standard_normal(6)
    x = spd_solve(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * (np.linalg.norm(A, 2) * np.linalg.norm(x) + np.linalg.norm(b))


def test_not_spd_names_pivot():
    A = np.array([[4.0, 2, 0], [2, 1, 0], [0, 0, 1]])
    with pytest.raises(NotSPDError) as info:
        spd_solve(A, [1, 1, 1])
    assert info.value.pivot == 1
    assert "1" in str(info.value)


def test_cholesky_indefinite_first_pivot():
    with pytest.raises(NotSPDError) as info:
        cholesky(-np.eye(2))
    assert info.value.pivot == 0


@given(n=st.integers(1, 12), seed=st.integers(0, 10_000), cond=st.floats(1, 1e4))
def test_solve_inverts_matvec(n, seed, cond):
    A = random_spd(n, seed, cond=cond)
    x = np.random.default_rng(seed).standard_normal(n)
    b = A @ x
    y = spd_solve(A, b)
    assert np.linalg.norm(A @ y - b) <= 1e-10 * np.linalg.norm(b)
    assert np.linalg.norm(y - x) <= 1e-10 * cond * max(1.0, np.linalg.norm(x))


def test_points_csv_roundtrip(tmp_path):
    pts = np.random.default_rng(1).standard_normal((5, 3))
    path = tmp_path / "p.csv"
    write_points_csv(path, pts)
    assert np.array_equal(read_points_csv(path), pts)
    assert b"\r" not in path.read_bytes()
