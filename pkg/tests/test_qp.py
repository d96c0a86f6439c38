import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apftrack.qp import QpInfeasible, objective, solve_qp

from oracles import box_rows, grid_oracle


def random_qp(rng, n):
    G = rng.normal(size=(n, n))
    N = G @ G.T + 0.2 * np.eye(n)
    M = rng.normal(scale=4, size=n)
    lo = -rng.uniform(0.1, 1.5, n)
    hi = rng.uniform(0.1, 1.5, n)
    return M, N, lo, hi


def test_scalar_toy():
    assert solve_qp([4.0], [[2.0]]).x == pytest.approx([1.0], abs=1e-12)
    r = solve_qp([4.0], [[2.0]], [[1.0]], [0.5])
    assert r.x == pytest.approx([0.5], abs=1e-10)
    assert r.converged and r.lam[0] > 0


def test_unconstrained_is_half_inverse():
    rng = np.random.default_rng(2)
    for n in (1, 2, 3, 6, 11):
        G = rng.normal(size=(n, n))
        N = G @ G.T + np.eye(n)
        M = rng.normal(size=n)
        r = solve_qp(M, N)
        assert np.allclose(r.x, 0.5 * np.linalg.solve(N, M), atol=1e-10)
        assert np.linalg.norm(-M + 2 * N @ r.x) < 1e-9
        # inactive rows leave the unconstrained optimum alone
        r2 = solve_qp(M, N, np.eye(n), np.abs(r.x) + 1.0)
        assert r2.unconstrained and np.allclose(r2.x, r.x, atol=1e-10)


def test_against_grid_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        M, N, lo, hi = random_qp(rng, int(rng.integers(1, 4)))
        A, b = box_rows(lo, hi)
        r = solve_qp(M, N, A, b)
        _, f_grid = grid_oracle(M, N, lo, hi)
        assert np.all(A @ r.x <= b + 1e-8)
        assert abs(objective(r.x, M, N) - f_grid) < 1e-6


def random_general(rng, n, m):
    G = rng.normal(size=(n, n))
    N = G @ G.T + 0.1 * np.eye(n)
    M = rng.normal(scale=5, size=n)
    A = rng.normal(size=(m, n))
    # rows are satisfied at a random interior point, so the set is nonempty
    x0 = rng.normal(size=n)
    b = A @ x0 + rng.uniform(0.01, 1.0, m)
    return M, N, A, b


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 30))
def test_kkt_conditions(seed, n, m):
    M, N, A, b = random_general(np.random.default_rng(seed), n, m)
    r = solve_qp(M, N, A, b)
    assert r.converged
    assert np.all(A @ r.x <= b + 1e-8)
    assert np.all(r.lam >= 0)
    # stationarity and complementary slackness
    assert np.linalg.norm(-M + 2 * N @ r.x + A.T @ r.lam) < 1e-6 * (1 + np.abs(M).max())
    assert np.all(np.abs(r.lam * (A @ r.x - b)) < 1e-6)


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 20))
def test_adding_a_row_never_lowers_the_optimum(seed, n, m):
    rng = np.random.default_rng(seed)
    M, N, A, b = random_general(rng, n, m + 1)
    loose = solve_qp(M, N, A[:-1], b[:-1])
    tight = solve_qp(M, N, A, b)
    assert objective(tight.x, M, N) >= objective(loose.x, M, N) - 1e-8


def test_infeasible_rows_raise():
    with pytest.raises(QpInfeasible):
        solve_qp([1.0], [[1.0]], [[1.0], [-1.0]], [-1.0, -1.0])


def test_not_positive_definite():
    with pytest.raises(ValueError):
        solve_qp([1.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])


def test_warm_start_reaches_same_point():
    rng = np.random.default_rng(9)
    M, N, A, b = random_general(rng, 5, 25)
    cold = solve_qp(M, N, A, b)
    warm = solve_qp(M, N, A, b, lam0=cold.lam)
    assert np.allclose(cold.x, warm.x, atol=1e-8)
