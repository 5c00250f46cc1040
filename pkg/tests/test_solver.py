"""Tests for the simplex LP, nullspace helpers, and the active-set QP."""

from __future__ import annotations

import numpy as np
import pytest
from oracles import kkt_enumeration_qp, random_feasible_qp
from scipy.optimize import linprog

from luklearn.solver import (
    DEFAULT_TOLERANCES,
    Infeasible,
    QpProblem,
    SolverError,
    lp_feasible,
    lp_solve,
    min_norm_solution,
    nullspace,
    solve_qp,
    tolerances_with,
)


def test_tolerances_overrides():
    t = tolerances_with(qp=1e-5)
    assert t.qp == 1e-5
    assert t.lp == DEFAULT_TOLERANCES.lp
    t2 = tolerances_with(t, lp=1e-4)
    assert (t2.qp, t2.lp) == (1e-5, 1e-4)


def test_lp_simple_vertex():
    r = lp_solve([-1.0, -1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0], nonneg=[True, True])
    assert r.status == "optimal"
    assert r.objective == pytest.approx(-1.0, abs=1e-9)
    assert r.x.sum() == pytest.approx(1.0, abs=1e-9)


def test_lp_free_variable():
    r = lp_solve([1.0], A_ub=[[-1.0]], b_ub=[3.0])
    assert r.status == "optimal"
    assert r.x[0] == pytest.approx(-3.0, abs=1e-9)


def test_lp_equality_rows():
    r = lp_solve([1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[2.0], nonneg=[True, True])
    assert r.status == "optimal"
    assert r.objective == pytest.approx(2.0, abs=1e-9)

    redundant = lp_solve(
        [0.0, 0.0],
        A_eq=[[1.0, 1.0], [2.0, 2.0]],
        b_eq=[1.0, 2.0],
        nonneg=[True, True],
    )
    assert redundant.status == "optimal"


def test_lp_infeasible_with_certificate():
    r = lp_solve([0.0], A_ub=[[1.0]], b_ub=[-1.0], nonneg=[True])
    assert r.status == "infeasible"
    assert r.certificate > 0.0

    r = lp_solve(
        [0.0, 0.0],
        A_eq=[[1.0, 1.0], [2.0, 2.0]],
        b_eq=[1.0, 3.0],
        nonneg=[True, True],
    )
    assert r.status == "infeasible"


def test_lp_unbounded():
    r = lp_solve([-1.0], A_ub=[[-1.0]], b_ub=[0.0], nonneg=[True])
    assert r.status == "unbounded"


def test_lp_no_constraints():
    r = lp_solve([1.0, -2.0])
    assert r.status == "optimal"
    assert np.array_equal(r.x, np.zeros(2))


def test_lp_feasible_infers_size():
    r = lp_feasible(A_ub=[[1.0, 0.0]], b_ub=[1.0])
    assert r.status == "optimal"
    with pytest.raises(SolverError, match="infer"):
        lp_feasible()


def test_lp_degenerate_cycling_guard():
    """A classically cycling-prone degenerate LP must still terminate."""
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [
        [0.25, -60.0, -0.04, 9.0],
        [0.5, -90.0, -0.02, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
    b = [0.0, 0.0, 1.0]
    r = lp_solve(c, A_ub=A, b_ub=b, nonneg=[True] * 4)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    assert r.status == "optimal"
    assert r.objective == pytest.approx(ref.fun, abs=1e-9)


def test_lp_random_against_scipy():
    rng = np.random.default_rng(61)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 7))
        c = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        b = rng.random(m) + 0.1
        A_box = np.vstack([A, np.eye(n)])
        b_box = np.concatenate([b, np.full(n, 10.0)])
        r = lp_solve(c, A_ub=A_box, b_ub=b_box, nonneg=[True] * n)
        ref = linprog(c, A_ub=A_box, b_ub=b_box, bounds=(0, None), method="highs")
        assert r.status == "optimal" and ref.status == 0
        assert r.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(A_box @ r.x <= b_box + 1e-8)
        assert np.all(r.x >= -1e-12)


def test_nullspace_identity_and_zero():
    basis = nullspace(np.eye(4))
    assert basis.dim == 0 and basis.rank == 4

    basis = nullspace(np.zeros((3, 5)))
    assert basis.dim == 5 and basis.rank == 0

    basis = nullspace(np.zeros((3, 0)))
    assert basis.dim == 0


def test_nullspace_known_matrix():
    M = np.array(
        [
            [1, 0, 0, 0, 1, 0],
            [0, 1, 0, 0, 0, 1],
            [-1, 0, 1, 0, 0, 0],
            [0, -1, 0, 1, 0, 0],
            [0, 0, -1, 0, -1, 0],
            [0, 0, 0, -1, 0, -1],
        ],
        dtype=float,
    )
    basis = nullspace(M)
    assert basis.dim == 2
    assert np.max(np.abs(M @ basis.vectors)) <= 1e-12
    assert np.allclose(basis.vectors.T @ basis.vectors, np.eye(2), atol=1e-12)
    for v in ([-1, 0, -1, 0, 1, 0], [0, -1, 0, -1, 0, 1]):
        v = np.asarray(v, dtype=float)
        proj = basis.vectors @ (basis.vectors.T @ v)
        assert np.max(np.abs(proj - v)) <= 1e-12


def test_nullspace_random_rank():
    rng = np.random.default_rng(67)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        r = int(rng.integers(0, n + 1))
        M = rng.standard_normal((10, r)) @ rng.standard_normal((r, n)) if r else np.zeros((10, n))
        basis = nullspace(M)
        assert basis.rank == r
        assert basis.dim == n - r
        if basis.dim:
            assert np.max(np.abs(M @ basis.vectors)) <= 1e-8
            assert np.allclose(basis.vectors.T @ basis.vectors, np.eye(basis.dim), atol=1e-10)


def test_min_norm_solution_matches_pinv():
    rng = np.random.default_rng(71)
    M = rng.standard_normal((4, 6))
    rhs = rng.standard_normal(4)
    x, res = min_norm_solution(M, rhs)
    assert res <= 1e-10
    assert np.allclose(x, np.linalg.pinv(M) @ rhs, atol=1e-10)

    M2 = np.array([[1.0], [1.0]])
    x2, res2 = min_norm_solution(M2, [0.0, 2.0])
    assert x2[0] == pytest.approx(1.0, abs=1e-12)
    assert res2 == pytest.approx(np.sqrt(2.0), abs=1e-12)

    x3, res3 = min_norm_solution(np.zeros((2, 0)), [3.0, 4.0])
    assert x3.shape == (0,)
    assert res3 == pytest.approx(5.0)


def test_qp_scalar_bound():
    sol = solve_qp(QpProblem(np.array([[2.0]]), np.zeros(1), np.array([[-1.0]]), np.array([1.0])))
    assert sol.x[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.multipliers[0] == pytest.approx(2.0, abs=1e-8)
    assert sol.active_set == (0,)
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_qp_unconstrained():
    Q = np.array([[2.0, 0.0], [0.0, 4.0]])
    c = np.array([-2.0, -4.0])
    sol = solve_qp(QpProblem(Q, c, np.zeros((0, 2)), np.zeros(0)))
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-9)
    assert sol.residuals["stationarity"] <= 1e-9


def test_qp_equality_constraint():
    Q = 2.0 * np.eye(2)
    sol = solve_qp(
        QpProblem(
            Q,
            np.zeros(2),
            np.zeros((0, 2)),
            np.zeros(0),
            E=np.array([[1.0, 1.0]]),
            d=np.array([1.0]),
        )
    )
    assert np.allclose(sol.x, [0.5, 0.5], atol=1e-9)
    assert sol.eq_multipliers[0] == pytest.approx(-1.0, abs=1e-8)


def test_qp_infeasible():
    A = np.array([[1.0], [-1.0]])
    b = np.array([1.0, 1.0])  # x <= -1 and x >= 1
    with pytest.raises(Infeasible):
        solve_qp(QpProblem(np.array([[2.0]]), np.zeros(1), A, b))


def test_qp_rejects_asymmetric_matrix():
    Q = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(SolverError, match="symmetric"):
        solve_qp(QpProblem(Q, np.zeros(2), np.zeros((0, 2)), np.zeros(0)))


def test_qp_random_against_enumeration():
    rng = np.random.default_rng(73)
    for _ in range(40):
        Q, c, A, b = random_feasible_qp(rng)
        sol = solve_qp(QpProblem(Q, c, A, b))
        ref = kkt_enumeration_qp(Q, c, A, b)
        assert ref is not None
        assert np.max(np.abs(sol.x - ref[0])) <= 1e-6
        assert sol.objective == pytest.approx(ref[1], abs=1e-6)
        assert sol.residuals["stationarity"] <= 1e-7
        assert sol.residuals["feasibility"] <= 1e-9
        assert sol.residuals["slackness"] <= 1e-7


def test_qp_row_permutation_invariance():
    rng = np.random.default_rng(79)
    Q, c, A, b = random_feasible_qp(rng, n_max=3, m_max=5)
    base = solve_qp(QpProblem(Q, c, A, b))
    perm = rng.permutation(A.shape[0])
    permuted = solve_qp(QpProblem(Q, c, A[perm], b[perm]))
    assert np.max(np.abs(base.x - permuted.x)) <= 1e-8
    assert base.objective == pytest.approx(permuted.objective, abs=1e-10)


def test_qp_reruns_are_identical():
    rng = np.random.default_rng(83)
    Q, c, A, b = random_feasible_qp(rng)
    first = solve_qp(QpProblem(Q, c, A, b))
    second = solve_qp(QpProblem(Q, c, A, b))
    assert np.array_equal(first.x, second.x)
    assert first.iterations == second.iterations
