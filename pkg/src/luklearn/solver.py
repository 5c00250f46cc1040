"""Dense numeric core: linear programming by a two-phase tableau simplex,
convex quadratic programming by a primal active-set method, and
nullspace / least-squares helpers.

Everything here is deliberately small-scale and deterministic.  The
simplex uses Bland's rule, the QP resolves ties by lowest index, and all
tolerances live in one configuration record, so repeated runs on the
same input produce identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


class SolverError(Exception):
    pass


class Infeasible(SolverError):
    """The constraint system admits no point.

    ``certificate`` is the phase-1 optimum: the smallest achievable
    constraint violation, strictly positive here.
    """

    def __init__(self, message: str, certificate: float):
        super().__init__(f"{message} (phase-1 optimum {certificate:.3e})")
        self.certificate = certificate


@dataclass(frozen=True)
class Tolerances:
    qp: float = 1e-8           # multiplier nonnegativity / convergence in the QP
    lp: float = 1e-9           # simplex pivoting and feasibility threshold
    nullspace: float = 1e-10   # singular value cutoff, relative to the largest
    activity: float = 1e-6     # |piece value| below this counts as active
    stationarity: float = 1e-7 # multiplier-system residual acceptance
    nonneg: float = 1e-9       # multiplier sign slack
    entailment: float = 1e-9   # LP maximum below this counts as entailed


DEFAULT_TOLERANCES = Tolerances()


def tolerances_with(base: Tolerances | None = None, **overrides) -> Tolerances:
    return replace(base or DEFAULT_TOLERANCES, **overrides)


# ---------------------------------------------------------------------------
# Simplex


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run_simplex(T: np.ndarray, basis: list[int], cost: np.ndarray, tol: float, max_iter: int) -> str:
    """Iterate a canonical tableau (basis columns = identity) to optimality.

    ``T`` has one trailing right-hand-side column.  Returns "optimal" or
    "unbounded"; Bland's rule (lowest eligible index both for entering
    and, on ratio ties, for leaving) prevents cycling.
    """
    ncols = T.shape[1] - 1
    for _ in range(max_iter):
        reduced = cost[:ncols] - cost[basis] @ T[:, :ncols]
        entering = -1
        for j in range(ncols):
            if reduced[j] < -tol:
                entering = j
                break
        if entering < 0:
            return "optimal"
        col = T[:, entering]
        best_ratio = None
        leaving = -1
        for i in range(T.shape[0]):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if (
                    best_ratio is None
                    or ratio < best_ratio - 1e-12
                    or (abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            return "unbounded"
        _pivot(T, leaving, entering)
        basis[leaving] = entering
    raise SolverError("simplex iteration limit exceeded")


def _simplex_standard(
    A: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float, max_iter: int
) -> tuple[str, np.ndarray | None, float]:
    """min c.x subject to A x = b, x >= 0.

    Returns (status, x, value); for "infeasible" the value is the
    phase-1 optimum, for "unbounded" it is -inf.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    # canonicalize the phase-1 objective against the artificial basis
    status = _run_simplex(T, basis, phase1_cost, tol, max_iter)
    if status != "optimal":
        raise SolverError("phase 1 cannot be unbounded")
    value = float(phase1_cost[basis] @ T[:, -1])
    if value > tol * max(1.0, float(np.max(np.abs(b))) if b.size else 1.0):
        return "infeasible", None, value

    # drive remaining artificials out of the basis; rows that cannot be
    # pivoted are redundant and get dropped
    keep = []
    for i in range(m):
        if basis[i] >= n:
            piv = -1
            for j in range(n):
                if abs(T[i, j]) > tol:
                    piv = j
                    break
            if piv < 0:
                continue
            _pivot(T, i, piv)
            basis[i] = piv
        keep.append(i)
    T = np.hstack([T[keep][:, :n], T[keep][:, -1:]])
    basis = [basis[i] for i in keep]

    status = _run_simplex(T, basis, np.asarray(c, dtype=float), tol, max_iter)
    if status == "unbounded":
        return "unbounded", None, float("-inf")
    x = np.zeros(n)
    for i, bi in enumerate(basis):
        x[bi] = T[i, -1]
    return "optimal", x, float(np.asarray(c, dtype=float) @ x)


@dataclass(eq=False)
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None
    certificate: float | None  # phase-1 optimum when infeasible


def lp_solve(
    c: Sequence[float],
    A_ub: np.ndarray | None = None,
    b_ub: Sequence[float] | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: Sequence[float] | None = None,
    nonneg: Sequence[bool] | None = None,
    tol: float = DEFAULT_TOLERANCES.lp,
    max_iter: int = 20000,
) -> LpResult:
    """min c.x subject to A_ub x <= b_ub and A_eq x = b_eq.

    Variables with ``nonneg[i]`` true are constrained to x_i >= 0; the
    rest are free and internally split into positive and negative parts.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    nonneg = np.zeros(n, dtype=bool) if nonneg is None else np.asarray(nonneg, dtype=bool)

    rows = []
    rhs = []
    n_ub = 0
    if A_ub is not None and len(A_ub):
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        rows.append(A_ub)
        rhs.append(np.asarray(b_ub, dtype=float))
        n_ub = A_ub.shape[0]
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        rows.append(A_eq)
        rhs.append(np.asarray(b_eq, dtype=float))
    if not rows:
        x = np.zeros(n)
        return LpResult("optimal", x, 0.0, None)
    G = np.vstack(rows)
    g = np.concatenate(rhs)

    # map original variables to standard-form columns
    cols = []
    std_c = []
    for i in range(n):
        if nonneg[i]:
            cols.append(G[:, i : i + 1])
            std_c.append(c[i])
        else:
            cols.append(G[:, i : i + 1])
            std_c.append(c[i])
            cols.append(-G[:, i : i + 1])
            std_c.append(-c[i])
    slack = np.vstack([np.eye(n_ub), np.zeros((G.shape[0] - n_ub, n_ub))])
    A_std = np.hstack(cols + ([slack] if n_ub else []))
    c_std = np.array(std_c + [0.0] * n_ub)

    status, z, value = _simplex_standard(A_std, g, c_std, tol, max_iter)
    if status == "infeasible":
        return LpResult("infeasible", None, None, value)
    if status == "unbounded":
        return LpResult("unbounded", None, None, None)
    x = np.zeros(n)
    pos = 0
    for i in range(n):
        if nonneg[i]:
            x[i] = z[pos]
            pos += 1
        else:
            x[i] = z[pos] - z[pos + 1]
            pos += 2
    return LpResult("optimal", x, float(c @ x), None)


def lp_feasible(
    A_eq: np.ndarray | None = None,
    b_eq: Sequence[float] | None = None,
    A_ub: np.ndarray | None = None,
    b_ub: Sequence[float] | None = None,
    n: int | None = None,
    nonneg: Sequence[bool] | None = None,
    tol: float = DEFAULT_TOLERANCES.lp,
) -> LpResult:
    """Find any point of the system, or certify that none exists."""
    if n is None:
        if A_eq is not None and len(A_eq):
            n = np.atleast_2d(np.asarray(A_eq)).shape[1]
        elif A_ub is not None and len(A_ub):
            n = np.atleast_2d(np.asarray(A_ub)).shape[1]
        else:
            raise SolverError("cannot infer the variable count")
    return lp_solve(np.zeros(n), A_ub, b_ub, A_eq, b_eq, nonneg, tol)


# ---------------------------------------------------------------------------
# Nullspace and least squares


@dataclass(eq=False)
class NullspaceBasis:
    """Orthonormal basis of Ker(M), one vector per column of ``vectors``."""

    vectors: np.ndarray  # n x dim
    rank: int
    tol: float

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def nullspace(M: np.ndarray, tol: float = DEFAULT_TOLERANCES.nullspace) -> NullspaceBasis:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if n == 0 or M.size == 0:
        return NullspaceBasis(np.zeros((n, n)), 0, tol)
    _, s, vt = np.linalg.svd(M)
    smax = float(s[0]) if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0.0 else 0
    return NullspaceBasis(vt[rank:].T.copy(), rank, tol)


def min_norm_solution(M: np.ndarray, rhs: Sequence[float]) -> tuple[np.ndarray, float]:
    """Least-squares solution of M x = rhs with minimal norm, plus the
    achieved residual norm."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    if M.shape[1] == 0:
        return np.zeros(0), float(np.linalg.norm(rhs))
    x, _, _, _ = np.linalg.lstsq(M, rhs, rcond=None)
    return x, float(np.linalg.norm(M @ x - rhs))


# ---------------------------------------------------------------------------
# Quadratic programming


@dataclass(eq=False)
class QpProblem:
    """min 0.5 x'Qx + c.x  subject to  A x + b <= 0  and  E x = d."""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    E: np.ndarray | None = None
    d: np.ndarray | None = None


@dataclass(eq=False)
class QpSolution:
    x: np.ndarray
    objective: float
    multipliers: np.ndarray      # one per inequality row, zero off the active set
    eq_multipliers: np.ndarray
    active_set: tuple[int, ...]  # rows with |A_i x + b_i| <= activity tolerance
    residuals: dict[str, float]
    iterations: int


def _feasible_start(
    A: np.ndarray, b: np.ndarray, E: np.ndarray | None, d: np.ndarray | None, tol: Tolerances
) -> np.ndarray:
    n = A.shape[1]
    if A.shape[0] == 0:
        if E is None:
            return np.zeros(n)
        x, res = min_norm_solution(E, d)
        if res > 10 * tol.lp * (1.0 + float(np.linalg.norm(d))):
            raise Infeasible("equality system is inconsistent", res)
        return x
    # minimize the violation s with A x + b <= s, encoded via s' = s + 1 >= 0
    m = A.shape[0]
    ub = np.hstack([A, -np.ones((m, 1))])
    c = np.zeros(n + 1)
    c[n] = 1.0
    nonneg = np.zeros(n + 1, dtype=bool)
    nonneg[n] = True
    eq = None
    rhs_eq = None
    if E is not None and E.shape[0]:
        eq = np.hstack([E, np.zeros((E.shape[0], 1))])
        rhs_eq = d
    result = lp_solve(c, ub, -b - 1.0, eq, rhs_eq, nonneg, tol.lp)
    if result.status == "infeasible":
        raise Infeasible("constraint system is infeasible", result.certificate)
    if result.status != "optimal":
        raise SolverError(f"phase-1 LP ended {result.status}")
    s = result.x[n] - 1.0
    if s > tol.lp * 10:
        raise Infeasible("constraint system is infeasible", s)
    return result.x[:n]


def solve_qp(problem: QpProblem, tol: Tolerances = DEFAULT_TOLERANCES, max_iter: int | None = None) -> QpSolution:
    """Global minimizer of a convex QP by a primal active-set method.

    The working set starts from the constraints active at a phase-1
    feasible point.  Equality-constrained subproblems are solved through
    the KKT system with a minimum-norm least-squares solve, which keeps
    dependent active rows harmless.  All tie-breaking is lowest-index,
    so runs are reproducible.
    """
    Q = np.atleast_2d(np.asarray(problem.Q, dtype=float))
    n = Q.shape[0]
    c = np.asarray(problem.c, dtype=float)
    A = np.asarray(problem.A, dtype=float).reshape(-1, n) if np.size(problem.A) else np.zeros((0, n))
    b = np.asarray(problem.b, dtype=float).reshape(-1)
    E = None
    d = None
    if problem.E is not None and np.size(problem.E):
        E = np.atleast_2d(np.asarray(problem.E, dtype=float))
        d = np.asarray(problem.d, dtype=float).reshape(-1)
    if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-8:
        raise SolverError("Q must be symmetric")
    Q = (Q + Q.T) / 2.0
    m = A.shape[0]
    if max_iter is None:
        max_iter = 100 + 30 * (n + m)

    x = _feasible_start(A, b, E, d, tol)
    work: list[int] = (
        [i for i in range(m) if A[i] @ x + b[i] >= -1e-8] if m else []
    )

    def eqp(w: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        Aw = A[w] if w else np.zeros((0, n))
        bw = b[w] if w else np.zeros(0)
        n_eq = E.shape[0] if E is not None else 0
        size = n + len(w) + n_eq
        K = np.zeros((size, size))
        rhs = np.zeros(size)
        K[:n, :n] = Q
        K[:n, n : n + len(w)] = Aw.T
        K[n : n + len(w), :n] = Aw
        rhs[:n] = -c
        rhs[n : n + len(w)] = -bw
        if n_eq:
            K[:n, n + len(w) :] = E.T
            K[n + len(w) :, :n] = E
            rhs[n + len(w) :] = d
        sol, _, _, _ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-6 * (1.0 + float(np.max(np.abs(rhs), initial=0.0))):
            raise SolverError("equality-constrained subproblem is unbounded or inconsistent")
        return sol[:n], sol[n : n + len(w)], sol[n + len(w) :]

    iterations = 0
    mu_w = np.zeros(0)
    nu = np.zeros(0)
    for iterations in range(1, max_iter + 1):
        x_new, mu_w, nu = eqp(work)
        if np.max(np.abs(x_new - x), initial=0.0) <= 1e-10 * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            x = x_new
            if not mu_w.size or float(np.min(mu_w)) >= -tol.qp:
                break
            worst = int(np.argmin(mu_w))  # argmin returns the lowest index on ties
            del work[worst]
            continue
        direction = x_new - x
        alpha = 1.0
        blocking = -1
        for i in range(m):
            if i in work:
                continue
            advance = float(A[i] @ direction)
            if advance > 1e-12:
                limit = -(float(A[i] @ x + b[i])) / advance
                if limit < alpha - 1e-15:
                    alpha = max(limit, 0.0)
                    blocking = i
        x = x_new if alpha >= 1.0 else x + alpha * direction
        if blocking >= 0 and alpha < 1.0:
            work.append(blocking)
            work.sort()
    else:
        raise SolverError("active-set iteration limit exceeded")

    mu = np.zeros(m)
    for idx, w in enumerate(work):
        mu[w] = max(float(mu_w[idx]), 0.0) if mu_w.size else 0.0
    grad = Q @ x + c + (A.T @ mu if m else 0.0)
    if E is not None and nu.size:
        grad = grad + E.T @ nu
    violations = A @ x + b if m else np.zeros(0)
    eq_res = float(np.max(np.abs(E @ x - d), initial=0.0)) if E is not None else 0.0
    residuals = {
        "stationarity": float(np.max(np.abs(grad), initial=0.0)),
        "feasibility": max(float(np.max(violations, initial=0.0)), eq_res, 0.0),
        "slackness": float(np.max(np.abs(mu * violations), initial=0.0)) if m else 0.0,
    }
    active = tuple(i for i in range(m) if abs(violations[i]) <= tol.activity)
    objective = float(0.5 * x @ Q @ x + c @ x)
    return QpSolution(x, objective, mu, np.asarray(nu), active, residuals, iterations)
