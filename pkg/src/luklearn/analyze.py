"""Multiplier analysis: which constraints can be dropped without moving
the trained optimum.

Two multiplier systems appear here, with different signs, and both are
reported:

* The target system  M lam = a_target, lam >= 0, lam zero on inactive
  pieces.  Its solution set is parameterized by a particular solution
  plus the nullspace of the active-column matrix; zeroing a block's
  coordinates inside that set ("deactivation") is the published
  removability test, and minimal support sets are searched in it.
* The gradient system  M nu = -2 a_target, nu >= 0 on active pieces.
  At an optimum of the training QP this says the loss gradient is an
  (entering-sign-correct) conic combination of active constraint
  gradients.  When the Gram matrices are positive definite, a solution
  avoiding a block exists exactly when dropping that block keeps the
  same optimal grounding vector, so the final verdicts rely on it.

Verdicts per block: "entailed" (the block follows from the others over
all truth assignments), "removable" (drop-safe, optimum provably
unchanged), "candidate" (certificate exists but uniqueness is not
guaranteed), "necessary" (no certificate; dropping moves the optimum).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import (
    ConstraintBlock,
    ConstraintMatrix,
    assemble_matrix,
    restrict_columns,
)
from .solver import (
    DEFAULT_TOLERANCES,
    NullspaceBasis,
    Tolerances,
    lp_feasible,
    lp_solve,
    min_norm_solution,
    nullspace,
)
from .train import TrainedModel, TrainingProblem, solve_primal


class AnalysisError(Exception):
    pass


class InconsistentSystem(AnalysisError):
    """The multiplier system has no solution at the requested tolerance,
    which signals a stale target vector or a wrong activity set."""


class SupportLimitExceeded(AnalysisError):
    pass


def logical_coefficients(model: TrainedModel, mode: str = "all") -> np.ndarray:
    """Target vector for the multiplier system.

    Mode "all" treats every constraint family uniformly and targets the
    full coefficient vector.  Mode "logical" removes the pointwise and
    consistency contributions, reconstructed from the training
    multipliers, leaving only what the logical blocks account for.
    """
    if mode == "all":
        return model.alpha.copy()
    if mode != "logical":
        raise AnalysisError(f"unknown mode {mode!r}")
    matrix = model.problem.matrix
    target = model.alpha.copy()
    for nu, block_id in enumerate(matrix.column_block):
        if matrix.families[block_id] != "logical":
            target += 0.5 * model.multipliers[nu] * matrix.matrix[:, nu]
    return target


@dataclass(eq=False)
class GeneralSolution:
    """All solutions of M lam = target over the active columns:
    lam(t) = particular + basis t, with inactive coordinates pinned
    to zero."""

    matrix: np.ndarray
    target: np.ndarray
    active: np.ndarray            # bool per column
    column_blocks: list[str]
    particular: np.ndarray        # length N, zero off the active set
    basis: np.ndarray             # N x dim, zero off the active set
    kernel_info: NullspaceBasis = field(repr=False)
    residual: float = 0.0

    @property
    def nullspace_dim(self) -> int:
        return self.basis.shape[1]

    def lambda_of(self, t: Sequence[float]) -> np.ndarray:
        return self.particular + self.basis @ np.asarray(t, dtype=float)

    def columns_of(self, block_id: str) -> list[int]:
        return [i for i, b in enumerate(self.column_blocks) if b == block_id]

    def block_ids(self) -> list[str]:
        seen = []
        for b in self.column_blocks:
            if b not in seen:
                seen.append(b)
        return seen


def solve_problem2(
    M: np.ndarray,
    target: Sequence[float],
    activity: Sequence[bool] | None = None,
    column_blocks: Sequence[str] | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
    particular: Sequence[float] | None = None,
) -> GeneralSolution:
    """Particular solution plus nullspace basis of the multiplier system
    restricted to active columns.

    ``activity`` defaults to every column active.  A known solution can
    be supplied as ``particular`` to anchor the parameterization; by
    default the minimum-norm solution is used.  Raises
    InconsistentSystem when no multiplier vector reproduces ``target``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    S, N = M.shape
    target = np.asarray(target, dtype=float)
    active = (
        np.ones(N, dtype=bool) if activity is None else np.asarray(activity, dtype=bool)
    )
    if column_blocks is None:
        column_blocks = [f"c{i + 1}" for i in range(N)]
    act_idx = np.flatnonzero(active)
    sub = M[:, act_idx]
    if particular is not None:
        lam_full = np.asarray(particular, dtype=float)
        if np.max(np.abs(lam_full[~active]), initial=0.0) > tol.nonneg:
            raise InconsistentSystem("supplied solution is nonzero on inactive pieces")
        lam_act = lam_full[act_idx]
        residual = float(np.linalg.norm(sub @ lam_act - target))
    else:
        lam_act, residual = min_norm_solution(sub, target)
    if residual > tol.stationarity * (1.0 + float(np.linalg.norm(target))):
        raise InconsistentSystem(
            f"multiplier system residual {residual:.3e} exceeds tolerance"
        )
    ns = nullspace(sub, tol.nullspace)
    particular = np.zeros(N)
    particular[act_idx] = lam_act
    basis = np.zeros((N, ns.dim))
    basis[act_idx, :] = ns.vectors
    return GeneralSolution(
        M, target, active, list(column_blocks), particular, basis, ns, residual
    )


@dataclass(eq=False)
class DeactivationResult:
    """Outcome of zeroing one block inside the multiplier solution set.

    ``certificate`` is a nonnegative multiplier vector avoiding the
    block, or None.  ``relaxed`` drops the sign requirement; it is
    reported separately and is never treated as a certificate.
    """

    block: str
    certificate: np.ndarray | None
    t: np.ndarray | None
    relaxed: np.ndarray | None
    relaxed_t: np.ndarray | None
    t_unique: bool
    equality_residual: float


def deactivate(
    gs: GeneralSolution,
    block: str | Sequence[int],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DeactivationResult:
    """Search lam(t) for a nonnegative solution with every coordinate of
    ``block`` equal to zero."""
    if isinstance(block, str):
        cols = gs.columns_of(block)
        name = block
    else:
        cols = list(block)
        name = ",".join(str(c) for c in cols)
    if not cols:
        raise AnalysisError(f"unknown block {name!r}")
    act_cols = [c for c in cols if gs.active[c]]
    eq_rows = gs.basis[act_cols, :] if act_cols else np.zeros((0, gs.nullspace_dim))
    eq_rhs = -gs.particular[act_cols] if act_cols else np.zeros(0)
    dim = gs.nullspace_dim
    act_idx = np.flatnonzero(gs.active)

    if dim == 0:
        residual = float(np.linalg.norm(eq_rhs))
        solvable = residual <= tol.stationarity
        t0 = np.zeros(0)
        relaxed = gs.particular.copy() if solvable else None
        cert = None
        if solvable and float(np.min(gs.particular[act_idx], initial=0.0)) >= -tol.nonneg:
            cert = np.maximum(gs.particular, 0.0)
        return DeactivationResult(
            name, cert, t0 if cert is not None else None, relaxed,
            t0 if relaxed is not None else None, True, residual
        )

    relaxed_t, residual = min_norm_solution(eq_rows, eq_rhs)
    relaxed = gs.lambda_of(relaxed_t) if residual <= tol.stationarity else None
    if eq_rows.shape[0] == 0:
        t_unique = False
    else:
        t_unique = nullspace(eq_rows, tol.nullspace).dim == 0

    certificate = None
    t = None
    if residual <= tol.stationarity:
        # lam(t) >= 0 on active coordinates, block coordinates pinned to zero
        ineq = -gs.basis[act_idx, :]
        rhs = gs.particular[act_idx]
        res = lp_feasible(A_eq=eq_rows, b_eq=eq_rhs, A_ub=ineq, b_ub=rhs, n=dim, tol=tol.lp)
        if res.status == "optimal":
            t = res.x
            certificate = gs.lambda_of(t)
            certificate[np.abs(certificate) <= tol.nonneg] = 0.0
            certificate = np.maximum(certificate, 0.0)
    return DeactivationResult(
        name, certificate, t, relaxed,
        relaxed_t if relaxed is not None else None, t_unique, residual
    )


def deactivation_report(
    gs: GeneralSolution, unique_optimum: bool, tol: Tolerances = DEFAULT_TOLERANCES
) -> list[tuple[str, str, DeactivationResult]]:
    """Per-block verdicts based purely on the target multiplier system:
    a block with a deactivation certificate is "removable" under a
    unique optimum (else "candidate"), otherwise "necessary"."""
    out = []
    for block_id in gs.block_ids():
        result = deactivate(gs, block_id, tol)
        if result.certificate is not None:
            verdict = "removable" if unique_optimum else "candidate"
        else:
            verdict = "necessary"
        out.append((block_id, verdict, result))
    return out


def _support_lp(
    M: np.ndarray,
    target: np.ndarray,
    cols: Sequence[int],
    tol: Tolerances,
) -> np.ndarray | None:
    """Nonnegative multipliers on ``cols`` with M lam = target, found by
    minimizing the largest equation violation; accepted when that
    minimum is inside the stationarity tolerance."""
    S = M.shape[0]
    k = len(cols)
    if k == 0:
        if float(np.max(np.abs(target), initial=0.0)) <= tol.stationarity:
            return np.zeros(M.shape[1])
        return None
    sub = M[:, list(cols)]
    # variables: nu_1..nu_k >= 0, then the violation bound s >= 0
    A_ub = np.zeros((2 * S, k + 1))
    b_ub = np.zeros(2 * S)
    A_ub[:S, :k] = sub
    A_ub[:S, k] = -1.0
    b_ub[:S] = target
    A_ub[S:, :k] = -sub
    A_ub[S:, k] = -1.0
    b_ub[S:] = -target
    c = np.zeros(k + 1)
    c[k] = 1.0
    res = lp_solve(c, A_ub, b_ub, nonneg=np.ones(k + 1, dtype=bool), tol=tol.lp)
    if res.status != "optimal" or res.x[k] > tol.stationarity:
        return None
    lam = np.zeros(M.shape[1])
    lam[list(cols)] = np.maximum(res.x[:k], 0.0)
    return lam


def kkt_certificate(
    matrix: ConstraintMatrix,
    alpha: np.ndarray,
    activity: Sequence[bool],
    exclude_block: str | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray | None:
    """Multipliers certifying the trained optimum for the problem with
    ``exclude_block`` dropped.

    Solves M nu = -2 alpha with nu >= 0 supported on active pieces
    outside the excluded block; -2 alpha is the loss gradient pulled
    back through the Gram matrix.  With positive-definite kernels the
    certificate exists exactly when the drop leaves the optimal
    grounding vector unchanged.
    """
    active = np.asarray(activity, dtype=bool)
    cols = [
        nu
        for nu in range(matrix.n_columns)
        if active[nu] and matrix.column_block[nu] != exclude_block
    ]
    return _support_lp(matrix.matrix, -2.0 * np.asarray(alpha, dtype=float), cols, tol)


@dataclass(eq=False)
class EntailmentResult:
    entailed: bool
    piece_maxima: list[float]
    vacuous: bool


def grounded_entailment(
    blocks: Sequence[ConstraintBlock],
    block_id: str,
    size: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
    include_box: bool = True,
) -> EntailmentResult:
    """Does the rest of the constraint set force ``block_id``?

    For each piece of the block, maximize its value over all truth
    assignments in [0,1]^S satisfying every other block; the block is
    entailed when no piece can become positive.  When the block under
    test is itself one side of the unit box, that side is left out of
    the feasible region so the test is not circular.
    """
    target = next((b for b in blocks if b.block_id == block_id), None)
    if target is None:
        raise AnalysisError(f"unknown block {block_id!r}")

    rows = []
    rhs = []
    for block in blocks:
        if block.block_id == block_id:
            continue
        for piece in block.pieces:
            rows.append(piece.dense(size))
            rhs.append(-piece.constant)
    if include_box:
        skip_lower = skip_upper = -1
        if target.family == "consistency" and len(target.pieces) == 1:
            terms = target.pieces[0].terms
            if len(terms) == 1:
                coord, coef = terms[0]
                if coef < 0:
                    skip_lower = coord
                else:
                    skip_upper = coord
        for k in range(size):
            if k != skip_lower:
                row = np.zeros(size)
                row[k] = -1.0
                rows.append(row)
                rhs.append(0.0)
            if k != skip_upper:
                row = np.zeros(size)
                row[k] = 1.0
                rhs.append(1.0)
                rows.append(row)
    A = np.vstack(rows) if rows else np.zeros((0, size))
    b = np.asarray(rhs)

    maxima = []
    for piece in target.pieces:
        if not piece.terms:
            maxima.append(piece.constant)
            continue
        res = lp_solve(-piece.dense(size), A, b, tol=tol.lp)
        if res.status == "infeasible":
            return EntailmentResult(True, [], True)
        if res.status == "unbounded":
            maxima.append(float("inf"))
            continue
        maxima.append(float(-res.objective + piece.constant))
    entailed = all(v <= tol.entailment for v in maxima)
    return EntailmentResult(entailed, maxima, False)


@dataclass(eq=False)
class SupportSet:
    blocks: tuple[str, ...]
    certificate: np.ndarray


def minimal_support_sets(
    matrix: ConstraintMatrix,
    target: np.ndarray,
    activity: Sequence[bool],
    limit: int = 20,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> list[SupportSet]:
    """All smallest block subsets whose active pieces alone can carry a
    nonnegative solution of the target multiplier system.

    Exhaustive search in increasing cardinality over blocks with at
    least one active piece; guarded by ``limit`` on the pool size.
    """
    active = np.asarray(activity, dtype=bool)
    pool = [
        block_id
        for block_id in matrix.block_order
        if any(active[nu] for nu in matrix.block_columns[block_id])
    ]
    if len(pool) > limit:
        raise SupportLimitExceeded(
            f"{len(pool)} active blocks exceed the search limit {limit}"
        )
    target = np.asarray(target, dtype=float)
    for size in range(len(pool) + 1):
        found = []
        for subset in itertools.combinations(pool, size):
            cols = [
                nu
                for block_id in subset
                for nu in matrix.block_columns[block_id]
                if active[nu]
            ]
            lam = _support_lp(matrix.matrix, target, cols, tol)
            if lam is not None:
                found.append(SupportSet(subset, lam))
        if found:
            return found
    return []


@dataclass(eq=False)
class AblationRecord:
    block: str
    loss: float
    ablated_loss: float
    p_distance: float           # sup distance between the two optima
    dropped_satisfied: bool     # dropped block still holds at the new optimum
    dropped_violation: float
    identical: bool

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "loss": self.loss,
            "ablated_loss": self.ablated_loss,
            "p_distance": self.p_distance,
            "dropped_satisfied": self.dropped_satisfied,
            "dropped_violation": self.dropped_violation,
            "identical": self.identical,
        }


def ablated_problem(tp: TrainingProblem, block_id: str) -> TrainingProblem:
    """The same training problem with one constraint block removed."""
    if all(b.block_id != block_id for b in tp.blocks):
        raise AnalysisError(f"unknown block {block_id!r}")
    blocks = [b for b in tp.blocks if b.block_id != block_id]
    matrix = assemble_matrix(blocks, tp.index.size, tp.keep_zero_pieces)
    return TrainingProblem(
        tp.decls,
        tp.index,
        blocks,
        matrix,
        tp.grams,
        tp.kernel_specs,
        tp.psd,
        tp.bias,
        tp.tolerances,
        tp.keep_zero_pieces,
    )


def ablate_and_compare(
    tp: TrainingProblem,
    block_id: str,
    model: TrainedModel | None = None,
) -> AblationRecord:
    """Retrain without one block and compare optima and losses."""
    dropped = next((b for b in tp.blocks if b.block_id == block_id), None)
    if dropped is None:
        raise AnalysisError(f"unknown block {block_id!r}")
    if model is None:
        model = solve_primal(tp)
    ablated = solve_primal(ablated_problem(tp, block_id))
    distance = float(np.max(np.abs(model.p_star - ablated.p_star), initial=0.0))
    violation = dropped.max_value(ablated.p_star)
    return AblationRecord(
        block_id,
        model.loss,
        ablated.loss,
        distance,
        violation <= 1e-7,
        float(violation),
        distance <= 1e-7,
    )


@dataclass(eq=False)
class BlockReport:
    block_id: str
    family: str
    source: str
    verdict: str
    active_columns: list[str]
    deactivation: DeactivationResult | None
    kkt: np.ndarray | None
    entailment: EntailmentResult | None


@dataclass(eq=False)
class AnalysisReport:
    mode: str
    target: np.ndarray
    general: GeneralSolution
    blocks: list[BlockReport]
    unique_optimum: bool
    psd: dict[str, str]
    loss: float
    minimal_sets: list[SupportSet] | None
    column_labels: list[str]

    def verdict_of(self, block_id: str) -> str:
        for entry in self.blocks:
            if entry.block_id == block_id:
                return entry.verdict
        raise AnalysisError(f"unknown block {block_id!r}")

    def to_dict(self) -> dict:
        def vec(v, labels=None):
            if v is None:
                return None
            values = [float(x) for x in v]
            if labels is None:
                return values
            return {lab: val for lab, val in zip(labels, values)}

        labels = self.column_labels
        blocks = []
        for entry in self.blocks:
            d = entry.deactivation
            blocks.append(
                {
                    "id": entry.block_id,
                    "family": entry.family,
                    "source": entry.source,
                    "verdict": entry.verdict,
                    "active_pieces": entry.active_columns,
                    "target_system": None
                    if d is None
                    else {
                        "certificate": vec(d.certificate, labels),
                        "relaxed": vec(d.relaxed, labels),
                        "t_unique": d.t_unique,
                        "equality_residual": d.equality_residual,
                    },
                    "gradient_certificate": vec(entry.kkt, labels),
                    "entailment": None
                    if entry.entailment is None
                    else {
                        "entailed": entry.entailment.entailed,
                        "vacuous": entry.entailment.vacuous,
                        "piece_maxima": [
                            float(v) if np.isfinite(v) else "unbounded"
                            for v in entry.entailment.piece_maxima
                        ],
                    },
                }
            )
        return {
            "mode": self.mode,
            "loss": self.loss,
            "unique_optimum": self.unique_optimum,
            "kernel_classification": dict(self.psd),
            "nullspace_dimension": self.general.nullspace_dim,
            "system_residual": self.general.residual,
            "target": vec(self.target),
            "particular_solution": vec(self.general.particular, labels),
            "blocks": blocks,
            "minimal_support_sets": None
            if self.minimal_sets is None
            else [
                {"blocks": list(s.blocks), "certificate": vec(s.certificate, labels)}
                for s in self.minimal_sets
            ],
        }


def removable_constraints(
    model: TrainedModel,
    mode: str = "all",
    check_entailment: bool = False,
    minimal_sets: bool = False,
    support_limit: int = 20,
) -> AnalysisReport:
    """Full per-block analysis of a trained model.

    The verdict chain per block: "entailed" when the remaining blocks
    force it over all truth assignments; otherwise "removable" or
    "candidate" (by optimum uniqueness) when a gradient-system
    certificate avoiding the block exists; otherwise "necessary".
    The target-system artifacts (particular solution, nullspace,
    deactivation results) are computed and reported alongside.
    """
    tp = model.problem
    tol = tp.tolerances
    matrix = tp.matrix
    target = logical_coefficients(model, mode)

    if mode == "logical":
        chosen = [
            nu
            for nu in range(matrix.n_columns)
            if matrix.families[matrix.column_block[nu]] == "logical"
        ]
        working = restrict_columns(matrix, chosen)
    else:
        chosen = list(range(matrix.n_columns))
        working = matrix
    sub_active = model.activity[chosen]
    gs = solve_problem2(working.matrix, target, sub_active, working.column_block, tol)

    block_ids = [
        b for b in matrix.block_order
        if mode == "all" or matrix.families[b] == "logical"
    ]
    reports = []
    for block_id in block_ids:
        cols = matrix.block_columns[block_id]
        active_labels = [matrix.column_labels[nu] for nu in cols if model.activity[nu]]
        ent = None
        if check_entailment:
            ent = grounded_entailment(tp.blocks, block_id, tp.index.size, tol)
        deact = deactivate(gs, block_id, tol) if gs.columns_of(block_id) else None
        cert = kkt_certificate(matrix, model.alpha, model.activity, block_id, tol)
        if ent is not None and ent.entailed:
            verdict = "entailed"
        elif cert is not None:
            verdict = "removable" if tp.unique_optimum else "candidate"
        else:
            verdict = "necessary"
        reports.append(
            BlockReport(
                block_id,
                matrix.families[block_id],
                matrix.sources[block_id],
                verdict,
                active_labels,
                deact,
                cert,
                ent,
            )
        )

    sets = None
    if minimal_sets:
        sets = minimal_support_sets(working, target, sub_active, support_limit, tol)

    return AnalysisReport(
        mode,
        target,
        gs,
        reports,
        tp.unique_optimum,
        tp.psd,
        model.loss,
        sets,
        list(working.column_labels),
    )
