"""Constrained kernel-machine training.

The decision variables are kernel-expansion coefficients, one per
grounding tuple and predicate.  Writing K-hat for the block-diagonal
matrix of per-predicate Gram matrices, the grounding vector is
p = K-hat a (plus an optional per-predicate bias), the objective is
Loss(a) = a . K-hat a, and every compiled constraint piece
M . p + q <= 0 becomes a linear inequality in a.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constraints import (
    ConstraintBlock,
    ConstraintMatrix,
    assemble_matrix,
    compile_min_affine,
    consistency_blocks,
    pointwise_block,
    to_constraint_block,
)
from .grounding import (
    GroundingIndex,
    PredicateDecl,
    SampleSets,
    build_grounding_index,
    expand_quantifiers,
)
from .kernels import GramMatrix, KernelSpec, gram, kernel_value, psd_check
from .logic import Formula, check_concave_fragment, to_nnf, to_text
from .solver import DEFAULT_TOLERANCES, QpProblem, QpSolution, Tolerances, solve_qp


class TrainError(Exception):
    pass


@dataclass(eq=False)
class TrainingProblem:
    decls: tuple[PredicateDecl, ...]
    index: GroundingIndex
    blocks: list[ConstraintBlock]
    matrix: ConstraintMatrix
    grams: dict[str, GramMatrix]
    kernel_specs: dict[str, KernelSpec]
    psd: dict[str, str]
    bias: bool
    tolerances: Tolerances
    keep_zero_pieces: bool = False

    @property
    def size(self) -> int:
        return self.index.size

    def khat(self) -> np.ndarray:
        """Block-diagonal Gram matrix in predicate declaration order."""
        S = self.index.size
        K = np.zeros((S, S))
        for decl in self.decls:
            sl = self.index.slice_of(decl.name)
            K[sl, sl] = self.grams[decl.name].matrix
        return K

    def bias_map(self) -> np.ndarray:
        """S x J indicator assigning each coordinate its predicate's bias."""
        B = np.zeros((self.index.size, len(self.decls)))
        for j, decl in enumerate(self.decls):
            B[self.index.slice_of(decl.name), j] = 1.0
        return B

    @property
    def unique_optimum(self) -> bool:
        """True when every Gram matrix is positive definite (and bias is
        off), which makes the optimal grounding vector unique."""
        return (not self.bias) and all(v == "positive_definite" for v in self.psd.values())


def assemble_problem(
    decls: Sequence[PredicateDecl],
    samples: SampleSets,
    formulas: Sequence[Formula],
    kernels: Mapping[str, KernelSpec] | None = None,
    bias: bool = False,
    keep_zero_pieces: bool = False,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> TrainingProblem:
    """Compile formulas, supervisions and consistency requirements over
    the declared predicates into one constrained QP description.

    Logical blocks are named phi1, phi2, ... in formula order; pointwise
    blocks follow in predicate declaration then tuple order; consistency
    blocks close the list, lower bound before upper bound per coordinate.
    """
    decls = tuple(decls)
    kernels = dict(kernels or {})
    kernels.setdefault("default", KernelSpec())
    index = build_grounding_index(decls, samples)

    blocks: list[ConstraintBlock] = []
    for num, f in enumerate(formulas, start=1):
        nnf = to_nnf(f)
        report = check_concave_fragment(nnf)
        if not report.is_concave_fragment:
            raise TrainError(
                f"formula {to_text(f)!r} leaves the concave fragment at a "
                f"{report.offending_kind} node (path {list(report.offending_path)})"
            )
        grounded = expand_quantifiers(nnf, index)
        aset = compile_min_affine(grounded)
        blocks.append(to_constraint_block(aset, f"phi{num}", "logical", to_text(f)))

    for decl in decls:
        used_ids: dict[str, int] = {}
        for t, label in samples.supervised.get(decl.name, ()):
            block = pointwise_block(decl.name, t, label, index)
            count = used_ids.get(block.block_id, 0)
            used_ids[block.block_id] = count + 1
            if count:  # contradictory labels on one tuple still get distinct ids
                block = ConstraintBlock(
                    f"{block.block_id}#{count + 1}", block.family, block.pieces, block.source
                )
            blocks.append(block)

    blocks.extend(consistency_blocks(index))
    matrix = assemble_matrix(blocks, index.size, keep_zero_pieces)

    grams = {}
    psd = {}
    for decl in decls:
        spec = kernels.get(decl.kernel)
        if spec is None:
            raise TrainError(
                f"predicate {decl.name!r} is bound to unknown kernel {decl.kernel!r}"
            )
        g = gram(spec, index.tuple_points(decl.name))
        verdict = psd_check(g)
        if verdict == "invalid":
            raise TrainError(
                f"kernel {decl.kernel!r} produced an indefinite Gram matrix for "
                f"{decl.name!r} (min eigenvalue {g.min_eigenvalue:.3e})"
            )
        grams[decl.name] = g
        psd[decl.name] = verdict

    specs = {decl.name: kernels[decl.kernel] for decl in decls}
    return TrainingProblem(
        decls, index, blocks, matrix, grams, specs, psd, bias, tolerances,
        keep_zero_pieces,
    )


def _expansion_value(
    spec: KernelSpec,
    points: Sequence[Sequence[float]],
    alpha: np.ndarray,
    bias: float,
    x: Sequence[float],
) -> float:
    return float(sum(a * kernel_value(spec, pt, x) for a, pt in zip(alpha, points)) + bias)


@dataclass(eq=False)
class TrainedModel:
    problem: TrainingProblem
    alpha: np.ndarray                  # concatenated coefficients, length S
    biases: dict[str, float]
    p_star: np.ndarray
    loss: float
    activity: np.ndarray               # bool per retained constraint column
    multipliers: np.ndarray            # QP multipliers per retained column
    qp: QpSolution = field(repr=False)

    def alphas(self) -> dict[str, np.ndarray]:
        return {
            decl.name: self.alpha[self.problem.index.slice_of(decl.name)].copy()
            for decl in self.problem.decls
        }

    def predict(self, predicate: str, x: Sequence[float]) -> float:
        """Kernel-expansion value of ``predicate`` at input ``x``."""
        problem = self.problem
        decl = next((d for d in problem.decls if d.name == predicate), None)
        if decl is None:
            raise TrainError(f"unknown predicate {predicate!r}")
        points = problem.index.tuple_points(predicate)
        dim = len(points[0])
        if len(x) != dim:
            raise TrainError(
                f"predicate {predicate!r} expects inputs of dimension {dim}, got {len(x)}"
            )
        sl = problem.index.slice_of(predicate)
        return _expansion_value(
            problem.kernel_specs[predicate], points, self.alpha[sl], self.biases[predicate], x
        )

    def max_violation(self) -> float:
        v = self.problem.matrix.violations(self.p_star)
        return float(np.max(v, initial=0.0))

    def to_dict(self) -> dict:
        problem = self.problem
        preds = []
        for decl in problem.decls:
            sl = problem.index.slice_of(decl.name)
            spec = problem.kernel_specs[decl.name]
            preds.append(
                {
                    "name": decl.name,
                    "domains": list(decl.domains),
                    "kernel": {
                        "kind": spec.kind,
                        "offset": spec.offset,
                        "degree": spec.degree,
                        "sigma": spec.sigma,
                    },
                    "tuples": [list(t) for t in problem.index.tuples[decl.name]],
                    "points": [list(pt) for pt in problem.index.tuple_points(decl.name)],
                    "alpha": [float(v) for v in self.alpha[sl]],
                    "bias": self.biases[decl.name],
                }
            )
        return {
            "format": "luklearn-model/1",
            "predicates": preds,
            "loss": self.loss,
            "p_star": {
                label: float(v)
                for label, v in zip(problem.index.labels(), self.p_star)
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")


def solve_primal(tp: TrainingProblem) -> TrainedModel:
    """Solve the constrained training problem to optimality.

    Raises solver.Infeasible when the constraint system admits no
    grounding vector (the exception carries the phase-1 certificate).
    """
    S = tp.index.size
    khat = tp.khat()
    n_bias = len(tp.decls) if tp.bias else 0
    n = S + n_bias

    Q = np.zeros((n, n))
    Q[:S, :S] = 2.0 * khat
    rows = tp.matrix.matrix.T @ khat  # one row per constraint column
    if n_bias:
        rows = np.hstack([rows, tp.matrix.matrix.T @ tp.bias_map()])
    qp = solve_qp(QpProblem(Q, np.zeros(n), rows, tp.matrix.offsets.copy()), tp.tolerances)

    alpha = qp.x[:S]
    bias_vec = qp.x[S:] if n_bias else np.zeros(len(tp.decls))
    biases = {decl.name: float(bias_vec[j]) for j, decl in enumerate(tp.decls)}
    p_star = khat @ alpha + (tp.bias_map() @ bias_vec if n_bias else 0.0)
    loss = float(alpha @ khat @ alpha)
    violations = tp.matrix.violations(p_star)
    activity = np.abs(violations) <= tp.tolerances.activity
    return TrainedModel(
        tp, alpha, biases, np.asarray(p_star), loss, activity, qp.multipliers.copy(), qp
    )


@dataclass(eq=False)
class LoadedModel:
    """A model restored from disk; supports prediction only."""

    predicates: list[dict]

    def predict(self, predicate: str, x: Sequence[float]) -> float:
        for entry in self.predicates:
            if entry["name"] == predicate:
                spec = KernelSpec(**entry["kernel"])
                return _expansion_value(
                    spec, entry["points"], np.asarray(entry["alpha"]), entry["bias"], x
                )
        raise TrainError(f"unknown predicate {predicate!r}")


def load_model(path) -> LoadedModel:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != "luklearn-model/1":
        raise TrainError(f"{path} is not a model file")
    return LoadedModel(data["predicates"])
