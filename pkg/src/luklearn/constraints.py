"""Compilation of grounded formulas into affine constraint blocks.

A formula in the concave fragment has a truth function expressible as
min_i (a_i . p + c_i) over the box [0,1]^S.  Requiring full truth
(value 1) then turns into affine inequalities: for every piece,
(-a_i) . p + (1 - c_i) <= 0.  This module produces those pieces for
logical, pointwise and consistency constraints, and stacks them into
one matrix whose columns later index the multiplier vector.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .grounding import GroundFormula, GroundingIndex, GroundLiteral
from .logic import StrongDisj, WeakConj


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class AffinePiece:
    """One affine function coord -> terms . p + constant, sparse over
    coordinates; ``terms`` is sorted by coordinate and has no zeros."""

    terms: tuple[tuple[int, float], ...]
    constant: float

    def value(self, p: Sequence[float]) -> float:
        return float(sum(c * p[k] for k, c in self.terms) + self.constant)

    def dense(self, size: int) -> np.ndarray:
        v = np.zeros(size)
        for k, c in self.terms:
            v[k] = c
        return v


def _piece(coeffs: dict[int, float], constant: float) -> AffinePiece:
    terms = tuple(sorted((k, c) for k, c in coeffs.items() if c != 0.0))
    return AffinePiece(terms, float(constant))


_CAP = AffinePiece((), 1.0)


@dataclass(frozen=True)
class AffineSet:
    """A concave piecewise-linear function, the min of ``pieces``."""

    pieces: tuple[AffinePiece, ...]

    def value(self, p: Sequence[float]) -> float:
        return min(piece.value(p) for piece in self.pieces)


def _dedup(pieces: Iterable[AffinePiece]) -> list[AffinePiece]:
    seen = set()
    out = []
    for piece in pieces:
        if piece not in seen:
            seen.add(piece)
            out.append(piece)
    return out


def _is_constant_true(piece: AffinePiece) -> bool:
    return not piece.terms and piece.constant >= 1.0


def compile_min_affine(g: GroundFormula) -> AffineSet:
    """Min-of-affines form of a grounded concave-fragment formula.

    Literals map to single affine pieces.  Weak conjunction unions the
    piece sets.  Strong disjunction contributes the constant-1 cap once
    plus all pointwise sums of one piece per operand; constant-true
    pieces of the operands are not summed, since any sum involving them
    is dominated by the cap.
    """

    def rec(node) -> list[AffinePiece]:
        kind = type(node)
        if kind is GroundLiteral:
            if node.negated:
                return [_piece({node.coord: -1.0}, 1.0)]
            return [_piece({node.coord: 1.0}, 0.0)]
        if kind is WeakConj:
            return _dedup(rec(node.left) + rec(node.right))
        if kind is StrongDisj:
            left = [a for a in rec(node.left) if not _is_constant_true(a)]
            right = [b for b in rec(node.right) if not _is_constant_true(b)]
            sums = []
            for a in left:
                for b in right:
                    coeffs: dict[int, float] = dict(a.terms)
                    for k, c in b.terms:
                        coeffs[k] = coeffs.get(k, 0.0) + c
                    sums.append(_piece(coeffs, a.constant + b.constant))
            return _dedup([_CAP] + sums)
        raise CompileError(f"node {kind.__name__} is outside the concave fragment")

    return AffineSet(tuple(_dedup(rec(g.root))))


@dataclass(frozen=True)
class ConstraintBlock:
    """One constraint h: the conjunction of pieces M_i . p + q_i <= 0.

    Pieces reuse AffinePiece with terms = M_i and constant = q_i.
    """

    block_id: str
    family: str  # "logical" | "pointwise" | "consistency"
    pieces: tuple[AffinePiece, ...]
    source: str = ""

    def __post_init__(self):
        if len(self.pieces) < 1:
            raise CompileError(f"block {self.block_id!r} has no pieces")

    def max_value(self, p: Sequence[float]) -> float:
        return max(piece.value(p) for piece in self.pieces)


def to_constraint_block(
    aset: AffineSet, block_id: str, family: str = "logical", source: str = ""
) -> ConstraintBlock:
    """Turn a min-of-affines truth function into the block requiring
    truth value 1: each piece (a, c) becomes (-a, 1 - c) <= 0.

    Constant pieces (the cap's image (0, 0)) are kept; they are part of
    the block's piece count even though they never bind.
    """
    pieces = []
    for piece in aset.pieces:
        coeffs = {k: -c for k, c in piece.terms}
        pieces.append(_piece(coeffs, 1.0 - piece.constant))
    return ConstraintBlock(block_id, family, tuple(pieces), source)


def pointwise_block(
    predicate: str, t: tuple[str, ...], label: int, index: GroundingIndex
) -> ConstraintBlock:
    """Supervision constraint: label +1 forces p = 1 (1 - p <= 0), label
    -1 forces p = 0 (p <= 0), both up to the consistency box."""
    from .logic import Atom

    k = index.coordinate_of(Atom(predicate, tuple(t)))
    block_id = f"pt:{predicate}:{','.join(t)}"
    source = f"{predicate}({','.join(t)}) = {'+1' if label == 1 else '-1'}"
    if label == 1:
        piece = _piece({k: -1.0}, 1.0)
    elif label == -1:
        piece = _piece({k: 1.0}, 0.0)
    else:
        raise CompileError(f"label for {block_id} must be -1 or +1, got {label!r}")
    return ConstraintBlock(block_id, "pointwise", (piece,), source)


def consistency_blocks(index: GroundingIndex) -> list[ConstraintBlock]:
    """Two one-piece blocks per coordinate keeping it inside [0, 1]:
    -p <= 0, then p - 1 <= 0, in coordinate order."""
    blocks = []
    for k in range(index.size):
        label = index.label(k)
        blocks.append(
            ConstraintBlock(f"lb:{label}", "consistency", (_piece({k: -1.0}, 0.0),), f"0 <= {label}")
        )
        blocks.append(
            ConstraintBlock(f"ub:{label}", "consistency", (_piece({k: 1.0}, -1.0),), f"{label} <= 1")
        )
    return blocks


@dataclass(eq=False)
class ConstraintMatrix:
    """All retained constraint pieces stacked as columns.

    ``matrix`` is S x N; column nu holds M_nu and ``offsets[nu]`` holds
    q_nu, so the piece reads matrix[:, nu] . p + offsets[nu] <= 0.
    """

    matrix: np.ndarray
    offsets: np.ndarray
    column_labels: list[str]
    column_block: list[str]
    block_order: list[str]
    block_columns: dict[str, list[int]]
    families: dict[str, str]
    sources: dict[str, str]
    dropped: dict[str, int]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def columns_of(self, block_id: str) -> list[int]:
        return self.block_columns[block_id]

    def violations(self, p: np.ndarray) -> np.ndarray:
        return self.matrix.T @ p + self.offsets


def assemble_matrix(
    blocks: Sequence[ConstraintBlock], size: int, keep_zero_pieces: bool = False
) -> ConstraintMatrix:
    """Stack block pieces into one matrix, in block order then piece order.

    By default, pieces with no coordinates and a nonpositive offset are
    dropped: they can never bind, and the reference matrices this code
    is checked against do not carry the corresponding zero columns.
    ``keep_zero_pieces`` retains them so every block piece gets a column.
    A constant piece with positive offset is always kept; it marks an
    infeasible system.
    """
    ids = set()
    columns = []
    offsets = []
    labels = []
    column_block = []
    block_order = []
    block_columns: dict[str, list[int]] = {}
    families = {}
    sources = {}
    dropped = {}
    for block in blocks:
        if block.block_id in ids:
            raise CompileError(f"duplicate block id {block.block_id!r}")
        ids.add(block.block_id)
        block_order.append(block.block_id)
        block_columns[block.block_id] = []
        families[block.block_id] = block.family
        sources[block.block_id] = block.source
        kept = 0
        for piece in block.pieces:
            if not keep_zero_pieces and not piece.terms and piece.constant <= 0.0:
                dropped[block.block_id] = dropped.get(block.block_id, 0) + 1
                continue
            for k, _ in piece.terms:
                if not 0 <= k < size:
                    raise CompileError(
                        f"block {block.block_id!r} uses coordinate {k} outside 0..{size - 1}"
                    )
            kept += 1
            block_columns[block.block_id].append(len(columns))
            columns.append(piece.dense(size))
            offsets.append(piece.constant)
            labels.append(f"{block.block_id}:{kept}")
            column_block.append(block.block_id)
    matrix = np.column_stack(columns) if columns else np.zeros((size, 0))
    return ConstraintMatrix(
        matrix,
        np.array(offsets, dtype=float),
        labels,
        column_block,
        block_order,
        block_columns,
        families,
        sources,
        dropped,
    )


def restrict_columns(cm: ConstraintMatrix, columns: Sequence[int]) -> ConstraintMatrix:
    """Submatrix keeping only the given columns, in their stacked order."""
    cols = list(columns)
    block_order: list[str] = []
    block_columns: dict[str, list[int]] = {}
    for new, old in enumerate(cols):
        bid = cm.column_block[old]
        if bid not in block_columns:
            block_order.append(bid)
            block_columns[bid] = []
        block_columns[bid].append(new)
    return ConstraintMatrix(
        cm.matrix[:, cols],
        cm.offsets[cols],
        [cm.column_labels[i] for i in cols],
        [cm.column_block[i] for i in cols],
        block_order,
        block_columns,
        {b: cm.families[b] for b in block_order},
        {b: cm.sources[b] for b in block_order},
        {},
    )


def matrix_csv(cm: ConstraintMatrix, coordinate_labels: Sequence[str]) -> str:
    """CSV export: header "coord,<column labels>", one row per grounding
    coordinate, and a trailing row for the offsets labeled "q".

    Labels containing commas (tuple coordinates) are quoted per the CSV
    standard.
    """
    if len(coordinate_labels) != cm.matrix.shape[0]:
        raise CompileError("coordinate label count does not match the matrix")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["coord"] + list(cm.column_labels))
    for row, label in enumerate(coordinate_labels):
        writer.writerow([label] + [repr(float(v)) for v in cm.matrix[row]])
    writer.writerow(["q"] + [repr(float(v)) for v in cm.offsets])
    return out.getvalue()
