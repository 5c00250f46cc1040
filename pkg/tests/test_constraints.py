"""Tests for the affine compiler and the stacked constraint matrix."""

from __future__ import annotations

import csv
import io

import numpy as np
import pytest

from luklearn.constraints import (
    AffinePiece,
    CompileError,
    assemble_matrix,
    compile_min_affine,
    consistency_blocks,
    matrix_csv,
    pointwise_block,
    restrict_columns,
    to_constraint_block,
)
from luklearn.grounding import (
    GroundFormula,
    PredicateDecl,
    build_grounding_index,
    build_samples,
    expand_quantifiers,
    ground_assignment,
    sample_universe,
)
from luklearn.logic import StrongConj, eval_lukasiewicz, parse_formula, to_nnf

DOMS = {"points": {"x1": (0.2, 0.6), "x2": (0.7, 0.3)}}
DECLS = [
    PredicateDecl("p1", ("points",)),
    PredicateDecl("p2", ("points", "points")),
]

TRANSITIVE_PRODUCT = "forall x: forall y: (p1(x) * p1(y)) -> p2(x,y)"


def _index():
    return build_grounding_index(DECLS, build_samples(DOMS, DECLS))


def _ground(text: str):
    index = _index()
    return expand_quantifiers(to_nnf(parse_formula(text)), index), index


def test_literal_pieces():
    g, _ = _ground("p1(x1)")
    aset = compile_min_affine(g)
    assert aset.pieces == (AffinePiece(((0, 1.0),), 0.0),)

    g, _ = _ground("~p1(x2)")
    aset = compile_min_affine(g)
    assert aset.pieces == (AffinePiece(((1, -1.0),), 1.0),)


def test_weak_conjunction_unions_pieces():
    g, _ = _ground("p1(x1) & ~p1(x2)")
    aset = compile_min_affine(g)
    assert aset.pieces == (
        AffinePiece(((0, 1.0),), 0.0),
        AffinePiece(((1, -1.0),), 1.0),
    )


def test_duplicate_conjuncts_dedup():
    g, _ = _ground("p1(x1) & p1(x1)")
    assert len(compile_min_affine(g).pieces) == 1


def test_strong_disjunction_cap_and_sum():
    g, _ = _ground("~p1(x1) + p1(x2)")
    aset = compile_min_affine(g)
    assert aset.pieces == (
        AffinePiece((), 1.0),
        AffinePiece(((0, -1.0), (1, 1.0)), 1.0),
    )


def test_tautology_collapses_to_cap():
    g, _ = _ground("~p1(x1) + p1(x1)")
    aset = compile_min_affine(g)
    assert aset.pieces == (AffinePiece((), 1.0),)


def test_transitive_product_five_pieces():
    g, _ = _ground(TRANSITIVE_PRODUCT)
    aset = compile_min_affine(g)
    assert len(aset.pieces) == 5
    assert aset.pieces[0] == AffinePiece((), 1.0)
    # second piece: both bound variables at the first sample
    assert aset.pieces[1] == AffinePiece(((0, -2.0), (2, 1.0)), 2.0)


def test_transitive_product_block_form():
    g, index = _ground(TRANSITIVE_PRODUCT)
    block = to_constraint_block(compile_min_affine(g), "phi1")
    dense = np.array([p.dense(index.size) for p in block.pieces])
    offsets = [p.constant for p in block.pieces]
    expected = np.array(
        [
            [0, 0, 0, 0, 0, 0],
            [2, 0, -1, 0, 0, 0],
            [1, 1, 0, -1, 0, 0],
            [1, 1, 0, 0, -1, 0],
            [0, 2, 0, 0, 0, -1],
        ],
        dtype=float,
    )
    assert np.array_equal(dense, expected)
    assert offsets == [0.0, -1.0, -1.0, -1.0, -1.0]


def test_compile_rejects_non_fragment_nodes():
    index = _index()
    from luklearn.grounding import GroundLiteral

    bad = GroundFormula(StrongConj(GroundLiteral(0), GroundLiteral(1)), index, None)
    with pytest.raises(CompileError, match="fragment"):
        compile_min_affine(bad)


def test_compiled_value_matches_evaluation():
    """The min of the affine pieces must equal the truth value on the box."""
    texts = [
        TRANSITIVE_PRODUCT,
        "forall v: p1(v)",
        "p1(x1) & ~p2(x2,x1)",
        "forall v: ~p1(v) + p1(v)",
        "forall u: forall v: ~p2(u,v) + ~p2(v,u) + p1(u)",
        "forall v: p1(v) & (p1(x1) + ~p2(v,v))",
    ]
    rng = np.random.default_rng(47)
    for text in texts:
        f = to_nnf(parse_formula(text))
        g, index = _ground(text)
        aset = compile_min_affine(g)
        universe = sample_universe(f, index)
        for _ in range(200):
            p = rng.random(index.size)
            truth = eval_lukasiewicz(f, ground_assignment(index, p), universe)
            assert abs(aset.value(p) - truth) <= 1e-12


def test_block_satisfaction_iff_full_truth():
    g, index = _ground(TRANSITIVE_PRODUCT)
    aset = compile_min_affine(g)
    block = to_constraint_block(aset, "phi1")
    rng = np.random.default_rng(53)
    for _ in range(200):
        p = rng.random(index.size)
        assert block.max_value(p) == pytest.approx(1.0 - aset.value(p), abs=1e-12)
    ones = np.ones(index.size)
    assert block.max_value(ones) <= 0.0


def test_pointwise_blocks():
    index = _index()
    pos = pointwise_block("p1", ("x1",), 1, index)
    assert pos.block_id == "pt:p1:x1"
    assert pos.family == "pointwise"
    assert pos.pieces == (AffinePiece(((0, -1.0),), 1.0),)

    neg = pointwise_block("p2", ("x2", "x1"), -1, index)
    assert neg.block_id == "pt:p2:x2,x1"
    assert neg.pieces == (AffinePiece(((4, 1.0),), 0.0),)

    with pytest.raises(CompileError, match="must be -1 or \\+1"):
        pointwise_block("p1", ("x1",), 0, index)


def test_consistency_blocks_cover_box():
    index = _index()
    blocks = consistency_blocks(index)
    assert len(blocks) == 12
    assert [b.block_id for b in blocks[:4]] == ["lb:p1:x1", "ub:p1:x1", "lb:p1:x2", "ub:p1:x2"]
    assert blocks[0].pieces == (AffinePiece(((0, -1.0),), 0.0),)
    assert blocks[1].pieces == (AffinePiece(((0, 1.0),), -1.0),)
    assert all(b.family == "consistency" for b in blocks)


def test_assemble_matrix_drops_constant_pieces_by_default():
    g, index = _ground(TRANSITIVE_PRODUCT)
    block = to_constraint_block(compile_min_affine(g), "phi1")
    cm = assemble_matrix([block], index.size)
    assert cm.n_columns == 4
    assert cm.dropped == {"phi1": 1}
    assert cm.column_labels == ["phi1:1", "phi1:2", "phi1:3", "phi1:4"]
    assert np.array_equal(cm.matrix[:, 0], [2, 0, -1, 0, 0, 0])

    kept = assemble_matrix([block], index.size, keep_zero_pieces=True)
    assert kept.n_columns == 5
    assert kept.dropped == {}
    assert kept.column_labels[:2] == ["phi1:1", "phi1:2"]
    assert np.array_equal(kept.matrix[:, 0], np.zeros(6))
    assert np.array_equal(kept.matrix[:, 1], [2, 0, -1, 0, 0, 0])


def test_assemble_matrix_metadata_and_violations():
    index = _index()
    blocks = [pointwise_block("p1", ("x1",), 1, index)] + consistency_blocks(index)
    cm = assemble_matrix(blocks, index.size)
    assert cm.block_order[0] == "pt:p1:x1"
    assert cm.families["pt:p1:x1"] == "pointwise"
    assert cm.columns_of("lb:p1:x2") == [3]
    p = np.linspace(0.0, 1.0, index.size)
    v = cm.violations(p)
    for nu in range(cm.n_columns):
        expected = float(cm.matrix[:, nu] @ p + cm.offsets[nu])
        assert v[nu] == pytest.approx(expected, abs=1e-15)


def test_assemble_matrix_rejects_duplicates_and_bad_coords():
    index = _index()
    b = pointwise_block("p1", ("x1",), 1, index)
    with pytest.raises(CompileError, match="duplicate block id"):
        assemble_matrix([b, b], index.size)
    with pytest.raises(CompileError, match="outside"):
        assemble_matrix([b], 0)


def test_restrict_columns_keeps_structure():
    index = _index()
    blocks = [pointwise_block("p1", ("x1",), 1, index)] + consistency_blocks(index)
    cm = assemble_matrix(blocks, index.size)
    sub = restrict_columns(cm, [0, 3, 4])
    assert sub.n_columns == 3
    assert sub.column_labels == ["pt:p1:x1:1", "lb:p1:x2:1", "ub:p1:x2:1"]
    assert sub.block_order == ["pt:p1:x1", "lb:p1:x2", "ub:p1:x2"]
    assert sub.columns_of("lb:p1:x2") == [1]
    assert np.array_equal(sub.matrix, cm.matrix[:, [0, 3, 4]])


def test_matrix_csv_round_trip():
    g, index = _ground(TRANSITIVE_PRODUCT)
    block = to_constraint_block(compile_min_affine(g), "phi1")
    cm = assemble_matrix([block] + consistency_blocks(index), index.size)
    text = matrix_csv(cm, index.labels())
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][0] == "coord"
    assert rows[0][1:] == cm.column_labels
    assert [r[0] for r in rows[1:-1]] == index.labels()
    assert rows[-1][0] == "q"
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:-1]])
    assert np.array_equal(body, cm.matrix)
    assert np.array_equal([float(v) for v in rows[-1][1:]], cm.offsets)

    with pytest.raises(CompileError, match="label count"):
        matrix_csv(cm, ["just-one"])
