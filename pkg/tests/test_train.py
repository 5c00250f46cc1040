"""Tests for assembling and solving the constrained training problem."""

from __future__ import annotations

import json

import numpy as np
import pytest

from luklearn.constraints import restrict_columns
from luklearn.grounding import PredicateDecl, build_samples
from luklearn.kernels import KernelSpec
from luklearn.logic import parse_formula
from luklearn.solver import Infeasible
from luklearn.train import TrainError, assemble_problem, load_model, solve_primal

POINT = {"points": {"x1": (0.4, 0.3)}}
CHAIN_DECLS = [
    PredicateDecl("p1", ("points",)),
    PredicateDecl("p2", ("points",)),
    PredicateDecl("p3", ("points",)),
]
CHAIN_TEXTS = [
    "forall x: p1(x) -> p2(x)",
    "forall x: p2(x) -> p3(x)",
    "forall x: p1(x) -> p3(x)",
]


def _chain_problem(**kwargs):
    samples = build_samples(
        POINT,
        CHAIN_DECLS,
        [("p1", ("x1",), -1), ("p2", ("x1",), 1), ("p3", ("x1",), 1)],
    )
    formulas = [parse_formula(t) for t in CHAIN_TEXTS]
    return assemble_problem(CHAIN_DECLS, samples, formulas, **kwargs)


def test_chain_problem_layout():
    tp = _chain_problem()
    assert tp.size == 3
    assert tp.matrix.matrix.shape == (3, 12)
    assert tp.matrix.block_order == [
        "phi1",
        "phi2",
        "phi3",
        "pt:p1:x1",
        "pt:p2:x1",
        "pt:p3:x1",
        "lb:p1:x1",
        "ub:p1:x1",
        "lb:p2:x1",
        "ub:p2:x1",
        "lb:p3:x1",
        "ub:p3:x1",
    ]
    # each logical block keeps one piece; the constant cap is dropped
    assert all(len(tp.matrix.columns_of(f"phi{i}")) == 1 for i in (1, 2, 3))
    assert tp.matrix.dropped == {"phi1": 1, "phi2": 1, "phi3": 1}
    assert np.allclose(tp.khat(), 1.25 * np.eye(3), atol=1e-12)
    assert tp.psd == {p: "positive_definite" for p in ("p1", "p2", "p3")}
    assert tp.unique_optimum


def test_chain_problem_training_values():
    model = solve_primal(_chain_problem())
    assert np.allclose(model.alpha, [0.0, 0.8, 0.8], atol=1e-6)
    assert np.allclose(model.p_star, [0.0, 1.0, 1.0], atol=1e-6)
    assert model.loss == pytest.approx(1.6, abs=1e-6)
    assert model.max_violation() <= 1e-9

    active = {i + 1 for i in range(12) if model.activity[i]}
    assert active == {2, 4, 5, 6, 7, 10, 12}
    assert np.min(model.multipliers) >= 0.0
    assert model.qp.residuals["stationarity"] <= 1e-7


def test_alphas_split_by_predicate():
    model = solve_primal(_chain_problem())
    parts = model.alphas()
    assert set(parts) == {"p1", "p2", "p3"}
    assert parts["p2"][0] == pytest.approx(0.8, abs=1e-6)


def test_fragment_violation_is_reported():
    samples = build_samples(POINT, CHAIN_DECLS[:2], [])
    bad = parse_formula("forall x: p1(x) * p2(x)")
    with pytest.raises(TrainError, match="StrongConj"):
        assemble_problem(CHAIN_DECLS[:2], samples, [bad])


def test_unknown_kernel_is_reported():
    decls = [PredicateDecl("p1", ("points",), kernel="missing")]
    samples = build_samples(POINT, decls, [])
    with pytest.raises(TrainError, match="unknown kernel"):
        assemble_problem(decls, samples, [])


def test_conflicting_supervisions_are_infeasible():
    decls = [PredicateDecl("p1", ("points",))]
    samples = build_samples(POINT, decls, [("p1", ("x1",), 1), ("p1", ("x1",), -1)])
    tp = assemble_problem(decls, samples, [])
    assert "pt:p1:x1" in tp.matrix.block_order
    assert "pt:p1:x1#2" in tp.matrix.block_order
    with pytest.raises(Infeasible) as info:
        solve_primal(tp)
    assert info.value.certificate > 0.0


def test_supervision_forces_target_value():
    decls = [PredicateDecl("p1", ("points",))]
    point = {"points": {"x1": (0.5, 0.5)}}
    for label, target in ((1, 1.0), (-1, 0.0)):
        samples = build_samples(point, decls, [("p1", ("x1",), label)])
        model = solve_primal(assemble_problem(decls, samples, []))
        assert model.p_star[0] == pytest.approx(target, abs=1e-8)
    # the last model forces value 0, which the zero expansion gives for free
    assert model.loss == pytest.approx(0.0, abs=1e-12)


def test_loss_is_inverse_kernel_for_single_positive_label():
    decls = [PredicateDecl("p1", ("points",))]
    samples = build_samples({"points": {"x1": (0.5, 0.5)}}, decls, [("p1", ("x1",), 1)])
    model = solve_primal(assemble_problem(decls, samples, []))
    assert model.loss == pytest.approx(1.0 / 1.5, abs=1e-9)


def test_binary_predicate_training_is_consistent():
    doms = {"points": {"x1": (0.2, 0.6), "x2": (0.7, 0.3)}}
    decls = [
        PredicateDecl("p1", ("points",), kernel="poly2"),
        PredicateDecl("p2", ("points", "points"), kernel="poly2"),
    ]
    samples = build_samples(doms, decls, [("p1", ("x1",), 1), ("p1", ("x2",), -1)])
    f = parse_formula("forall x: forall y: (p1(x) * p1(y)) -> p2(x,y)")
    tp = assemble_problem(
        decls,
        samples,
        [f],
        kernels={"poly2": KernelSpec("polynomial", degree=2, offset=1.0)},
        keep_zero_pieces=True,
    )
    assert tp.matrix.n_columns == 5 + 2 + 12
    model = solve_primal(tp)
    assert model.max_violation() <= 1e-8
    assert model.p_star[0] == pytest.approx(1.0, abs=1e-7)
    assert model.p_star[1] == pytest.approx(0.0, abs=1e-7)
    phi1 = next(b for b in tp.blocks if b.block_id == "phi1")
    assert phi1.max_value(model.p_star) <= 1e-8


def test_predict_reproduces_training_values():
    model = solve_primal(_chain_problem())
    for k, pred in enumerate(("p1", "p2", "p3")):
        assert model.predict(pred, (0.4, 0.3)) == pytest.approx(model.p_star[k], abs=1e-9)
    with pytest.raises(TrainError, match="dimension"):
        model.predict("p1", (0.4,))
    with pytest.raises(TrainError, match="unknown predicate"):
        model.predict("zzz", (0.4, 0.3))


def test_save_and_load_round_trip(tmp_path):
    model = solve_primal(_chain_problem())
    path = tmp_path / "model.json"
    model.save(path)
    loaded = load_model(path)
    rng = np.random.default_rng(89)
    for _ in range(10):
        x = rng.random(2)
        for pred in ("p1", "p2", "p3"):
            assert loaded.predict(pred, x) == pytest.approx(model.predict(pred, x), abs=1e-12)

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(TrainError, match="not a model file"):
        load_model(bad)


def test_bias_relaxes_the_problem():
    decls = [PredicateDecl("p1", ("points",)), PredicateDecl("p2", ("points",))]
    samples = build_samples({"points": {"x1": (0.5, 0.5)}}, decls, [("p1", ("x1",), 1)])
    formulas = [parse_formula("forall x: p1(x) -> p2(x)")]
    plain = solve_primal(assemble_problem(decls, samples, formulas))
    biased = solve_primal(assemble_problem(decls, samples, formulas, bias=True))
    assert biased.max_violation() <= 1e-8
    assert biased.loss <= plain.loss + 1e-9
    assert set(biased.biases) == {"p1", "p2"}
    assert not assemble_problem(decls, samples, formulas, bias=True).unique_optimum


def test_restriction_to_active_columns_keeps_optimum():
    model = solve_primal(_chain_problem())
    tp = model.problem
    active_cols = [i for i in range(tp.matrix.n_columns) if model.activity[i]]
    restricted = restrict_columns(tp.matrix, active_cols)
    tp2 = type(tp)(
        tp.decls,
        tp.index,
        tp.blocks,
        restricted,
        tp.grams,
        tp.kernel_specs,
        tp.psd,
        tp.bias,
        tp.tolerances,
        tp.keep_zero_pieces,
    )
    again = solve_primal(tp2)
    assert np.max(np.abs(again.p_star - model.p_star)) <= 1e-8
    assert again.loss == pytest.approx(model.loss, abs=1e-9)
