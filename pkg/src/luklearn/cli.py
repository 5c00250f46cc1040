"""Command-line front end.

Subcommands: compile, train, analyze, ablate, predict-grid.  All
outputs are deterministic: rerunning a command on the same input file
produces byte-identical artifacts.

Exit codes: 0 success, 2 input error, 3 infeasible problem, 4 resource
guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analyze import (
    AnalysisError,
    SupportLimitExceeded,
    ablate_and_compare,
    removable_constraints,
)
from .constraints import CompileError, matrix_csv
from .grounding import GroundingError
from .kernels import KernelError
from .logic import FormulaError
from .problem import Problem, ProblemError, build_training_problem, load_problem
from .solver import Infeasible, SolverError, Tolerances, tolerances_with
from .train import TrainError, solve_primal

_TOL_FIELDS = ("qp", "lp", "nullspace", "activity", "stationarity", "nonneg", "entailment")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("problem", help="problem file (JSON)")
    parser.add_argument("-o", "--output-dir", default=".", help="directory for output files")
    parser.add_argument("--seed", type=int, default=None,
                        help="recorded in reports; commands themselves are deterministic")
    for name in _TOL_FIELDS:
        parser.add_argument(f"--tol-{name}", type=float, default=None, dest=f"tol_{name}")


def _tolerances(args, problem: Problem) -> Tolerances:
    overrides = {
        name: getattr(args, f"tol_{name}")
        for name in _TOL_FIELDS
        if getattr(args, f"tol_{name}") is not None
    }
    return tolerances_with(problem.tolerances, **overrides)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_compile(args) -> int:
    problem = load_problem(args.problem)
    tp = build_training_problem(problem, _tolerances(args, problem))
    out = _out_dir(args)
    (out / "M.csv").write_text(matrix_csv(tp.matrix, tp.index.labels()))
    manifest = {
        "version": __version__,
        "coordinates": tp.index.labels(),
        "blocks": [
            {
                "id": block.block_id,
                "family": block.family,
                "pieces": len(block.pieces),
                "columns": [tp.matrix.column_labels[nu] for nu in tp.matrix.block_columns[block.block_id]],
                "dropped_constant_pieces": tp.matrix.dropped.get(block.block_id, 0),
                "source": block.source,
            }
            for block in tp.blocks
        ],
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {out / 'M.csv'} and {out / 'manifest.json'}")
    return 0


def _float_map(labels, values) -> dict:
    return {label: float(v) for label, v in zip(labels, values)}


def _tol_dict(tol: Tolerances) -> dict:
    return {name: getattr(tol, name) for name in _TOL_FIELDS}


def cmd_train(args) -> int:
    problem = load_problem(args.problem)
    tol = _tolerances(args, problem)
    tp = build_training_problem(problem, tol)
    model = solve_primal(tp)
    out = _out_dir(args)
    model.save(out / "model.json")
    report = {
        "version": __version__,
        "tolerances": _tol_dict(tol),
        "loss": model.loss,
        "alpha": _float_map(tp.index.labels(), model.alpha),
        "p_star": _float_map(tp.index.labels(), model.p_star),
        "biases": model.biases,
        "activity": {
            label: bool(flag)
            for label, flag in zip(tp.matrix.column_labels, model.activity)
        },
        "multipliers": _float_map(tp.matrix.column_labels, model.multipliers),
        "kkt_residuals": {k: float(v) for k, v in model.qp.residuals.items()},
        "max_violation": model.max_violation(),
        "kernel_classification": tp.psd,
    }
    if args.seed is not None:
        report["seed"] = args.seed
    _write_json(out / "training_report.json", report)
    print(f"loss {model.loss!r}; wrote {out / 'model.json'} and {out / 'training_report.json'}")
    return 0


def cmd_analyze(args) -> int:
    problem = load_problem(args.problem)
    tol = _tolerances(args, problem)
    tp = build_training_problem(problem, tol)
    model = solve_primal(tp)
    report = removable_constraints(
        model,
        mode=args.mode,
        check_entailment=args.entailment,
        minimal_sets=args.minimal_sets,
        support_limit=args.support_limit,
    )
    payload = {"version": __version__, "tolerances": _tol_dict(tol)}
    if args.seed is not None:
        payload["seed"] = args.seed
    payload.update(report.to_dict())
    out = _out_dir(args)
    _write_json(out / "analysis.json", payload)
    for entry in report.blocks:
        print(f"{entry.block_id}: {entry.verdict}")
    print(f"wrote {out / 'analysis.json'}")
    return 0


def cmd_ablate(args) -> int:
    problem = load_problem(args.problem)
    tol = _tolerances(args, problem)
    tp = build_training_problem(problem, tol)
    record = ablate_and_compare(tp, args.drop)
    payload = {"version": __version__, "tolerances": _tol_dict(tol)}
    payload.update(record.to_dict())
    out = _out_dir(args)
    _write_json(out / "ablation.json", payload)
    print(
        f"{args.drop}: loss {record.loss!r} -> {record.ablated_loss!r}, "
        f"optimum distance {record.p_distance!r}"
    )
    print(f"wrote {out / 'ablation.json'}")
    return 0


def cmd_predict_grid(args) -> int:
    problem = load_problem(args.problem)
    tol = _tolerances(args, problem)
    tp = build_training_problem(problem, tol)
    model = solve_primal(tp)
    if all(d.name != args.predicate for d in tp.decls):
        raise ProblemError("predicates", f"unknown predicate {args.predicate!r}")
    dim = len(tp.index.tuple_points(args.predicate)[0])
    if dim not in (1, 2):
        raise ProblemError(
            "predicates",
            f"predict-grid supports input dimension 1 or 2, {args.predicate!r} has {dim}",
        )
    values = np.linspace(args.min, args.max, args.steps)
    lines = []
    if dim == 1:
        lines.append(f"x,{args.predicate}")
        for x in values:
            lines.append(f"{float(x)!r},{model.predict(args.predicate, (float(x),))!r}")
    else:
        lines.append(f"x,y,{args.predicate}")
        for x in values:
            for y in values:
                v = model.predict(args.predicate, (float(x), float(y)))
                lines.append(f"{float(x)!r},{float(y)!r},{v!r}")
    out = _out_dir(args)
    (out / "grid.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'grid.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="luklearn",
        description="Train kernel machines under hard fuzzy-logic constraints "
        "and analyze which constraints are unnecessary.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="export the constraint matrix and block manifest")
    _add_common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("train", help="solve the constrained training problem")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="per-block removability verdicts and certificates")
    _add_common(p)
    p.add_argument("--mode", choices=("all", "logical"), default="all")
    p.add_argument("--entailment", action="store_true",
                   help="also run the logical-consequence check per block")
    p.add_argument("--minimal-sets", action="store_true",
                   help="search for the smallest supporting block subsets")
    p.add_argument("--support-limit", type=int, default=20)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablate", help="retrain without one block and compare")
    _add_common(p)
    p.add_argument("--drop", required=True, help="block id to remove")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict-grid", help="CSV of one predicate over an input grid")
    _add_common(p)
    p.add_argument("--predicate", required=True)
    p.add_argument("--min", type=float, default=0.0)
    p.add_argument("--max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=21)
    p.set_defaults(func=cmd_predict_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except SupportLimitExceeded as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except (
        ProblemError,
        FormulaError,
        GroundingError,
        CompileError,
        KernelError,
        TrainError,
        AnalysisError,
    ) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
