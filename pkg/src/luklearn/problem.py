"""Problem files: one JSON document describing a whole experiment.

Sections: "domains" (named points), "predicates" (declaration order
matters; it fixes the coordinate layout), "kernels", "formulas",
"supervisions", optional "groundings" overrides and "options".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .grounding import GroundingError, PredicateDecl, SampleSets, build_samples
from .kernels import KernelError, KernelSpec
from .logic import Formula, FormulaError, parse_formula
from .solver import DEFAULT_TOLERANCES, Tolerances, tolerances_with
from .train import TrainingProblem, assemble_problem


class ProblemError(Exception):
    """A problem file failed validation; ``section`` names where."""

    def __init__(self, section: str, message: str):
        super().__init__(f"[{section}] {message}")
        self.section = section


_KERNEL_KEYS = {"kind", "offset", "degree", "sigma"}
_OPTION_KEYS = {"bias", "keep_zero_pieces", "tolerances"}


@dataclass(eq=False)
class Problem:
    decls: tuple[PredicateDecl, ...]
    samples: SampleSets
    formulas: list[Formula]
    formula_texts: list[str]
    kernels: dict[str, KernelSpec]
    bias: bool = False
    keep_zero_pieces: bool = False
    tolerances: Tolerances = field(default_factory=lambda: DEFAULT_TOLERANCES)


def _require(data: Mapping, key: str, kind, section: str):
    if key not in data:
        raise ProblemError(section, f"missing required section {key!r}")
    value = data[key]
    if not isinstance(value, kind):
        raise ProblemError(section, f"{key!r} must be a {kind.__name__}")
    return value


def parse_problem(data: Mapping) -> Problem:
    if not isinstance(data, Mapping):
        raise ProblemError("root", "problem file must be a JSON object")

    domains = _require(data, "domains", dict, "domains")
    for name, points in domains.items():
        if not isinstance(points, dict) or not points:
            raise ProblemError("domains", f"domain {name!r} must map sample names to points")

    predicates = _require(data, "predicates", dict, "predicates")
    decls = []
    for name, entry in predicates.items():
        if not isinstance(entry, dict) or "domains" not in entry:
            raise ProblemError("predicates", f"predicate {name!r} needs a 'domains' list")
        kernel = entry.get("kernel", "default")
        try:
            decls.append(PredicateDecl(name, tuple(entry["domains"]), kernel))
        except GroundingError as exc:
            raise ProblemError("predicates", str(exc)) from exc

    kernels: dict[str, KernelSpec] = {}
    for kid, entry in data.get("kernels", {}).items():
        if not isinstance(entry, dict):
            raise ProblemError("kernels", f"kernel {kid!r} must be an object")
        unknown = set(entry) - _KERNEL_KEYS
        if unknown:
            raise ProblemError("kernels", f"kernel {kid!r} has unknown keys {sorted(unknown)}")
        try:
            kernels[kid] = KernelSpec(**entry)
        except (KernelError, TypeError) as exc:
            raise ProblemError("kernels", f"kernel {kid!r}: {exc}") from exc
    kernels.setdefault("default", KernelSpec())
    for decl in decls:
        if decl.kernel not in kernels:
            raise ProblemError(
                "predicates", f"predicate {decl.name!r} uses undefined kernel {decl.kernel!r}"
            )

    supervisions = []
    for pos, entry in enumerate(data.get("supervisions", [])):
        if not isinstance(entry, dict) or not {"predicate", "sample", "label"} <= set(entry):
            raise ProblemError(
                "supervisions", f"entry {pos} needs 'predicate', 'sample' and 'label'"
            )
        sample = entry["sample"]
        if isinstance(sample, str):
            sample = [sample]
        supervisions.append((entry["predicate"], tuple(sample), entry["label"]))

    groundings = data.get("groundings")
    try:
        samples = build_samples(domains, decls, supervisions, groundings)
    except GroundingError as exc:
        raise ProblemError("domains", str(exc)) from exc

    signature = {d.name: d.arity for d in decls}
    formulas = []
    texts = []
    for pos, text in enumerate(data.get("formulas", [])):
        if not isinstance(text, str):
            raise ProblemError("formulas", f"formula {pos + 1} must be a string")
        try:
            formulas.append(parse_formula(text, signature))
        except FormulaError as exc:
            raise ProblemError("formulas", f"formula {pos + 1}: {exc}") from exc
        texts.append(text)

    options = data.get("options", {})
    if not isinstance(options, dict):
        raise ProblemError("options", "'options' must be an object")
    unknown = set(options) - _OPTION_KEYS
    if unknown:
        raise ProblemError("options", f"unknown option keys {sorted(unknown)}")
    tol_overrides = options.get("tolerances", {})
    if not isinstance(tol_overrides, dict):
        raise ProblemError("options", "'tolerances' must be an object")
    try:
        tolerances = tolerances_with(**{k: float(v) for k, v in tol_overrides.items()})
    except (TypeError, ValueError) as exc:
        raise ProblemError("options", f"bad tolerance override: {exc}") from exc

    return Problem(
        tuple(decls),
        samples,
        formulas,
        texts,
        kernels,
        bool(options.get("bias", False)),
        bool(options.get("keep_zero_pieces", False)),
        tolerances,
    )


def load_problem(path) -> Problem:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ProblemError("file", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ProblemError("file", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_problem(data)


def build_training_problem(problem: Problem, tolerances: Tolerances | None = None) -> TrainingProblem:
    return assemble_problem(
        problem.decls,
        problem.samples,
        problem.formulas,
        problem.kernels,
        bias=problem.bias,
        keep_zero_pieces=problem.keep_zero_pieces,
        tolerances=tolerances or problem.tolerances,
    )
