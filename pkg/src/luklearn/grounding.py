"""Sample sets, quantifier expansion, and the coordinate layout of the
grounding vector.

Every predicate is evaluated on a finite list of sample tuples.  The
concatenation of those evaluations, predicate by predicate, is the
grounding vector the rest of the package optimizes over.  This module
fixes the coordinate order once and for all: predicates in declaration
order, tuples in lexicographic order of sample names.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .logic import (
    Atom,
    Forall,
    Formula,
    Neg,
    NnfFormula,
    StrongDisj,
    WeakConj,
    iter_atoms,
    to_text,
)


class GroundingError(Exception):
    pass


@dataclass(frozen=True)
class PredicateDecl:
    """A predicate to be learned, with one domain name per argument."""

    name: str
    domains: tuple[str, ...]
    kernel: str = "default"

    def __post_init__(self):
        if len(self.domains) < 1:
            raise GroundingError(f"predicate {self.name!r} must have arity >= 1")

    @property
    def arity(self) -> int:
        return len(self.domains)


@dataclass(eq=False)
class SampleSets:
    """Named sample points per domain plus per-predicate grounding tuples.

    ``domains`` maps a domain name to its points, keyed by sample name in
    sorted order.  ``groundings`` lists, per predicate, the sample-name
    tuples the predicate is evaluated on (lexicographically sorted).
    ``supervised`` holds (tuple, label) pairs with labels in {-1, +1};
    contradictory labels on one tuple are representable and surface
    later as an infeasible training problem.
    """

    domains: dict[str, dict[str, tuple[float, ...]]]
    groundings: dict[str, tuple[tuple[str, ...], ...]]
    supervised: dict[str, tuple[tuple[tuple[str, ...], int], ...]] = field(
        default_factory=dict
    )

    def unsupervised(self, predicate: str) -> tuple[tuple[str, ...], ...]:
        labeled = {t for t, _ in self.supervised.get(predicate, ())}
        return tuple(t for t in self.groundings[predicate] if t not in labeled)

    def point(self, domain: str, name: str) -> tuple[float, ...]:
        return self.domains[domain][name]


def build_samples(
    domains: Mapping[str, Mapping[str, Sequence[float]]],
    decls: Sequence[PredicateDecl],
    supervisions: Iterable[tuple[str, tuple[str, ...], int]] = (),
    groundings: Mapping[str, Sequence[Sequence[str]]] | None = None,
) -> SampleSets:
    """Validate and normalize the sample data for ``decls``.

    Grounding tuples default to the Cartesian product of each argument's
    domain samples; ``groundings`` overrides that per predicate.
    """
    norm_domains: dict[str, dict[str, tuple[float, ...]]] = {}
    for dom_name in sorted(domains):
        points = domains[dom_name]
        norm = {}
        dim = None
        for sample_name in sorted(points):
            coords = tuple(float(v) for v in points[sample_name])
            if dim is None:
                dim = len(coords)
            elif len(coords) != dim:
                raise GroundingError(
                    f"sample {sample_name!r} in domain {dom_name!r} has dimension "
                    f"{len(coords)}, expected {dim}"
                )
            norm[sample_name] = coords
        norm_domains[dom_name] = norm

    by_name: dict[str, PredicateDecl] = {}
    for decl in decls:
        if decl.name in by_name:
            raise GroundingError(f"duplicate predicate {decl.name!r}")
        for dom in decl.domains:
            if dom not in norm_domains:
                raise GroundingError(
                    f"predicate {decl.name!r} references unknown domain {dom!r}"
                )
        by_name[decl.name] = decl

    norm_groundings: dict[str, tuple[tuple[str, ...], ...]] = {}
    for decl in decls:
        if groundings is not None and decl.name in groundings:
            tuples = []
            for raw in groundings[decl.name]:
                t = tuple(raw)
                if len(t) != decl.arity:
                    raise GroundingError(
                        f"grounding tuple {t} for {decl.name!r} has wrong arity"
                    )
                for pos, sample_name in enumerate(t):
                    if sample_name not in norm_domains[decl.domains[pos]]:
                        raise GroundingError(
                            f"grounding tuple {t} for {decl.name!r} uses unknown "
                            f"sample {sample_name!r}"
                        )
                tuples.append(t)
            norm_groundings[decl.name] = tuple(sorted(set(tuples)))
        else:
            per_arg = [sorted(norm_domains[d]) for d in decl.domains]
            norm_groundings[decl.name] = tuple(itertools.product(*per_arg))

    collected: dict[str, list[tuple[tuple[str, ...], int]]] = {}
    for pred, t, label in supervisions:
        if pred not in by_name:
            raise GroundingError(f"supervision references unknown predicate {pred!r}")
        t = tuple(t)
        if label not in (-1, 1):
            raise GroundingError(
                f"supervision label for {pred}{t} must be -1 or +1, got {label!r}"
            )
        if t not in norm_groundings[pred]:
            raise GroundingError(
                f"supervised tuple {t} is not in the grounding set of {pred!r}"
            )
        slot = collected.setdefault(pred, [])
        if (t, label) not in slot:
            slot.append((t, label))
    supervised = {
        pred: tuple(sorted(pairs)) for pred, pairs in collected.items()
    }

    return SampleSets(norm_domains, norm_groundings, supervised)


@dataclass(eq=False)
class GroundingIndex:
    """Bijection between (predicate, sample tuple) pairs and coordinates.

    Coordinates are 0-based internally; exported labels use the
    "predicate:sample1,sample2" convention.
    """

    decls: tuple[PredicateDecl, ...]
    samples: SampleSets
    tuples: dict[str, tuple[tuple[str, ...], ...]]
    offsets: dict[str, int]
    size: int
    _coord: dict[Atom, int]

    def __len__(self) -> int:
        return self.size

    def slice_of(self, predicate: str) -> slice:
        start = self.offsets[predicate]
        return slice(start, start + len(self.tuples[predicate]))

    def to_global(self, predicate: str, t: tuple[str, ...]) -> int:
        return self.coordinate_of(Atom(predicate, tuple(t)))

    def from_global(self, k: int) -> tuple[str, tuple[str, ...]]:
        if not 0 <= k < self.size:
            raise GroundingError(f"coordinate {k} out of range 0..{self.size - 1}")
        for decl in self.decls:
            sl = self.slice_of(decl.name)
            if sl.start <= k < sl.stop:
                return decl.name, self.tuples[decl.name][k - sl.start]
        raise GroundingError(f"coordinate {k} not mapped")

    def coordinate_of(self, atom: Atom) -> int:
        try:
            return self._coord[atom]
        except KeyError:
            raise GroundingError(
                f"ground atom {to_text(atom)} has no coordinate in the index"
            ) from None

    def label(self, k: int) -> str:
        pred, t = self.from_global(k)
        return f"{pred}:{','.join(t)}"

    def labels(self) -> list[str]:
        return [self.label(k) for k in range(self.size)]

    def tuple_points(self, predicate: str) -> list[tuple[float, ...]]:
        """Concatenated coordinates of each grounding tuple, in index order."""
        decl = next(d for d in self.decls if d.name == predicate)
        points = []
        for t in self.tuples[predicate]:
            flat: tuple[float, ...] = ()
            for pos, sample_name in enumerate(t):
                flat = flat + self.samples.point(decl.domains[pos], sample_name)
            points.append(flat)
        return points


def build_grounding_index(
    decls: Sequence[PredicateDecl], samples: SampleSets
) -> GroundingIndex:
    coord: dict[Atom, int] = {}
    offsets: dict[str, int] = {}
    tuples: dict[str, tuple[tuple[str, ...], ...]] = {}
    k = 0
    for decl in decls:
        for dom in decl.domains:
            if not samples.domains.get(dom):
                raise GroundingError(
                    f"domain {dom!r} referenced by {decl.name!r} has no samples"
                )
        ts = samples.groundings[decl.name]
        if not ts:
            raise GroundingError(f"predicate {decl.name!r} has no grounding tuples")
        offsets[decl.name] = k
        tuples[decl.name] = ts
        for t in ts:
            coord[Atom(decl.name, t)] = k
            k += 1
    return GroundingIndex(tuple(decls), samples, tuples, offsets, k, coord)


@dataclass(frozen=True)
class GroundLiteral:
    """A leaf of a grounded formula: one coordinate, possibly negated."""

    coord: int
    negated: bool = False


@dataclass(eq=False)
class GroundFormula:
    """A quantifier-free formula over grounding-vector coordinates.

    ``root`` is a tree of WeakConj / StrongDisj nodes whose leaves are
    GroundLiteral instances; ``source`` is the formula it came from.
    """

    root: object
    index: GroundingIndex
    source: Formula


def _variable_domains(f: Formula, index: GroundingIndex) -> dict[str, str]:
    """Infer, per variable, the domain it ranges over from argument positions."""
    decls = {d.name: d for d in index.decls}
    result: dict[str, str] = {}
    for atom in iter_atoms(f):
        decl = decls.get(atom.name)
        if decl is None:
            raise GroundingError(f"formula uses undeclared predicate {atom.name!r}")
        for pos, arg in enumerate(atom.args):
            dom = decl.domains[pos]
            if arg in index.samples.domains.get(dom, {}):
                continue  # a sample constant, not a variable
            if arg in result and result[arg] != dom:
                raise GroundingError(
                    f"variable {arg!r} is used over domains {result[arg]!r} and {dom!r}"
                )
            result[arg] = dom
    return result


def sample_universe(f: Formula, index: GroundingIndex) -> dict[str, list[str]]:
    """Sample names each quantified variable of ``f`` ranges over."""
    domains = _variable_domains(f, index)
    return {var: sorted(index.samples.domains[dom]) for var, dom in domains.items()}


def expand_quantifiers(f: NnfFormula, index: GroundingIndex) -> GroundFormula:
    """Replace each ``forall`` by a weak conjunction over its domain samples.

    ``f`` must be closed, in negation normal form, and inside the
    concave fragment; leaves of the result are coordinates of ``index``
    or their negations.
    """
    var_domains = _variable_domains(f, index)

    def ground_atom(atom: Atom, env: dict[str, str]) -> int:
        args = []
        for arg in atom.args:
            if arg in env:
                args.append(env[arg])
            elif arg in var_domains:
                raise GroundingError(
                    f"free variable {arg!r} in {to_text(f)}; quantify it"
                )
            else:
                args.append(arg)
        return index.coordinate_of(Atom(atom.name, tuple(args)))

    def rec(node: Formula, env: dict[str, str]):
        kind = type(node)
        if kind is Atom:
            return GroundLiteral(ground_atom(node, env), False)
        if kind is Neg:
            if type(node.child) is not Atom:
                raise GroundingError("negation on a non-atom; normalize first")
            return GroundLiteral(ground_atom(node.child, env), True)
        if kind is WeakConj:
            return WeakConj(rec(node.left, env), rec(node.right, env))
        if kind is StrongDisj:
            return StrongDisj(rec(node.left, env), rec(node.right, env))
        if kind is Forall:
            dom = var_domains.get(node.var)
            if dom is None:
                raise GroundingError(
                    f"cannot infer a domain for quantified variable {node.var!r}"
                )
            names = sorted(index.samples.domains[dom])
            if not names:
                raise GroundingError(f"domain {dom!r} has no samples")
            parts = []
            for name in names:
                inner = dict(env)
                inner[node.var] = name
                parts.append(rec(node.body, inner))
            out = parts[0]
            for part in parts[1:]:
                out = WeakConj(out, part)
            return out
        raise GroundingError(
            f"node {kind.__name__} is outside the concave fragment"
        )

    return GroundFormula(rec(f, {}), index, f)


def ground_conjuncts(g: GroundFormula) -> list[object]:
    """Flatten the top-level weak conjunction of a grounded formula."""
    out: list[object] = []

    def walk(node):
        if type(node) is WeakConj:
            walk(node.left)
            walk(node.right)
        else:
            out.append(node)

    walk(g.root)
    return out


def ground_assignment(index: GroundingIndex, p: Sequence[float]) -> dict[Atom, float]:
    """Truth assignment for every ground atom, read off a grounding vector."""
    vec = np.asarray(p, dtype=float)
    if vec.shape != (index.size,):
        raise GroundingError(f"grounding vector must have length {index.size}")
    out = {}
    for decl in index.decls:
        sl = index.slice_of(decl.name)
        for t, value in zip(index.tuples[decl.name], vec[sl]):
            out[Atom(decl.name, t)] = float(value)
    return out
