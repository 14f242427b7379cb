"""Structural matching between query bodies.

One backtracking engine serves three clients: homomorphisms (each source
atom lands on some destination atom, variables map to arbitrary terms),
body isomorphisms (atoms map bijectively onto a subset, designated
variables map injectively to variables), and full query isomorphism
(head- and aggregate-preserving body isomorphism whose comparison sets
are semantically equivalent).

All enumerations are deterministic: source atoms are chosen most-bound
first, destination atoms are tried in input order.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .constraints import equivalent_constraints
from .errors import AggregateMismatch, HasComparisons
from .model import (
    Aggregate,
    AggregateQuery,
    ProductTerm,
    RelationalAtom,
    Substitution,
    Term,
    Variable,
)


def _unify_atom(src: RelationalAtom,
                dst: RelationalAtom,
                binding: dict[Variable, Term],
                inverse: dict[Variable, Variable],
                iso_vars: frozenset[Variable]) -> Optional[tuple[dict, dict]]:
    """Extend binding so src maps onto dst, or None. iso_vars must map to
    variables, injectively among themselves."""
    if src.predicate != dst.predicate or src.arity != dst.arity:
        return None
    new_b = dict(binding)
    new_i = dict(inverse)
    for s, d in zip(src.args, dst.args):
        if not isinstance(s, Variable):
            if s != d:
                return None
            continue
        seen = new_b.get(s)
        if seen is not None:
            if seen != d:
                return None
            continue
        if s in iso_vars:
            if not isinstance(d, Variable) or d in new_i:
                return None
            new_i[d] = s
        new_b[s] = d
    return new_b, new_i


def _embed(src_atoms: Sequence[RelationalAtom],
           dst_atoms: Sequence[RelationalAtom],
           fixed: Mapping[Variable, Term],
           *,
           bijective: bool,
           iso_vars: frozenset[Variable] = frozenset()
           ) -> Iterator[tuple[dict[Variable, Term], tuple[RelationalAtom, ...]]]:
    """All (binding, image) with binding extending fixed and mapping every
    src atom onto a dst atom. With bijective=True distinct src atoms use
    distinct dst atoms and image lists them in src order."""
    src_atoms = list(dict.fromkeys(src_atoms))
    dst_atoms = list(dict.fromkeys(dst_atoms))
    inverse0: dict[Variable, Variable] = {}
    for v, t in fixed.items():
        if v in iso_vars:
            if not isinstance(t, Variable) or t in inverse0:
                return
            inverse0[t] = v

    def rec(binding: dict, inverse: dict, remaining: list[RelationalAtom],
            image: dict[RelationalAtom, RelationalAtom]) -> Iterator:
        if not remaining:
            yield dict(binding), tuple(image[a] for a in src_atoms)
            return
        remaining = sorted(
            remaining,
            key=lambda a: (-sum(v in binding for v in a.variables()),
                           src_atoms.index(a)),
        )
        atom, rest = remaining[0], remaining[1:]
        used = set(image.values())
        for d in dst_atoms:
            if bijective and d in used:
                continue
            ext = _unify_atom(atom, d, binding, inverse, iso_vars)
            if ext is None:
                continue
            image[atom] = d
            yield from rec(ext[0], ext[1], rest, image)
            del image[atom]

    yield from rec(dict(fixed), inverse0, src_atoms, {})


def find_homomorphisms(src_atoms: Sequence[RelationalAtom],
                       dst_atoms: Sequence[RelationalAtom],
                       fixed: Optional[Mapping[Variable, Term]] = None
                       ) -> Iterator[Substitution]:
    """Variable mappings sending every src atom onto some dst atom."""
    seen = set()
    for binding, _ in _embed(src_atoms, dst_atoms, fixed or {}, bijective=False):
        s = Substitution(binding)
        if s not in seen:
            seen.add(s)
            yield s


def find_body_isomorphisms(src_atoms: Sequence[RelationalAtom],
                           dst_atoms: Sequence[RelationalAtom],
                           fixed: Optional[Mapping[Variable, Term]] = None,
                           iso_vars: Optional[Iterable[Variable]] = None
                           ) -> Iterator[tuple[Substitution, tuple[RelationalAtom, ...]]]:
    """Injective-on-variables mappings sending the src atoms bijectively
    onto a subset of the dst atoms. Yields (substitution, image atoms in
    src order). iso_vars defaults to all src variables."""
    if iso_vars is None:
        iso_vars = {v for a in src_atoms for v in a.variables()}
    for binding, image in _embed(src_atoms, dst_atoms, fixed or {},
                                 bijective=True, iso_vars=frozenset(iso_vars)):
        yield Substitution(binding), image


def _head_fixed(src: AggregateQuery,
                dst: AggregateQuery) -> Optional[dict[Variable, Term]]:
    """Positional head (and aggregate) variable correspondence, or None on
    conflict."""
    fixed: dict[Variable, Term] = {}
    pairs = list(zip(src.grouping, dst.grouping))
    if isinstance(src.agg, Aggregate) and src.agg.var is not None:
        pairs.append((src.agg.var, dst.agg.var))
    elif isinstance(src.agg, ProductTerm):
        pairs.extend(zip(src.agg.factors, dst.agg.factors))
    for s, d in pairs:
        if not isinstance(s, Variable):
            if s != d:
                return None
            continue
        if fixed.setdefault(s, d) != d:
            return None
    return fixed


def _same_agg_shape(q1: AggregateQuery, q2: AggregateQuery) -> None:
    a1, a2 = q1.agg, q2.agg
    if a1 is None and a2 is None:
        return
    if isinstance(a1, Aggregate) and isinstance(a2, Aggregate) and a1.func == a2.func:
        return
    if (isinstance(a1, ProductTerm) and isinstance(a2, ProductTerm)
            and a1.summed == a2.summed and len(a1.factors) == len(a2.factors)):
        return
    raise AggregateMismatch(
        f"aggregate shapes differ: {a1!r} vs {a2!r}")


def isomorphic_queries(q1: AggregateQuery,
                       q2: AggregateQuery) -> Optional[Substitution]:
    """A head-, aggregate- and constraint-preserving renaming of q1 onto
    q2, or None. Comparison sets are compared semantically. Raises
    AggregateMismatch when the aggregate shapes differ."""
    _same_agg_shape(q1, q2)
    if len(q1.grouping) != len(q2.grouping):
        return None
    atoms1 = tuple(dict.fromkeys(q1.atoms))
    atoms2 = tuple(dict.fromkeys(q2.atoms))
    if len(atoms1) != len(atoms2):
        return None
    vars1 = q1.variables()
    vars2 = q2.variables()
    if len(vars1) != len(vars2):
        return None
    fixed = _head_fixed(q1, q2)
    if fixed is None:
        return None
    for sub, _ in find_body_isomorphisms(atoms1, atoms2, fixed, iso_vars=vars1):
        if any(v not in sub for v in vars1):
            continue
        mapped = tuple(sub.comparison(c) for c in q1.comparisons)
        if equivalent_constraints(mapped, q2.comparisons):
            return sub
    return None


def _hom_exists(src: AggregateQuery, dst: AggregateQuery) -> bool:
    fixed = _head_fixed(src, dst)
    if fixed is None:
        return False
    return next(find_homomorphisms(src.atoms, dst.atoms, fixed), None) is not None


def set_equivalent_relational(q1: AggregateQuery, q2: AggregateQuery) -> bool:
    """Set equivalence of two comparison-free plain queries, decided by
    head-preserving homomorphisms in both directions. Raises
    HasComparisons when either query carries comparisons."""
    if q1.comparisons or q2.comparisons:
        raise HasComparisons("set equivalence is only decided without comparisons")
    c1 = q1.core() if q1.agg is not None else q1
    c2 = q2.core() if q2.agg is not None else q2
    if len(c1.grouping) != len(c2.grouping):
        return False
    return _hom_exists(c1, c2) and _hom_exists(c2, c1)
