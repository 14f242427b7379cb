"""Rewriting aggregate queries over materialized aggregate views.

A rewriting replaces body atoms of the query by view atoms. Count and sum
rewritings are found by a cover search: repeatedly pick a view together
with a usable match onto the remaining body, swallow the matched atoms,
and record the view atom with a fresh output variable. Max and min
rewritings are assembled from per-atom buckets of candidate view
applications and individually verified before being emitted.

Usability of a match has a structural half (the match must be injective on
the view's own variables, and variables hidden inside the view must not
leak into the rest of the query, its head, or its aggregation term) and a
comparison half (the query's comparisons must imply the view's, and the
view's must imply those query comparisons that touch hidden variables).

Verification unfolds a candidate back over the view definitions and
decides equivalence where a decision procedure exists (isomorphism for
count and sum over relational or linear queries, core set-equivalence for
relational max and min), falling back to a randomized search for
counterexamples otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Union

from .constraints import consistent, deductive_closure, implies, minimize
from .errors import (
    NotACountQuery,
    NotAMaxQuery,
    NotASumQuery,
    RewritingFormError,
    UnknownView,
    WrongQueryKind,
)
from .evaluator import (
    Counterexample,
    Database,
    SizeParams,
    oracle_equivalent,
)
from .matcher import (
    _embed,
    find_homomorphisms,
    isomorphic_queries,
    set_equivalent_relational,
)
from .model import (
    Aggregate,
    AggregateQuery,
    Comparison,
    ProductTerm,
    RelationalAtom,
    Substitution,
    Term,
    Variable,
    ViewSet,
    agg_variables,
    comparison_key,
    fresh_variables,
    normalize,
    term_key,
)
from .parser import render, render_atom, render_comparison, render_term

# ---------------------------------------------------------------------------
# Rewriting structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ViewAtom:
    """One view occurrence: view(args) for a plain view, view(args) plus an
    output variable holding the aggregate column otherwise."""

    view: str
    args: tuple[Term, ...]
    output: Optional[Variable] = None

    def arg_variables(self) -> set[Variable]:
        return {t for t in self.args if isinstance(t, Variable)}


@dataclass(frozen=True)
class SumOfProducts:
    """Head expression sum(scalar * counts[0] * ...). scalar=None for count
    rewritings."""

    scalar: Optional[Variable]
    counts: tuple[Variable, ...]

    @property
    def factors(self) -> tuple[Variable, ...]:
        return ((self.scalar,) if self.scalar else ()) + self.counts


@dataclass(frozen=True)
class Extremum:
    """Head expression max(var) or min(var)."""

    var: Variable
    minimum: bool


@dataclass(frozen=True)
class PlainProduct:
    """Summation-omitted head: the bare product of `original`'s factors,
    valid when every view argument is a grouping variable or constant."""

    factors: tuple[Variable, ...]
    original: Union[SumOfProducts, Extremum]


HeadExpr = Union[SumOfProducts, Extremum, PlainProduct]


@dataclass(frozen=True)
class RewritingHead:
    grouping: tuple[Variable, ...]
    expr: HeadExpr


@dataclass(frozen=True)
class Match:
    """An atom-bijective embedding of a view body onto part of a query body.
    theta maps the view's distinguished variables, phi injectively maps its
    nondistinguished variables to query variables, image lists the covered
    query atoms."""

    theta: Substitution
    phi: Substitution
    image: tuple[RelationalAtom, ...]

    def mu(self) -> Substitution:
        return Substitution(dict(self.theta.items()) | dict(self.phi.items()))


@dataclass(frozen=True)
class Rewriting:
    """A (partial) rewriting: view atoms, leftover base atoms, residual
    comparisons, and a head expression over grouping variables, view
    outputs and visible variables."""

    name: str
    head: RewritingHead
    view_atoms: tuple[ViewAtom, ...]
    base_atoms: tuple[RelationalAtom, ...] = ()
    comparisons: tuple[Comparison, ...] = ()
    provenance: tuple[Match, ...] = ()

    @property
    def is_partial(self) -> bool:
        return bool(self.base_atoms)

    def to_query(self) -> AggregateQuery:
        """The rewriting as an ordinary query over the extended schema,
        view outputs flattened into the last argument position."""
        atoms = []
        for va in self.view_atoms:
            args = va.args + ((va.output,) if va.output is not None else ())
            atoms.append(RelationalAtom(va.view, args))
        atoms.extend(self.base_atoms)
        expr = self.head.expr
        if isinstance(expr, PlainProduct):
            agg: Union[Aggregate, ProductTerm] = ProductTerm(expr.factors, False)
        elif isinstance(expr, Extremum):
            agg = Aggregate("min" if expr.minimum else "max", expr.var)
        elif len(expr.factors) == 1:
            agg = Aggregate("sum", expr.factors[0])
        else:
            agg = ProductTerm(expr.factors, True)
        return AggregateQuery(self.name, self.head.grouping, agg,
                              tuple(atoms), self.comparisons)

    def __repr__(self):
        return render(self)


@dataclass(frozen=True)
class ProvedEquivalent:
    witness: Optional[Substitution] = None


@dataclass(frozen=True)
class RefutedByCounterexample:
    database: Database
    seed: int


@dataclass(frozen=True)
class RefutedByStructure:
    reason: str


@dataclass(frozen=True)
class Unknown:
    trials: int


Verdict = Union[ProvedEquivalent, RefutedByCounterexample, RefutedByStructure,
                Unknown]


# ---------------------------------------------------------------------------
# Usable matches
# ---------------------------------------------------------------------------


def nondistinguished_vars(v: AggregateQuery) -> set[Variable]:
    out = v.body_variables() | set(agg_variables(v.agg))
    return out - set(v.grouping)


def _atom_sort_key(a: RelationalAtom):
    return (a.predicate, a.arity, tuple(term_key(t) for t in a.args))


def r_usable_matches(v: AggregateQuery,
                     q: AggregateQuery,
                     agg_cover: bool = False) -> Iterator[Match]:
    """Matches of view v onto q's body obeying the structural usability
    conditions: the view body maps atom-bijectively onto part of q,
    nondistinguished view variables map injectively to q variables disjoint
    from the head images, and variables hidden inside the view occur
    neither in the rest of q's body nor in its head or aggregation term.

    With agg_cover=True the view's own aggregation variable must map onto
    q's aggregation variable, which is then exempt from the aggregation-
    term condition (it still must not occur elsewhere in q)."""
    v_atoms = tuple(dict.fromkeys(v.atoms))
    q_atoms = tuple(dict.fromkeys(q.atoms))
    if not v_atoms:
        return
    dv = set(v.grouping)
    ndv = nondistinguished_vars(v)
    agg_vars = set(agg_variables(q.agg))
    y_q: Optional[Variable] = None
    if agg_cover:
        if not (isinstance(v.agg, Aggregate) and v.agg.var is not None
                and v.agg.var in ndv and len(agg_vars) == 1):
            return
        (y_q,) = agg_vars
    protected_head = set(q.grouping)
    for binding, image in _embed(v_atoms, q_atoms, {}, bijective=True,
                                 iso_vars=frozenset(ndv)):
        if agg_cover and binding.get(v.agg.var) != y_q:
            continue
        if any(d not in binding for d in dv):
            continue
        theta = Substitution({d: binding[d] for d in dv})
        phi = Substitution({w: binding[w] for w in ndv if w in binding})
        theta_var_images = {t for _, t in theta.items() if isinstance(t, Variable)}
        phi_images = {t for _, t in phi.items()}
        if phi_images & theta_var_images:
            continue
        head_terms = tuple(theta.term(x) for x in v.grouping)
        visible = {t for t in head_terms if isinstance(t, Variable)}
        image_set = set(image)
        image_vars = {w for a in image_set for w in a.variables()}
        hidden = image_vars - visible
        rest_vars = {w for a in q_atoms if a not in image_set
                     for w in a.variables()}
        if hidden & rest_vars:
            continue
        if hidden & protected_head:
            continue
        effective_agg = agg_vars - {y_q} if agg_cover else agg_vars
        if hidden & effective_agg:
            continue
        yield Match(theta, phi, image)


def c_usability_checks(v: AggregateQuery,
                       match: Match,
                       query_comparisons: tuple[Comparison, ...]
                       ) -> tuple[bool, bool]:
    """The two comparison-level usability conditions: the query comparisons
    imply the instantiated view comparisons, and those imply back every
    query comparison touching an image of a nondistinguished view
    variable."""
    mu = match.mu()
    inherited = tuple(mu.comparison(c) for c in v.comparisons)
    first = implies(query_comparisons, inherited)
    nd_images = {t for _, t in match.phi.items()}
    relevant = tuple(c for c in query_comparisons
                     if set(c.variables()) & nd_images)
    second = implies(inherited, relevant)
    return first, second


def c_usable(v: AggregateQuery, match: Match,
             query_comparisons: tuple[Comparison, ...]) -> bool:
    first, second = c_usability_checks(v, match, query_comparisons)
    return first and second


# ---------------------------------------------------------------------------
# Count and sum rewriting: the cover search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Choice:
    view: AggregateQuery
    match: Match
    head_terms: tuple[Term, ...]
    kind: str  # "count" or "sum"
    inherited: tuple[Comparison, ...]


def _hidden_vars(v: AggregateQuery, match: Match) -> set[Variable]:
    visible = set()
    for x in v.grouping:
        t = match.theta.term(x)
        if isinstance(t, Variable):
            visible.add(t)
    image_vars = {w for a in match.image for w in a.variables()}
    return image_vars - visible


def _apply_choice(v: AggregateQuery, match: Match,
                  atoms_now: tuple[RelationalAtom, ...],
                  not_covered: frozenset[RelationalAtom]
                  ) -> Optional[tuple[tuple[RelationalAtom, ...],
                                      frozenset[RelationalAtom]]]:
    """Swallow the matched atoms: every image of a view atom with a
    nondistinguished variable must still be uncovered and leaves the body;
    all images leave the uncovered set. None when the choice fails."""
    mu = match.mu()
    ndv = nondistinguished_vars(v)
    atoms = list(atoms_now)
    nc = set(not_covered)
    for a in dict.fromkeys(v.atoms):
        g = mu.atom(a)
        if any(w in ndv for w in a.variables()):
            if g not in nc:
                return None
            atoms.remove(g)
        nc.discard(g)
    return tuple(atoms), frozenset(nc)


def _cover_stream(q: AggregateQuery, views: ViewSet, *, close_first: bool,
                  partial: bool, use_sum_view: bool) -> Iterator[Rewriting]:
    if not q.atoms:
        return
    atoms0 = tuple(dict.fromkeys(q.atoms))
    if close_first:
        comps0 = deductive_closure(q.comparisons)
    else:
        comps0 = tuple(dict.fromkeys(q.comparisons))
    y_q = q.agg.var if isinstance(q.agg, Aggregate) else None
    emitted: set[str] = set()

    def emit(chosen: tuple[_Choice, ...],
             comps_now: tuple[Comparison, ...],
             residual: tuple[RelationalAtom, ...]) -> Optional[Rewriting]:
        residual = tuple(sorted(residual, key=_atom_sort_key))
        zgen = fresh_variables("Z", q.variables())
        view_atoms = []
        counts = []
        scalar: Optional[Variable] = None
        inherited_all: list[Comparison] = []
        for ch in chosen:
            inherited_all.extend(ch.inherited)
            if ch.kind == "sum":
                out = y_q
                scalar = y_q
            else:
                out = next(zgen)
                counts.append(out)
            view_atoms.append(ViewAtom(ch.view.name, ch.head_terms, out))
        if use_sum_view and scalar is None:
            visible = {t for ch in chosen for t in ch.head_terms
                       if isinstance(t, Variable)}
            visible |= {w for a in residual for w in a.variables()}
            if y_q not in visible:
                return None
            scalar = y_q
        expr = SumOfProducts(scalar, tuple(counts))
        comps = minimize(comps_now, given=tuple(inherited_all))
        r = Rewriting(
            name="r",
            head=RewritingHead(q.grouping, expr),
            view_atoms=tuple(view_atoms),
            base_atoms=residual,
            comparisons=tuple(sorted(comps, key=comparison_key)),
            provenance=tuple(ch.match for ch in chosen),
        )
        key = render(normalize(r.to_query()))
        if key in emitted:
            return None
        emitted.add(key)
        return r

    def rec(atoms_now: tuple[RelationalAtom, ...],
            comps_now: tuple[Comparison, ...],
            not_covered: frozenset[RelationalAtom],
            chosen: tuple[_Choice, ...],
            sum_used: bool,
            residual: tuple[RelationalAtom, ...]) -> Iterator[Rewriting]:
        if not not_covered:
            if not chosen:
                return
            r = emit(chosen, comps_now, residual)
            if r is not None:
                yield r
            return
        target = min(not_covered, key=_atom_sort_key)
        q_now = replace(q, atoms=atoms_now, comparisons=comps_now)
        kept = {t for ch in chosen for t in ch.head_terms
                if isinstance(t, Variable)}
        for v in views:
            if not isinstance(v.agg, Aggregate):
                continue
            if v.agg.func == "count":
                agg_cover = False
            elif v.agg.func == "sum" and use_sum_view and not sum_used:
                agg_cover = True
            else:
                continue
            for m in r_usable_matches(v, q_now, agg_cover=agg_cover):
                if target not in m.image:
                    continue
                # Earlier choices matched against a body that still held
                # their images, so their visible arguments are no longer
                # seen by r_usable_matches here; a variable this match
                # hides must not collide with them.
                hidden = _hidden_vars(v, m)
                if hidden & kept:
                    continue
                # The summed variable may live only inside the sum view's
                # image; any other occurrence would join it pointwise while
                # the view aggregates it away.
                if agg_cover and any(
                        y_q in set(a.variables()) and a not in set(m.image)
                        for a in atoms0):
                    continue
                if not c_usable(v, m, comps_now):
                    continue
                applied = _apply_choice(v, m, atoms_now, not_covered)
                if applied is None:
                    continue
                new_atoms, new_nc = applied
                new_comps = tuple(c for c in comps_now
                                  if not set(c.variables()) & hidden)
                mu = m.mu()
                ch = _Choice(
                    view=v,
                    match=m,
                    head_terms=tuple(m.theta.term(x) for x in v.grouping),
                    kind=v.agg.func,
                    inherited=tuple(mu.comparison(c) for c in v.comparisons),
                )
                yield from rec(new_atoms, new_comps, new_nc,
                               chosen + (ch,), sum_used or agg_cover,
                               residual)
        if partial:
            yield from rec(atoms_now, comps_now, not_covered - {target},
                           chosen, sum_used, residual + (target,))

    yield from rec(atoms0, comps0, frozenset(atoms0), (), False, ())


def count_rewriting(q: AggregateQuery, views: ViewSet, *,
                    close_first: bool = True,
                    partial: bool = False) -> Iterator[Rewriting]:
    """Stream of count rewritings of q over the views, full rewritings
    before the partial ones they extend. Deterministic order."""
    if not (isinstance(q.agg, Aggregate) and q.agg.func == "count"):
        raise NotACountQuery(f"expected a count query, got head {q.agg!r}")
    return _cover_stream(q, views, close_first=close_first, partial=partial,
                         use_sum_view=False)


def sum_rewriting(q: AggregateQuery, views: ViewSet, *,
                  close_first: bool = True,
                  partial: bool = False) -> Iterator[Rewriting]:
    """Stream of sum rewritings of q: count-view covers where the summed
    variable stays visible, or covers using exactly one sum view whose
    aggregation variable lands on the summed variable."""
    if not (isinstance(q.agg, Aggregate) and q.agg.func == "sum"):
        raise NotASumQuery(f"expected a sum query, got head {q.agg!r}")
    return _cover_stream(q, views, close_first=close_first, partial=partial,
                         use_sum_view=True)


# ---------------------------------------------------------------------------
# Max and min rewriting: bucket assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _BucketEntry:
    view: AggregateQuery
    head_terms: tuple[Term, ...]
    agg_image: Optional[Term]
    inherited: tuple[Comparison, ...]

    @property
    def key(self):
        return (self.view.name, self.head_terms, self.agg_image)


def _atom_unifier(src: RelationalAtom,
                  dst: RelationalAtom) -> Optional[dict[Variable, Term]]:
    if src.predicate != dst.predicate or src.arity != dst.arity:
        return None
    out: dict[Variable, Term] = {}
    for s, d in zip(src.args, dst.args):
        if isinstance(s, Variable):
            if out.setdefault(s, d) != d:
                return None
        elif s != d:
            return None
    return out


def _bucket_entries(a: RelationalAtom, q: AggregateQuery, views: ViewSet,
                    func: str, q_atoms: tuple[RelationalAtom, ...],
                    fresh: Iterator[Variable]) -> list[_BucketEntry]:
    """Candidate view applications covering atom a: unify one view atom
    with a, extend to either a full homomorphism into q's body or fresh
    variables, keep extensions whose comparisons are jointly consistent
    with q's and whose nondistinguished variables do not capture query
    variables with uncovered atoms."""
    q_vars = q.variables()
    entries: list[_BucketEntry] = []
    seen = set()
    for v in views:
        if not (v.agg is None
                or (isinstance(v.agg, Aggregate) and v.agg.func == func)):
            continue
        v_atoms = tuple(dict.fromkeys(v.atoms))
        ndv = nondistinguished_vars(v)
        for b in v_atoms:
            phi0 = _atom_unifier(b, a)
            if phi0 is None:
                continue
            candidates = [dict(s.items())
                          for s in find_homomorphisms(v_atoms, q_atoms, phi0)]
            candidates.append(dict(phi0))
            for base_map in candidates:
                mapping = dict(base_map)
                unmapped = sorted(v.variables() - mapping.keys(),
                                  key=lambda w: w.name)
                for w in unmapped:
                    mapping[w] = next(fresh)
                sub = Substitution(mapping)
                inherited = tuple(sub.comparison(c) for c in v.comparisons)
                if not consistent(tuple(q.comparisons) + inherited):
                    continue
                covered = {sub.atom(x) for x in v_atoms}
                captured = False
                for w in ndv & set(b.variables()):
                    z = mapping[w]
                    if not (isinstance(z, Variable) and z in q_vars):
                        continue
                    if any(z in set(g.variables()) and g not in covered
                           for g in q_atoms):
                        captured = True
                        break
                if captured:
                    continue
                head_terms = tuple(sub.term(x) for x in v.grouping)
                agg_image = sub.term(v.agg.var) if v.agg is not None else None
                entry = _BucketEntry(v, head_terms, agg_image, inherited)
                if entry.key in seen:
                    continue
                seen.add(entry.key)
                entries.append(entry)
    return entries


def max_rewriting(q: AggregateQuery, views: ViewSet, *,
                  trials: int = 200, seed: int = 0,
                  size: SizeParams = SizeParams()) -> Iterator[Rewriting]:
    """Stream of verified max (or min) rewritings of q. Every candidate
    assembled from the buckets is checked with verify_rewriting first;
    refuted candidates are dropped, so emitted rewritings are either proved
    equivalent or survived the randomized search."""
    if not (isinstance(q.agg, Aggregate) and q.agg.func in ("max", "min")):
        raise NotAMaxQuery(f"expected a max or min query, got head {q.agg!r}")
    if not q.atoms:
        return
    func = q.agg.func
    y_q = q.agg.var
    q_atoms = tuple(sorted(dict.fromkeys(q.atoms), key=_atom_sort_key))
    fresh = fresh_variables("F", q.variables())
    buckets = []
    for a in q_atoms:
        entries = _bucket_entries(a, q, views, func, q_atoms, fresh)
        if not entries:
            return
        buckets.append(entries)

    emitted: set[str] = set()
    for combo in itertools.product(*buckets):
        specs: list[_BucketEntry] = []
        keys = set()
        for e in combo:
            if e.key not in keys:
                keys.add(e.key)
                specs.append(e)
        agg_specs = [e for e in specs if e.agg_image is not None]
        if len(agg_specs) > 1:
            continue
        visible = {t for e in specs for t in e.head_terms
                   if isinstance(t, Variable)}
        if agg_specs:
            if agg_specs[0].agg_image != y_q or y_q in visible:
                continue
        elif y_q not in visible:
            continue
        if not set(q.grouping) <= visible:
            continue
        view_atoms = tuple(
            ViewAtom(e.view.name, e.head_terms,
                     y_q if e.agg_image is not None else None)
            for e in specs)
        inherited_all = tuple(c for e in specs for c in e.inherited)
        comps = tuple(c for c in dict.fromkeys(q.comparisons)
                      if set(c.variables()) <= visible)
        comps = minimize(comps, given=inherited_all)
        r = Rewriting(
            name="r",
            head=RewritingHead(q.grouping, Extremum(y_q, func == "min")),
            view_atoms=view_atoms,
            comparisons=tuple(sorted(comps, key=comparison_key)),
        )
        key = render(normalize(r.to_query()))
        if key in emitted:
            continue
        emitted.add(key)
        verdict = verify_rewriting(q, r, views, trials=trials, seed=seed,
                                   size=size)
        if isinstance(verdict, (RefutedByStructure, RefutedByCounterexample)):
            continue
        yield r


# ---------------------------------------------------------------------------
# Summation omission
# ---------------------------------------------------------------------------


def omit_summation(r: Rewriting) -> Rewriting:
    """Drop the summation when every group matches at most one assignment:
    all view and base atom arguments are grouping variables or constants.
    Then sum(z1*...*zn) becomes z1*...*zn, sum(y*...) becomes y*..., and
    max(y)/min(y) becomes y. Otherwise r is returned unchanged."""
    grouping = set(r.head.grouping)

    def grouped(terms) -> bool:
        return all(not isinstance(t, Variable) or t in grouping for t in terms)

    if not all(grouped(va.args) for va in r.view_atoms):
        return r
    if not all(grouped(a.args) for a in r.base_atoms):
        return r
    expr = r.head.expr
    if isinstance(expr, PlainProduct):
        return r
    if isinstance(expr, Extremum):
        factors: tuple[Variable, ...] = (expr.var,)
    else:
        factors = expr.factors
    return replace(r, head=RewritingHead(r.head.grouping,
                                         PlainProduct(factors, expr)))


# ---------------------------------------------------------------------------
# Unfolding
# ---------------------------------------------------------------------------


def unfold(r: Rewriting, views: ViewSet) -> AggregateQuery:
    """Replace every view atom by the view's body, head variables
    instantiated by the atom's arguments and nondistinguished variables
    freshly renamed per occurrence. Count outputs vanish; a sum, max or
    min output takes the place of the view's aggregation variable. The
    head aggregates directly: count for count rewritings, sum(y) for sum
    rewritings, max/min(y) otherwise."""
    avoid = set(r.head.grouping)
    for va in r.view_atoms:
        avoid |= va.arg_variables()
        if va.output is not None:
            avoid.add(va.output)
    for a in r.base_atoms:
        avoid |= set(a.variables())
    for c in r.comparisons:
        avoid |= set(c.variables())
    expr = r.head.expr
    if isinstance(expr, PlainProduct):
        expr = expr.original
    if isinstance(expr, Extremum):
        avoid.add(expr.var)
    else:
        avoid |= set(expr.factors)
    gen = fresh_variables("N", avoid)

    atoms: list[RelationalAtom] = []
    comps: list[Comparison] = list(dict.fromkeys(r.comparisons))
    for va in r.view_atoms:
        v = views.get(va.view)
        if v is None:
            raise UnknownView(f"unknown view {va.view!r}")
        if len(va.args) != len(v.grouping):
            raise RewritingFormError(
                f"view {v.name} takes {len(v.grouping)} arguments, "
                f"got {len(va.args)}")
        mapping: dict[Variable, Term] = {}
        for x, t in zip(v.grouping, va.args):
            if mapping.setdefault(x, t) != t:
                raise RewritingFormError(
                    f"view {v.name} repeats head variable {x} with "
                    f"different arguments")
        if va.output is not None:
            if v.agg is None or not isinstance(v.agg, Aggregate):
                raise RewritingFormError(
                    f"view {v.name} has no aggregate output")
            if v.agg.var is not None:
                if v.agg.var in mapping:
                    raise RewritingFormError(
                        f"view {v.name} aggregates a distinguished variable")
                mapping[v.agg.var] = va.output
        elif v.agg is not None:
            raise RewritingFormError(
                f"view {v.name} needs an output variable")
        for w in sorted(nondistinguished_vars(v), key=lambda w: w.name):
            if w not in mapping:
                mapping[w] = next(gen)
        sub = Substitution(mapping)
        atoms.extend(sub.atom(x) for x in dict.fromkeys(v.atoms))
        comps.extend(sub.comparison(c) for c in v.comparisons)
    atoms.extend(r.base_atoms)

    if isinstance(expr, Extremum):
        agg = Aggregate("min" if expr.minimum else "max", expr.var)
    elif expr.scalar is None:
        agg = Aggregate("count")
    else:
        agg = Aggregate("sum", expr.scalar)
    return AggregateQuery(r.name, r.head.grouping, agg,
                          tuple(dict.fromkeys(atoms)),
                          tuple(dict.fromkeys(comps)))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _candidate_form_error(q: AggregateQuery, r: Rewriting,
                          views: ViewSet) -> Optional[str]:
    """Check r against the shape a rewriting of q's kind must have; a
    string describes the first violation, None means well-formed."""
    if not r.view_atoms:
        return "no view atoms"
    if len(r.head.grouping) != len(q.grouping):
        return "grouping arity differs from the query"
    kinds: list[str] = []
    for va in r.view_atoms:
        v = views.get(va.view)
        if v is None:
            raise UnknownView(f"unknown view {va.view!r}")
        if len(va.args) != len(v.grouping):
            return (f"view {v.name} takes {len(v.grouping)} arguments, "
                    f"got {len(va.args)}")
        if v.agg is None:
            if va.output is not None:
                return f"plain view {v.name} has no output column"
            kinds.append("plain")
        elif isinstance(v.agg, Aggregate):
            if va.output is None:
                return f"aggregate view {v.name} needs an output variable"
            kinds.append(v.agg.func)
        else:
            return f"view {v.name} with a product head cannot be used"

    outputs = [va.output for va in r.view_atoms if va.output is not None]
    if len(outputs) != len(set(outputs)):
        return "duplicate output variables"
    arg_vars: set[Variable] = set()
    for va in r.view_atoms:
        arg_vars |= va.arg_variables()
    for a in r.base_atoms:
        arg_vars |= set(a.variables())
    if set(outputs) & arg_vars:
        return "an output variable is also used as an argument"
    if set(outputs) & set(r.head.grouping):
        return "an output variable appears in the grouping"
    comp_vars = {w for c in r.comparisons for w in c.variables()}
    if comp_vars - arg_vars:
        return "a comparison mentions a hidden or output variable"
    if not set(r.head.grouping) <= arg_vars:
        return "a grouping variable is not bound in the body"

    expr = r.head.expr
    if isinstance(expr, PlainProduct):
        grouping = set(r.head.grouping)
        visible_args = [t for va in r.view_atoms for t in va.args]
        visible_args += [t for a in r.base_atoms for t in a.args]
        if any(isinstance(t, Variable) and t not in grouping
               for t in visible_args):
            return ("summation omitted but the arguments are not all "
                    "grouping variables or constants")
        expr = expr.original

    by_kind: dict[str, list[ViewAtom]] = {}
    for va, k in zip(r.view_atoms, kinds):
        by_kind.setdefault(k, []).append(va)
    count_outputs = [va.output for va in by_kind.get("count", ())]

    if q.agg.func == "count":
        if not isinstance(expr, SumOfProducts) or expr.scalar is not None:
            return "a count rewriting sums a product of count outputs"
        if set(kinds) != {"count"}:
            return "count rewritings use count views only"
        if sorted(expr.counts, key=term_key) != sorted(count_outputs,
                                                       key=term_key):
            return "the head must multiply exactly the count outputs"
    elif q.agg.func == "sum":
        if not isinstance(expr, SumOfProducts) or expr.scalar is None:
            return "a sum rewriting sums a variable times count outputs"
        if not set(kinds) <= {"count", "sum"}:
            return "sum rewritings use count and sum views only"
        sum_atoms = by_kind.get("sum", [])
        if len(sum_atoms) > 1:
            return "at most one sum view may be used"
        if sorted(expr.counts, key=term_key) != sorted(count_outputs,
                                                       key=term_key):
            return "the head must multiply exactly the count outputs"
        if sum_atoms:
            if expr.scalar != sum_atoms[0].output:
                return "the summed factor must be the sum view's output"
        elif expr.scalar not in arg_vars:
            return "the summed factor must be visible in the body"
    else:
        if not isinstance(expr, Extremum) or expr.minimum != (q.agg.func == "min"):
            return f"a {q.agg.func} rewriting takes the {q.agg.func} of a variable"
        if not set(kinds) <= {"plain", q.agg.func}:
            return (f"{q.agg.func} rewritings use plain views and "
                    f"{q.agg.func} views only")
        agg_atoms = by_kind.get(q.agg.func, [])
        if len(agg_atoms) > 1:
            return f"at most one {q.agg.func} view may be used"
        if agg_atoms:
            if expr.var != agg_atoms[0].output:
                return "the aggregated variable must be the view's output"
        elif expr.var not in arg_vars:
            return "the aggregated variable must be visible in the body"
    return None


def verify_rewriting(q: AggregateQuery, r: Rewriting, views: ViewSet, *,
                     trials: int = 200, seed: int = 0,
                     size: SizeParams = SizeParams()) -> Verdict:
    """Decide whether r rewrites q. Shape violations refute outright; the
    unfolding is then compared with q by a decision procedure where one
    applies, and by randomized search for a counterexample otherwise. A
    survived search is reported as Unknown, never as a proof."""
    if not isinstance(q.agg, Aggregate):
        raise WrongQueryKind("verification needs an elementary aggregate query")
    reason = _candidate_form_error(q, r, views)
    if reason is not None:
        return RefutedByStructure(reason)
    ru = unfold(r, views)
    if q.agg.func in ("count", "sum"):
        if (q.is_relational and ru.is_relational) or \
                (q.is_linear and ru.is_linear):
            iso = isomorphic_queries(ru, q)
            if iso is not None:
                return ProvedEquivalent(iso)
            return RefutedByStructure(
                "the unfolding is not isomorphic to the query")
    else:
        if q.is_relational and ru.is_relational:
            if set_equivalent_relational(ru, q):
                return ProvedEquivalent(None)
            return RefutedByStructure(
                "the unfolding's core is not set-equivalent to the query's")
    res = oracle_equivalent(q, r.to_query(), views, trials=trials, seed=seed,
                            size=size)
    if isinstance(res, Counterexample):
        return RefutedByCounterexample(res.database, res.seed)
    return Unknown(res.trials)


# ---------------------------------------------------------------------------
# Reading rewritings back from parsed rules
# ---------------------------------------------------------------------------


def interpret_rewriting(rule: AggregateQuery, views: ViewSet) -> Rewriting:
    """Classify a parsed rule's atoms into view and base atoms and its head
    into a rewriting head expression. Raises RewritingFormError when the
    rule cannot denote a rewriting over the given views."""
    view_atoms: list[ViewAtom] = []
    base_atoms: list[RelationalAtom] = []
    output_kind: dict[Variable, str] = {}
    for a in rule.atoms:
        v = views.get(a.predicate)
        if v is None:
            base_atoms.append(a)
            continue
        if v.agg is None:
            if a.arity != len(v.grouping):
                raise RewritingFormError(
                    f"view {v.name} takes {len(v.grouping)} arguments")
            view_atoms.append(ViewAtom(v.name, a.args, None))
            continue
        if not isinstance(v.agg, Aggregate):
            raise RewritingFormError(
                f"view {v.name} with a product head cannot be used")
        if a.arity != len(v.grouping) + 1:
            raise RewritingFormError(
                f"view {v.name} takes {len(v.grouping)} arguments plus "
                f"an output")
        out = a.args[-1]
        if not isinstance(out, Variable):
            raise RewritingFormError(
                f"the output of view {v.name} must be a variable")
        view_atoms.append(ViewAtom(v.name, a.args[:-1], out))
        output_kind[out] = v.agg.func

    agg = rule.agg
    if agg is None:
        raise RewritingFormError("a rewriting needs an aggregate head")
    if isinstance(agg, Aggregate):
        if agg.func == "count":
            raise RewritingFormError("count is not a rewriting head form")
        if agg.func in ("max", "min"):
            expr: HeadExpr = Extremum(agg.var, agg.func == "min")
        elif output_kind.get(agg.var) == "count":
            expr = SumOfProducts(None, (agg.var,))
        else:
            expr = SumOfProducts(agg.var, ())
    else:
        counts = tuple(f for f in agg.factors if output_kind.get(f) == "count")
        rest = [f for f in agg.factors if output_kind.get(f) != "count"]
        if len(rest) > 1:
            raise RewritingFormError(
                "at most one factor may be a non-count variable")
        scalar = rest[0] if rest else None
        if agg.summed:
            expr = SumOfProducts(scalar, counts)
        elif scalar is not None and output_kind.get(scalar) in ("max", "min"):
            if len(agg.factors) != 1:
                raise RewritingFormError(
                    "a max or min output cannot be multiplied")
            expr = PlainProduct(agg.factors,
                                Extremum(scalar, output_kind[scalar] == "min"))
        else:
            expr = PlainProduct(agg.factors, SumOfProducts(scalar, counts))

    return Rewriting(
        name=rule.name,
        head=RewritingHead(rule.grouping, expr),
        view_atoms=tuple(view_atoms),
        base_atoms=tuple(base_atoms),
        comparisons=rule.comparisons,
    )


# ---------------------------------------------------------------------------
# JSON emission
# ---------------------------------------------------------------------------


def _substitution_json(s: Substitution) -> dict[str, str]:
    return {v.name: render_term(t)
            for v, t in sorted(s.items(), key=lambda kv: kv[0].name)}


def _expr_json(expr: HeadExpr) -> dict[str, object]:
    omitted = isinstance(expr, PlainProduct)
    if omitted:
        expr = expr.original
    if isinstance(expr, Extremum):
        return {"kind": "min" if expr.minimum else "max",
                "var": expr.var.name, "omitted": omitted}
    return {"kind": "sum_of_products",
            "scalar": expr.scalar.name if expr.scalar else None,
            "counts": [z.name for z in expr.counts],
            "omitted": omitted}


def verdict_json(verdict: Verdict) -> dict[str, object]:
    if isinstance(verdict, ProvedEquivalent):
        witness = (_substitution_json(verdict.witness)
                   if verdict.witness is not None else None)
        return {"status": "proved_equivalent", "witness": witness}
    if isinstance(verdict, RefutedByCounterexample):
        return {"status": "refuted_by_counterexample",
                "database": verdict.database.to_json(),
                "seed": verdict.seed}
    if isinstance(verdict, RefutedByStructure):
        return {"status": "refuted_by_structure", "reason": verdict.reason}
    return {"status": "unknown", "trials": verdict.trials}


def rewriting_json(r: Rewriting, verdict: Optional[Verdict] = None) -> dict:
    return {
        "head": {
            "name": r.name,
            "grouping": [render_term(t) for t in r.head.grouping],
            "expr": _expr_json(r.head.expr),
        },
        "view_atoms": [
            {"view": va.view,
             "args": [render_term(t) for t in va.args],
             "output": va.output.name if va.output is not None else None}
            for va in r.view_atoms
        ],
        "base_atoms": [render_atom(a) for a in r.base_atoms],
        "comparisons": [render_comparison(c) for c in r.comparisons],
        "provenance": [
            {"theta": _substitution_json(m.theta),
             "phi": _substitution_json(m.phi),
             "image": [render_atom(a) for a in m.image]}
            for m in r.provenance
        ],
        "rendered": render(r),
        "verdict": verdict_json(verdict) if verdict is not None else None,
    }
