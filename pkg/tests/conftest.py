"""Shared builders and brute-force oracles.

The oracles here are deliberately naive and independent of the package
internals: constraint questions are decided by enumerating assignments
over a perturbation grid, and rewriting existence by enumerating candidate
shapes outright. Tests compare the engines against these.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from aggrewrite.model import (
    Aggregate,
    AggregateQuery,
    Comparison,
    RationalConst,
    RelationalAtom,
    StringConst,
    Substitution,
    Term,
    Variable,
    ViewSet,
    fresh_variables,
)
from aggrewrite.rewriter import (
    ProvedEquivalent,
    Rewriting,
    RewritingHead,
    SumOfProducts,
    ViewAtom,
    verify_rewriting,
)

# ---------------------------------------------------------------------------
# Terse term builders
# ---------------------------------------------------------------------------


def mkterm(x) -> Term:
    if isinstance(x, (Variable, RationalConst, StringConst)):
        return x
    if isinstance(x, str):
        if x[:1].isupper():
            return Variable(x)
        return StringConst(x)
    return RationalConst(Fraction(x))


def atom(pred: str, *args) -> RelationalAtom:
    return RelationalAtom(pred, tuple(mkterm(a) for a in args))


def cmp_(lhs, op: str, rhs) -> Comparison:
    return Comparison(mkterm(lhs), op, mkterm(rhs))


def query(name: str, grouping: Sequence, agg, atoms, comparisons=()) -> AggregateQuery:
    return AggregateQuery(
        name,
        tuple(mkterm(g) for g in grouping),
        agg,
        tuple(atoms),
        tuple(comparisons),
    )


def count_() -> Aggregate:
    return Aggregate("count")


def agg_(func: str, var) -> Aggregate:
    return Aggregate(func, mkterm(var))


# ---------------------------------------------------------------------------
# Constraint oracle: assignment enumeration over a perturbation grid
# ---------------------------------------------------------------------------


def grid_points(comparisons: Iterable[Comparison]) -> list[Fraction]:
    """Value grid that realizes every order configuration of up to four
    variables against the constants mentioned: the constants themselves,
    four points inside each gap, four beyond each end."""
    consts = sorted({t.value for c in comparisons for t in (c.lhs, c.rhs)
                     if isinstance(t, RationalConst)})
    if not consts:
        return [Fraction(k) for k in range(4)]
    points = [consts[0] - k for k in range(4, 0, -1)]
    for a, b in zip(consts, consts[1:]):
        points.append(a)
        gap = (b - a) / 5
        points.extend(a + gap * k for k in range(1, 5))
    points.append(consts[-1])
    points.extend(consts[-1] + k for k in range(1, 5))
    return points


def _holds(c: Comparison, env: dict[Variable, Fraction]) -> bool:
    lhs = env[c.lhs] if isinstance(c.lhs, Variable) else c.lhs.value
    rhs = env[c.rhs] if isinstance(c.rhs, Variable) else c.rhs.value
    return lhs < rhs if c.op == "<" else lhs <= rhs


def satisfying_assignments(comparisons: Sequence[Comparison],
                           variables: Sequence[Variable],
                           grid: Sequence[Fraction]
                           ) -> Iterator[dict[Variable, Fraction]]:
    """All grid assignments of the variables satisfying the comparisons,
    enumerated with pruning as soon as both sides of a comparison are
    bound."""
    order = list(variables)
    position = {v: i for i, v in enumerate(order)}
    by_level: list[list[Comparison]] = [[] for _ in order]
    ground: list[Comparison] = []
    for c in comparisons:
        cvars = list(c.variables())
        if cvars:
            by_level[max(position[v] for v in cvars)].append(c)
        else:
            ground.append(c)
    if not all(_holds(c, {}) for c in ground):
        return

    env: dict[Variable, Fraction] = {}

    def rec(i: int) -> Iterator[dict[Variable, Fraction]]:
        if i == len(order):
            yield dict(env)
            return
        for val in grid:
            env[order[i]] = val
            if all(_holds(c, env) for c in by_level[i]):
                yield from rec(i + 1)
        env.pop(order[i], None)

    yield from rec(0)


def _vocabulary(comparisons: Iterable[Comparison]) -> list[Variable]:
    return sorted({v for c in comparisons for v in c.variables()},
                  key=lambda v: v.name)


def oracle_consistent(comparisons: Sequence[Comparison]) -> bool:
    grid = grid_points(comparisons)
    gen = satisfying_assignments(comparisons, _vocabulary(comparisons), grid)
    return next(gen, None) is not None


def oracle_implies(premise: Sequence[Comparison],
                   conclusion: Sequence[Comparison]) -> bool:
    both = tuple(premise) + tuple(conclusion)
    grid = grid_points(both)
    for env in satisfying_assignments(premise, _vocabulary(both), grid):
        if not all(_holds(c, env) for c in conclusion):
            return False
    return True


def random_comparisons(rng: random.Random, *, max_vars: int = 4,
                       max_comps: int = 5,
                       allow_consts: bool = True) -> tuple[Comparison, ...]:
    names = ("X", "Y", "Z", "W")[:rng.randint(1, max_vars)]
    pool: list[Term] = [Variable(n) for n in names]
    if allow_consts:
        pool += [RationalConst(Fraction(k)) for k in (0, 1, 2, 3)]
    out = []
    for _ in range(rng.randint(0, max_comps)):
        lhs, rhs = rng.choice(pool), rng.choice(pool)
        out.append(Comparison(lhs, rng.choice(("<", "<=")), rhs))
    return tuple(out)


# ---------------------------------------------------------------------------
# Random queries and views
# ---------------------------------------------------------------------------


def random_query(rng: random.Random, *, agg_kind: str = "count",
                 max_atoms: int = 3, n_preds: int = 3, max_arity: int = 2,
                 n_vars: int = 4, linear: bool = False,
                 with_comparisons: bool = False,
                 name: str = "q") -> AggregateQuery:
    variables = [Variable(f"X{i}") for i in range(1, n_vars + 1)]
    preds = [f"p{i}" for i in range(1, n_preds + 1)]
    arities = {p: rng.randint(1, max_arity) for p in preds}
    n_atoms = rng.randint(1, max_atoms)
    if linear:
        chosen = rng.sample(preds, min(n_atoms, len(preds)))
    else:
        chosen = [rng.choice(preds) for _ in range(n_atoms)]
    atoms = tuple(
        RelationalAtom(p, tuple(rng.choice(variables)
                                for _ in range(arities[p])))
        for p in chosen)
    body_vars = sorted({v for a in atoms for v in a.variables()},
                       key=lambda v: v.name)
    grouping = tuple(rng.sample(
        body_vars, rng.randint(0, min(2, len(body_vars)))))
    if agg_kind == "count":
        agg = Aggregate("count")
    else:
        agg = Aggregate(agg_kind, rng.choice(body_vars))
    comparisons: tuple[Comparison, ...] = ()
    if with_comparisons and rng.random() < 0.7:
        picked = []
        for _ in range(rng.randint(1, 2)):
            v = rng.choice(body_vars)
            bound = RationalConst(Fraction(rng.choice((0, 1, 2, 3))))
            if rng.random() < 0.5:
                picked.append(Comparison(v, rng.choice(("<", "<=")), bound))
            else:
                picked.append(Comparison(bound, rng.choice(("<", "<=")), v))
        comparisons = tuple(picked)
    return AggregateQuery(name, grouping, agg, atoms, comparisons)


def subbody_view(rng: random.Random, q: AggregateQuery, name: str,
                 kind: str) -> AggregateQuery:
    """A view built from a random subset of q's atoms, exporting the
    variables that the rest of q still needs, renamed apart from q."""
    distinct = list(dict.fromkeys(q.atoms))
    k = rng.randint(1, len(distinct))
    sub = tuple(rng.sample(distinct, k))
    sub_vars = {v for a in sub for v in a.variables()}
    rest = [a for a in distinct if a not in set(sub)]
    needed = {v for a in rest for v in a.variables()} | set(q.grouping)
    if isinstance(q.agg, Aggregate) and q.agg.var is not None:
        needed.add(q.agg.var)
    needed |= {v for c in q.comparisons for v in c.variables()}
    grouping = sorted(sub_vars & needed, key=lambda v: v.name)
    extra = sorted(sub_vars - set(grouping), key=lambda v: v.name)
    if extra and rng.random() < 0.3:
        grouping.append(rng.choice(extra))
    if kind == "count":
        agg = Aggregate("count")
    else:
        candidates = sorted(sub_vars - set(grouping), key=lambda v: v.name)
        if not candidates:
            agg = Aggregate("count")
        else:
            agg = Aggregate(kind, rng.choice(candidates))
    comparisons = tuple(c for c in q.comparisons
                        if set(c.variables()) <= sub_vars)
    rename = Substitution({v: Variable(f"{v.name}P") for v in sub_vars})
    return AggregateQuery(
        name,
        tuple(rename.term(v) for v in grouping),
        (Aggregate(agg.func, rename.term(agg.var))
         if agg.var is not None else agg),
        tuple(rename.atom(a) for a in sub),
        tuple(rename.comparison(c) for c in comparisons),
    )


def random_views(rng: random.Random, q: AggregateQuery, *,
                 n_views: int = 2, kinds: Sequence[str] = ("count",)
                 ) -> ViewSet:
    views = []
    for i in range(rng.randint(1, n_views)):
        views.append(subbody_view(rng, q, f"v{i + 1}", rng.choice(kinds)))
    return ViewSet(tuple(views))


# ---------------------------------------------------------------------------
# Brute-force rewriting existence for count queries
# ---------------------------------------------------------------------------


def brute_force_count_rewriting(q: AggregateQuery, views: ViewSet,
                                max_atoms: int = 3) -> Optional[Rewriting]:
    """First verified full count rewriting found by enumerating every
    candidate with up to max_atoms view atoms whose arguments are terms of
    q. Argument tuples outside q's terms are renamings the verifier's
    isomorphism check absorbs, so this is exhaustive for existence."""
    terms = sorted(q.variables(), key=lambda v: v.name) + sorted(
        q.constants(), key=lambda c: str(c.value))
    alternatives = []
    for v in views:
        if not (isinstance(v.agg, Aggregate) and v.agg.func == "count"):
            continue
        for args in itertools.product(terms, repeat=len(v.grouping)):
            alternatives.append((v.name, args))
    for k in range(1, max_atoms + 1):
        for combo in itertools.combinations_with_replacement(alternatives, k):
            zgen = fresh_variables("Z", q.variables())
            view_atoms = tuple(ViewAtom(name, args, next(zgen))
                               for name, args in combo)
            r = Rewriting(
                name="r",
                head=RewritingHead(
                    q.grouping,
                    SumOfProducts(None,
                                  tuple(va.output for va in view_atoms))),
                view_atoms=view_atoms,
            )
            verdict = verify_rewriting(q, r, views)
            if isinstance(verdict, ProvedEquivalent):
                return r
    return None
