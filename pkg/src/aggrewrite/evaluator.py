"""Query evaluation over finite databases.

A database maps predicate names to finite sets of tuples whose entries are
Fraction or str values. Aggregate queries are evaluated under bag-set
semantics: the multiplicity of a row of the core is the number of distinct
variable assignments producing it, and the aggregate ranges over that bag.
Groups with an empty bag do not appear in the result.

Also houses the randomized testing oracle: seeded database generation,
view materialization, and pairwise query comparison over random databases.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .errors import QueryError, UnknownPredicate
from .model import (
    AggregateQuery,
    Comparison,
    ProductTerm,
    RelationalAtom,
    Term,
    Value,
    Variable,
    ViewSet,
    agg_variables,
    format_rational,
)

Row = tuple[Value, ...]

_RATIONAL_RE = re.compile(r"-?\d+(\.\d+)?(/\d+)?")


def _to_value(x: object) -> Value:
    if isinstance(x, bool):
        raise QueryError(f"unsupported database value {x!r}")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    if isinstance(x, str):
        if _RATIONAL_RE.fullmatch(x):
            return Fraction(x)
        return x
    raise QueryError(f"unsupported database value {x!r}")


def _json_value(v: Value) -> object:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return int(v)
        return format_rational(v)
    return v


@dataclass(frozen=True)
class Database:
    """Finite relational instance. Missing predicates are errors, not empty
    relations; declare empty relations explicitly."""

    relations: Mapping[str, frozenset[Row]]

    def relation(self, predicate: str) -> frozenset[Row]:
        try:
            return self.relations[predicate]
        except KeyError:
            raise UnknownPredicate(f"unknown predicate {predicate!r}") from None

    def schema(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for name, rows in self.relations.items():
            arities = {len(r) for r in rows}
            if len(arities) > 1:
                raise QueryError(f"mixed arities in relation {name!r}")
            out[name] = arities.pop() if arities else 0
        return out

    def to_json(self) -> dict[str, list[list[object]]]:
        def row_key(row: Row):
            return tuple((1, v) if isinstance(v, str) else (0, v) for v in row)

        return {
            name: [[_json_value(v) for v in row]
                   for row in sorted(rows, key=row_key)]
            for name, rows in sorted(self.relations.items())
        }


def database_from_json(obj: Mapping[str, object]) -> Database:
    relations: dict[str, frozenset[Row]] = {}
    for name, rows in obj.items():
        if not isinstance(rows, list):
            raise QueryError(f"relation {name!r} must be a list of rows")
        parsed = set()
        for row in rows:
            if not isinstance(row, list):
                raise QueryError(f"row {row!r} in {name!r} must be a list")
            parsed.add(tuple(_to_value(v) for v in row))
        relations[name] = frozenset(parsed)
    return Database(relations)


def load_database(path: str) -> Database:
    with open(path) as f:
        obj = json.load(f, parse_float=Fraction, parse_int=Fraction)
    if not isinstance(obj, dict):
        raise QueryError("database file must hold a JSON object")
    return database_from_json(obj)


def _ground(term: Term, env: Mapping[Variable, Value]) -> Value:
    if isinstance(term, Variable):
        return env[term]
    return term.value


def _compare(lhs: Value, op: str, rhs: Value) -> bool:
    if not isinstance(lhs, Fraction) or not isinstance(rhs, Fraction):
        raise TypeError(f"comparison {lhs!r} {op} {rhs!r} over non-rational values")
    return lhs < rhs if op == "<" else lhs <= rhs


def _assignments(atoms: Sequence[RelationalAtom],
                 comparisons: Sequence[Comparison],
                 db: Database) -> Iterator[dict[Variable, Value]]:
    """Distinct variable assignments satisfying the (set of) atoms and all
    comparisons. Duplicate atoms are collapsed; join order is greedy on the
    number of already-bound variables."""
    atoms = list(dict.fromkeys(atoms))
    tables = {a: sorted(db.relation(a.predicate)) for a in atoms}
    all_comps = list(dict.fromkeys(comparisons))
    atom_vars = {v for a in atoms for v in a.variables()}
    comps = []
    for c in all_comps:
        cvars = set(c.variables())
        if not cvars <= atom_vars:
            raise QueryError(f"comparison {c} over variables not bound by any atom")
        if cvars:
            comps.append(c)
        elif not _compare(_ground(c.lhs, {}), c.op, _ground(c.rhs, {})):
            return

    def check(env: dict[Variable, Value], bound_before: set[Variable]) -> bool:
        for c in comps:
            cvars = set(c.variables())
            if cvars <= env.keys() and not cvars <= bound_before:
                if not _compare(_ground(c.lhs, env), c.op, _ground(c.rhs, env)):
                    return False
        return True

    def extend(env: dict[Variable, Value],
               remaining: list[RelationalAtom]) -> Iterator[dict[Variable, Value]]:
        if not remaining:
            yield dict(env)
            return
        remaining = sorted(
            remaining,
            key=lambda a: (-sum(v in env for v in a.variables()), atoms.index(a)),
        )
        atom, rest = remaining[0], remaining[1:]
        bound_before = set(env)
        for row in tables[atom]:
            if len(row) != atom.arity:
                raise QueryError(
                    f"relation {atom.predicate!r} rows have arity {len(row)}, "
                    f"atom expects {atom.arity}")
            new: dict[Variable, Value] = {}
            ok = True
            for term, value in zip(atom.args, row):
                if isinstance(term, Variable):
                    seen = env.get(term, new.get(term))
                    if seen is None:
                        new[term] = value
                    elif seen != value:
                        ok = False
                        break
                elif term.value != value:
                    ok = False
                    break
            if not ok:
                continue
            env.update(new)
            if check(env, bound_before):
                yield from extend(env, rest)
            for v in new:
                del env[v]

    if not atoms:
        yield {}
        return
    yield from extend({}, atoms)


def eval_core_bag(q: AggregateQuery, db: Database) -> Counter:
    """Bag of (grouping row, aggregation row) pairs with multiplicities."""
    yvars = tuple(agg_variables(q.agg))
    bag: Counter = Counter()
    for env in _assignments(q.atoms, q.comparisons, db):
        xt = tuple(_ground(t, env) for t in q.grouping)
        yt = tuple(env[v] for v in yvars)
        bag[(xt, yt)] += 1
    return bag


def _rational(v: Value, what: str) -> Fraction:
    if not isinstance(v, Fraction):
        raise TypeError(f"{what} ranges over non-rational value {v!r}")
    return v


def eval_aggregate(q: AggregateQuery, db: Database) -> frozenset[Row]:
    """Result of q on db as a set of rows (grouping values, then the
    aggregate value when q has one)."""
    bag = eval_core_bag(q, db)
    if q.agg is None:
        return frozenset(xt for (xt, yt) in bag)
    if isinstance(q.agg, ProductTerm) and not q.agg.summed:
        rows = set()
        for (xt, yt) in bag:
            prod = Fraction(1)
            for v in yt:
                prod *= _rational(v, "product factor")
            rows.add(xt + (prod,))
        return frozenset(rows)

    groups: dict[Row, list[tuple[Row, int]]] = {}
    for (xt, yt), mult in bag.items():
        groups.setdefault(xt, []).append((yt, mult))
    rows = set()
    for xt, members in groups.items():
        if isinstance(q.agg, ProductTerm):
            total = Fraction(0)
            for yt, mult in members:
                prod = Fraction(1)
                for v in yt:
                    prod *= _rational(v, "product factor")
                total += mult * prod
            value: Value = total
        elif q.agg.func == "count":
            value = Fraction(sum(mult for _, mult in members))
        elif q.agg.func == "sum":
            value = sum(
                (_rational(yt[0], "sum") * mult for yt, mult in members),
                Fraction(0))
        elif q.agg.func == "max":
            value = max(_rational(yt[0], "max") for yt, _ in members)
        else:
            value = min(_rational(yt[0], "min") for yt, _ in members)
        rows.add(xt + (value,))
    return frozenset(rows)


def extend_database(db: Database, views: ViewSet) -> Database:
    """Database extended with one relation per view, holding the view's
    materialized result on db."""
    relations = dict(db.relations)
    for v in views.views:
        relations[v.name] = eval_aggregate(v, db)
    return Database(relations)


@dataclass(frozen=True)
class SizeParams:
    max_tuples: int = 4
    pool: tuple[Value, ...] = (
        Fraction(0), Fraction(1), Fraction(2), Fraction(3),
        Fraction(1, 2), Fraction(3, 2),
    )


def random_database(schema: Mapping[str, int],
                    size: SizeParams = SizeParams(),
                    seed: int = 0) -> Database:
    """Deterministic pseudo-random database over the given schema. All
    values are rationals so comparisons are always defined."""
    rng = random.Random(seed)
    relations: dict[str, frozenset[Row]] = {}
    for name in sorted(schema):
        arity = schema[name]
        n = rng.randint(0, size.max_tuples)
        rows = {
            tuple(rng.choice(size.pool) for _ in range(arity))
            for _ in range(n)
        }
        relations[name] = frozenset(rows)
    return Database(relations)


@dataclass(frozen=True)
class NoCounterexampleFound:
    trials: int


@dataclass(frozen=True)
class Counterexample:
    database: Database
    seed: int


OracleResult = Union[NoCounterexampleFound, Counterexample]


def base_schema_of(queries: Iterable[AggregateQuery],
                   views: ViewSet) -> dict[str, int]:
    schema = dict(views.base_schema)
    names = set(views.names())
    for q in queries:
        for a in q.atoms:
            if a.predicate in names:
                continue
            if schema.setdefault(a.predicate, a.arity) != a.arity:
                raise QueryError(
                    f"predicate {a.predicate!r} used with conflicting arities")
    return schema


def oracle_equivalent(q1: AggregateQuery,
                      q2: AggregateQuery,
                      views: ViewSet,
                      trials: int = 200,
                      seed: int = 0,
                      size: SizeParams = SizeParams()) -> OracleResult:
    """Search for a random database separating q1 and q2 over the view-
    extended database. Returns the first counterexample in seed order, or
    NoCounterexampleFound after the given number of trials."""
    schema = base_schema_of((q1, q2), views)
    for i in range(trials):
        d = random_database(schema, size, seed + i)
        ext = extend_database(d, views)
        if eval_aggregate(q1, ext) != eval_aggregate(q2, ext):
            return Counterexample(d, seed + i)
    return NoCounterexampleFound(trials)
