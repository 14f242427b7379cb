"""Core data model: terms, atoms, comparisons, aggregate queries, view sets.

Queries are immutable values. A conjunctive aggregate query

    q(x1, ..., xk; kappa) :- a1, ..., an, c1, ..., cm

has grouping variables x1..xk, an optional aggregate term kappa, relational
atoms ai and comparisons cj. Bodies are semantically sets of atoms; duplicate
atoms carry no meaning and are removed by normalize().

Aggregate terms are either elementary (count, sum(y), max(y), min(y)) or
products of variables as they appear in rewriting heads (sum(z1*...*zn),
y*z1*...*zn). Input queries and views must use elementary terms; product
terms arise from the rewriting engine and from parsing rewriting files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import ArityMismatch, UnsafeQuery


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Variable:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class RationalConst:
    value: Fraction

    def __repr__(self):
        return format_rational(self.value)


@dataclass(frozen=True)
class StringConst:
    value: str

    def __repr__(self):
        return f"'{self.value}'"


Term = Union[Variable, RationalConst, StringConst]
Constant = Union[RationalConst, StringConst]
Value = Union[Fraction, str]  # database field values


def format_rational(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def term_key(t: Term):
    """Total order over mixed terms, for deterministic sorting."""
    if isinstance(t, Variable):
        return (2, t.name)
    if isinstance(t, RationalConst):
        return (0, t.value)
    return (1, t.value)


def is_constant(t: Term) -> bool:
    return not isinstance(t, Variable)


# ---------------------------------------------------------------------------
# Atoms and comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelationalAtom:
    predicate: str
    args: tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self) -> Iterator[Variable]:
        for t in self.args:
            if isinstance(t, Variable):
                yield t

    def __repr__(self):
        return f"{self.predicate}({', '.join(map(repr, self.args))})"


@dataclass(frozen=True)
class Comparison:
    """lhs op rhs with op in {<, <=}. > and >= are flipped at parse time."""

    lhs: Term
    op: str  # "<" or "<="
    rhs: Term

    def __post_init__(self):
        if self.op not in ("<", "<="):
            raise ValueError(f"comparison operator must be < or <=, got {self.op!r}")

    def variables(self) -> Iterator[Variable]:
        for t in (self.lhs, self.rhs):
            if isinstance(t, Variable):
                yield t

    def __repr__(self):
        return f"{self.lhs!r} {self.op} {self.rhs!r}"


def comparison_key(c: Comparison):
    return (term_key(c.lhs), c.op, term_key(c.rhs))


# ---------------------------------------------------------------------------
# Aggregate terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Aggregate:
    """Elementary aggregate term: count, sum(y), max(y), min(y)."""

    func: str  # "count" | "sum" | "max" | "min"
    var: Optional[Variable] = None

    def __post_init__(self):
        if self.func == "count":
            if self.var is not None:
                raise ValueError("count takes no variable")
        elif self.func in ("sum", "max", "min"):
            if self.var is None:
                raise ValueError(f"{self.func} needs a variable")
        else:
            raise ValueError(f"unknown aggregate {self.func!r}")

    def __repr__(self):
        return "count" if self.func == "count" else f"{self.func}({self.var!r})"


@dataclass(frozen=True)
class ProductTerm:
    """Rewriting-style head expression: a product of variables, optionally
    wrapped in a summation. sum(Y*Z1) has summed=True; a bare Y*Z1 (the
    omitted-summation form) has summed=False."""

    factors: tuple[Variable, ...]
    summed: bool

    def __post_init__(self):
        if not self.factors:
            raise ValueError("empty product")

    def __repr__(self):
        prod = "*".join(v.name for v in self.factors)
        return f"sum({prod})" if self.summed else prod


AggTerm = Union[Aggregate, ProductTerm]


def agg_variables(agg: Optional[AggTerm]) -> Iterator[Variable]:
    if isinstance(agg, Aggregate) and agg.var is not None:
        yield agg.var
    elif isinstance(agg, ProductTerm):
        yield from agg.factors


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AggregateQuery:
    """q(grouping; agg) :- atoms, comparisons.  agg=None is a plain
    conjunctive query."""

    name: str
    grouping: tuple[Variable, ...]
    agg: Optional[AggTerm]
    atoms: tuple[RelationalAtom, ...]
    comparisons: tuple[Comparison, ...] = ()

    # -- structure ----------------------------------------------------------

    def body_variables(self) -> set[Variable]:
        out: set[Variable] = set()
        for a in self.atoms:
            out.update(a.variables())
        for c in self.comparisons:
            out.update(c.variables())
        return out

    def atom_variables(self) -> set[Variable]:
        out: set[Variable] = set()
        for a in self.atoms:
            out.update(a.variables())
        return out

    def variables(self) -> set[Variable]:
        out = self.body_variables()
        out.update(self.grouping)
        out.update(agg_variables(self.agg))
        return out

    def constants(self) -> set[Constant]:
        out: set[Constant] = set()
        for a in self.atoms:
            for t in a.args:
                if is_constant(t):
                    out.add(t)
        for c in self.comparisons:
            for t in (c.lhs, c.rhs):
                if is_constant(t):
                    out.add(t)
        return out

    @property
    def is_relational(self) -> bool:
        return not self.comparisons

    @property
    def is_linear(self) -> bool:
        preds = [a.predicate for a in self.atoms]
        return len(preds) == len(set(preds))

    @property
    def agg_kind(self) -> Optional[str]:
        """"count", "sum", "max", "min", "product", "sum_product" or None."""
        if self.agg is None:
            return None
        if isinstance(self.agg, Aggregate):
            return self.agg.func
        return "sum_product" if self.agg.summed else "product"

    def core(self) -> "AggregateQuery":
        """The non-aggregate core: grouping extended by the aggregation
        variables, aggregate dropped."""
        extra = tuple(v for v in agg_variables(self.agg))
        return replace(self, grouping=self.grouping + extra, agg=None)

    def schema(self) -> dict[str, int]:
        return schema_of_atoms(self.atoms)


def schema_of_atoms(atoms: Iterable[RelationalAtom],
                    into: Optional[dict[str, int]] = None) -> dict[str, int]:
    schema = {} if into is None else into
    for a in atoms:
        seen = schema.get(a.predicate)
        if seen is None:
            schema[a.predicate] = a.arity
        elif seen != a.arity:
            raise ArityMismatch(
                f"{a.predicate} used with arity {seen} and {a.arity}")
    return schema


# ---------------------------------------------------------------------------
# View sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewSet:
    """Named views over base relations. Declaration order is significant: the
    rewriting algorithms try views in this order."""

    views: tuple[AggregateQuery, ...]
    base_schema: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        names = [v.name for v in self.views]
        if len(names) != len(set(names)):
            raise ArityMismatch(f"duplicate view names in {names}")
        schema = dict(self.base_schema)
        for v in self.views:
            schema_of_atoms(v.atoms, schema)
        for v in self.views:
            if v.name in schema:
                raise ArityMismatch(
                    f"view name {v.name} collides with a base predicate")
        object.__setattr__(self, "base_schema", schema)

    def __iter__(self):
        return iter(self.views)

    def __len__(self):
        return len(self.views)

    def get(self, name: str) -> Optional[AggregateQuery]:
        for v in self.views:
            if v.name == name:
                return v
        return None

    def names(self) -> list[str]:
        return [v.name for v in self.views]


# ---------------------------------------------------------------------------
# Substitutions
# ---------------------------------------------------------------------------

class Substitution:
    """A finite mapping from variables to terms, applied capture-free."""

    def __init__(self, mapping: Mapping[Variable, Term] | Iterable[tuple[Variable, Term]] = ()):
        self._map: dict[Variable, Term] = dict(mapping)

    def __getitem__(self, v: Variable) -> Term:
        return self._map[v]

    def __contains__(self, v: Variable) -> bool:
        return v in self._map

    def __iter__(self):
        return iter(self._map)

    def __len__(self):
        return len(self._map)

    def __eq__(self, other):
        return isinstance(other, Substitution) and self._map == other._map

    def __hash__(self):
        return hash(frozenset(self._map.items()))

    def __repr__(self):
        inside = ", ".join(f"{v.name}/{t!r}" for v, t in sorted(
            self._map.items(), key=lambda kv: kv[0].name))
        return "{" + inside + "}"

    def items(self):
        return self._map.items()

    def get(self, v: Variable, default: Term | None = None):
        return self._map.get(v, default)

    def term(self, t: Term) -> Term:
        if isinstance(t, Variable):
            return self._map.get(t, t)
        return t

    def atom(self, a: RelationalAtom) -> RelationalAtom:
        return RelationalAtom(a.predicate, tuple(self.term(t) for t in a.args))

    def comparison(self, c: Comparison) -> Comparison:
        return Comparison(self.term(c.lhs), c.op, self.term(c.rhs))

    def compose(self, later: "Substitution") -> "Substitution":
        """self then later: (self.compose(later)).term(x) == later.term(self.term(x))."""
        out: dict[Variable, Term] = {}
        for v, t in self._map.items():
            out[v] = later.term(t)
        for v, t in later.items():
            out.setdefault(v, t)
        return Substitution(out)


def apply_substitution(q: AggregateQuery, s: Substitution) -> AggregateQuery:
    """Apply s to every term of q. Grouping and aggregation positions must
    remain variables."""
    grouping = []
    for v in q.grouping:
        t = s.term(v)
        if not isinstance(t, Variable):
            raise UnsafeQuery(f"substitution sends grouping variable {v} to {t!r}")
        grouping.append(t)
    agg: Optional[AggTerm] = q.agg
    if isinstance(agg, Aggregate) and agg.var is not None:
        t = s.term(agg.var)
        if not isinstance(t, Variable):
            raise UnsafeQuery(f"substitution sends aggregation variable {agg.var} to {t!r}")
        agg = Aggregate(agg.func, t)
    elif isinstance(agg, ProductTerm):
        mapped = []
        for v in agg.factors:
            t = s.term(v)
            if not isinstance(t, Variable):
                raise UnsafeQuery(f"substitution sends head factor {v} to {t!r}")
            mapped.append(t)
        agg = ProductTerm(tuple(mapped), agg.summed)
    return AggregateQuery(
        name=q.name,
        grouping=tuple(grouping),
        agg=agg,
        atoms=tuple(s.atom(a) for a in q.atoms),
        comparisons=tuple(s.comparison(c) for c in q.comparisons),
    )


def fresh_variables(prefix: str, avoid: set[Variable]) -> Iterator[Variable]:
    """Yield V1, V2, ... with the given prefix, skipping names in avoid."""
    i = 1
    while True:
        v = Variable(f"{prefix}{i}")
        if v not in avoid:
            yield v
        i += 1


# ---------------------------------------------------------------------------
# Normal form
# ---------------------------------------------------------------------------

def _atom_pattern_key(a: RelationalAtom, names: dict[Variable, int]):
    """Sort key for an atom given the variables named so far. Constants order
    first, then already-named variables by canonical index, then unnamed."""
    arg_keys = []
    for t in a.args:
        if not isinstance(t, Variable):
            arg_keys.append((0, term_key(t)))
        elif t in names:
            arg_keys.append((1, names[t]))
        else:
            arg_keys.append((2, 0))
    return (a.predicate, len(a.args), tuple(arg_keys))


def normalize(q: AggregateQuery) -> AggregateQuery:
    """Canonical form: duplicate atoms and comparisons removed, variables
    renamed to V0, V1, ... by a deterministic traversal (grouping variables
    left to right, then body atoms greedily in sorted pattern order), atoms
    and comparisons sorted, product factors sorted, single-variable summed
    products collapsed to elementary sum. Two queries that differ only by a
    renaming of variables and by body order normalize to the same value."""
    atoms = list(dict.fromkeys(q.atoms))
    comparisons = list(dict.fromkeys(q.comparisons))

    names: dict[Variable, int] = {}

    def assign(v: Variable):
        if v not in names:
            names[v] = len(names)

    for v in q.grouping:
        assign(v)
    remaining = list(atoms)
    while remaining:
        chosen = min(remaining, key=lambda a: _atom_pattern_key(a, names))
        remaining.remove(chosen)
        for v in chosen.variables():
            assign(v)
    # Variables that occur only outside atoms (unsafe queries built by hand):
    # name them deterministically too rather than crash.
    for c in sorted(comparisons, key=comparison_key):
        for v in c.variables():
            assign(v)
    for v in agg_variables(q.agg):
        assign(v)

    ren = Substitution({v: Variable(f"V{i}") for v, i in names.items()})

    agg: Optional[AggTerm] = q.agg
    if isinstance(agg, Aggregate) and agg.var is not None:
        agg = Aggregate(agg.func, ren.term(agg.var))  # type: ignore[arg-type]
    elif isinstance(agg, ProductTerm):
        factors = tuple(sorted((ren.term(v) for v in agg.factors), key=term_key))
        if agg.summed and len(factors) == 1:
            agg = Aggregate("sum", factors[0])  # type: ignore[arg-type]
        else:
            agg = ProductTerm(factors, agg.summed)  # type: ignore[arg-type]

    new_atoms = sorted(
        {ren.atom(a) for a in atoms},
        key=lambda a: (a.predicate, len(a.args), tuple(term_key(t) for t in a.args)))
    new_comparisons = sorted({ren.comparison(c) for c in comparisons}, key=comparison_key)
    return AggregateQuery(
        name=q.name,
        grouping=tuple(ren.term(v) for v in q.grouping),  # type: ignore[arg-type]
        agg=agg,
        atoms=tuple(new_atoms),
        comparisons=tuple(new_comparisons),
    )
