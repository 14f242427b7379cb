"""Translation between a small SQL fragment and the Datalog notation.

The fragment covers nonnested SELECT/FROM/WHERE/GROUP BY queries with at
most one aggregate item (COUNT(*), SUM, MAX or MIN) and conjunctive WHERE
clauses of equalities and comparisons. Attribute names are positional via
a schema mapping each relation to its attribute list, so an SQL attribute
corresponds to a fixed argument position of the Datalog predicate.

SQL to Datalog: one atom per FROM occurrence; equality conjuncts are
realized by placing identical variables or constants into argument
positions; remaining conjuncts become comparisons; SELECT attributes
become grouping variables and the aggregate item the head aggregate.
Datalog to SQL runs the same construction backwards, aliasing the i-th
body atom as t<i>.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .errors import (
    ArityMismatch,
    GroupByMismatch,
    InconsistentGround,
    QueryError,
    UnknownAttribute,
    UnknownPredicate,
    UnsupportedSql,
)
from .model import (
    Aggregate,
    AggregateQuery,
    Comparison,
    Constant,
    ProductTerm,
    RationalConst,
    RelationalAtom,
    StringConst,
    Term,
    Variable,
    format_rational,
)

# ---------------------------------------------------------------------------
# Surface structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttrRef:
    qualifier: Optional[str]
    attr: str

    def __repr__(self):
        return f"{self.qualifier}.{self.attr}" if self.qualifier else self.attr


@dataclass(frozen=True)
class SqlAggregate:
    func: str  # "count" | "sum" | "max" | "min"
    arg: Optional[AttrRef]  # None exactly for COUNT(*)


SelectItem = Union[AttrRef, SqlAggregate]
Operand = Union[AttrRef, Constant]


@dataclass(frozen=True)
class SqlCondition:
    lhs: Operand
    op: str  # "=", "<", "<=", ">", ">="
    rhs: Operand


@dataclass(frozen=True)
class SqlQuery:
    select_items: tuple[SelectItem, ...]
    from_items: tuple[tuple[str, str], ...]  # (relation, alias)
    where_conjuncts: tuple[SqlCondition, ...] = ()
    group_by: tuple[AttrRef, ...] = ()


# ---------------------------------------------------------------------------
# Schema files
# ---------------------------------------------------------------------------


def schema_from_json(obj: object) -> dict[str, list[str]]:
    if not isinstance(obj, dict):
        raise QueryError("schema file must hold a JSON object")
    schema: dict[str, list[str]] = {}
    for rel, attrs in obj.items():
        if not (isinstance(attrs, list)
                and all(isinstance(a, str) for a in attrs)):
            raise QueryError(f"attributes of {rel!r} must be a list of names")
        if len(set(attrs)) != len(attrs):
            raise QueryError(f"duplicate attribute names in {rel!r}")
        schema[rel] = list(attrs)
    return schema


def load_schema(path: str) -> dict[str, list[str]]:
    with open(path) as f:
        return schema_from_json(json.load(f))


# ---------------------------------------------------------------------------
# SQL surface parsing
# ---------------------------------------------------------------------------

_SQL_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(\.\d+)?(/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*')
  | (?P<op><=|>=|<|>|=|\(|\)|,|\.|\*|;)
""", re.VERBOSE)

_KEYWORDS = {"SELECT", "FROM", "WHERE", "GROUP", "BY", "AND", "AS",
             "COUNT", "SUM", "MAX", "MIN"}


def _sql_tokens(text: str) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _SQL_TOKEN_RE.match(text, pos)
        if m is None:
            raise UnsupportedSql(f"cannot read SQL at {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        out.append((m.lastgroup, m.group()))
    return out


class _SqlParser:
    def __init__(self, text: str):
        self.tokens = _sql_tokens(text)
        self.i = 0

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise UnsupportedSql("unexpected end of SQL input")
        self.i += 1
        return tok

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return (tok is not None and tok[0] == "ident"
                and tok[1].upper() in words)

    def expect_keyword(self, word: str):
        if not self.at_keyword(word):
            raise UnsupportedSql(f"expected {word}, got {self.peek()!r}")
        self.next()

    def expect_op(self, op: str):
        tok = self.next()
        if tok != ("op", op):
            raise UnsupportedSql(f"expected {op!r}, got {tok!r}")

    def ident(self) -> str:
        tok = self.next()
        if tok[0] != "ident" or tok[1].upper() in _KEYWORDS:
            raise UnsupportedSql(f"expected a name, got {tok!r}")
        return tok[1]

    def attr_ref(self) -> AttrRef:
        first = self.ident()
        if self.peek() == ("op", "."):
            self.next()
            return AttrRef(first, self.ident())
        return AttrRef(None, first)

    def operand(self) -> Operand:
        tok = self.peek()
        if tok is None:
            raise UnsupportedSql("unexpected end of SQL input")
        if tok[0] == "number":
            self.next()
            return RationalConst(Fraction(tok[1]))
        if tok[0] == "string":
            self.next()
            return StringConst(tok[1][1:-1])
        return self.attr_ref()

    def select_item(self) -> SelectItem:
        if self.at_keyword("COUNT"):
            self.next()
            self.expect_op("(")
            self.expect_op("*")
            self.expect_op(")")
            return SqlAggregate("count", None)
        if self.at_keyword("SUM", "MAX", "MIN"):
            func = self.next()[1].lower()
            self.expect_op("(")
            ref = self.attr_ref()
            self.expect_op(")")
            return SqlAggregate(func, ref)
        return self.attr_ref()

    def from_item(self) -> tuple[str, str]:
        rel = self.ident()
        if self.at_keyword("AS"):
            self.next()
            return rel, self.ident()
        tok = self.peek()
        if tok is not None and tok[0] == "ident" \
                and tok[1].upper() not in _KEYWORDS:
            return rel, self.ident()
        return rel, rel

    def condition(self) -> SqlCondition:
        lhs = self.operand()
        tok = self.next()
        if tok[0] != "op" or tok[1] not in ("=", "<", "<=", ">", ">="):
            raise UnsupportedSql(f"expected a comparison operator, got {tok!r}")
        rhs = self.operand()
        return SqlCondition(lhs, tok[1], rhs)

    def query(self) -> SqlQuery:
        self.expect_keyword("SELECT")
        items = [self.select_item()]
        while self.peek() == ("op", ","):
            self.next()
            items.append(self.select_item())
        self.expect_keyword("FROM")
        from_items = [self.from_item()]
        while self.peek() == ("op", ","):
            self.next()
            from_items.append(self.from_item())
        where: list[SqlCondition] = []
        if self.at_keyword("WHERE"):
            self.next()
            where.append(self.condition())
            while self.at_keyword("AND"):
                self.next()
                where.append(self.condition())
        group_by: list[AttrRef] = []
        if self.at_keyword("GROUP"):
            self.next()
            self.expect_keyword("BY")
            group_by.append(self.attr_ref())
            while self.peek() == ("op", ","):
                self.next()
                group_by.append(self.attr_ref())
        if self.peek() == ("op", ";"):
            self.next()
        if self.peek() is not None:
            raise UnsupportedSql(f"unexpected {self.peek()!r} after the query")
        return SqlQuery(tuple(items), tuple(from_items), tuple(where),
                        tuple(group_by))


def parse_sql(text: str) -> SqlQuery:
    return _SqlParser(text).query()


# ---------------------------------------------------------------------------
# SQL -> Datalog
# ---------------------------------------------------------------------------


class _Positions:
    """Argument positions of all FROM occurrences, with union-find over
    equality conjuncts and constant pinning."""

    def __init__(self, from_items: tuple[tuple[str, str], ...],
                 schema: dict[str, list[str]]):
        aliases = [alias for _, alias in from_items]
        if len(set(aliases)) != len(aliases):
            raise UnsupportedSql(f"duplicate table alias in {aliases}")
        self.occurrences: list[tuple[str, str, list[str]]] = []
        self.names: dict[tuple[int, int], Variable] = {}
        used: set[str] = set()
        for i, (rel, alias) in enumerate(from_items):
            attrs = schema.get(rel)
            if attrs is None:
                raise UnknownPredicate(f"unknown relation {rel!r}")
            self.occurrences.append((rel, alias, attrs))
            for j, attr in enumerate(attrs):
                base = attr.upper()
                name, n = base, 1
                while name in used:
                    n += 1
                    name = f"{base}_{n}"
                used.add(name)
                self.names[(i, j)] = Variable(name)
        self.parent: dict[tuple[int, int], tuple[int, int]] = {
            p: p for p in self.names}
        self.pinned: dict[tuple[int, int], Constant] = {}

    def resolve(self, ref: AttrRef) -> tuple[int, int]:
        hits = []
        for i, (rel, alias, attrs) in enumerate(self.occurrences):
            if ref.qualifier is not None and ref.qualifier != alias:
                continue
            if ref.attr in attrs:
                hits.append((i, attrs.index(ref.attr)))
        if not hits:
            raise UnknownAttribute(f"unknown attribute {ref!r}")
        if len(hits) > 1:
            raise UnknownAttribute(f"ambiguous attribute {ref!r}")
        return hits[0]

    def find(self, p: tuple[int, int]) -> tuple[int, int]:
        while self.parent[p] != p:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        return p

    def union(self, a: tuple[int, int], b: tuple[int, int]):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        pin = self.pinned.pop(rb, None)
        if pin is not None:
            self.pin(ra, pin)

    def pin(self, p: tuple[int, int], c: Constant):
        r = self.find(p)
        seen = self.pinned.setdefault(r, c)
        if seen != c:
            raise InconsistentGround(
                f"attribute equated with both {seen!r} and {c!r}")

    def term(self, p: tuple[int, int]) -> Term:
        r = self.find(p)
        return self.pinned.get(r, self.names[r])


def _flip(lhs: Term, op: str, rhs: Term) -> Comparison:
    if op in (">", ">="):
        lhs, rhs = rhs, lhs
        op = {">": "<", ">=": "<="}[op]
    return Comparison(lhs, op, rhs)


def sql_to_datalog(sql: Union[SqlQuery, str],
                   schema: dict[str, list[str]],
                   name: str = "q") -> AggregateQuery:
    """Translate an SQL query (text or parsed) into an aggregate query
    over the positional schema."""
    if isinstance(sql, str):
        sql = parse_sql(sql)
    pos = _Positions(sql.from_items, schema)

    comparisons: list[Comparison] = []
    for cond in sql.where_conjuncts:
        lhs, op, rhs = cond.lhs, cond.op, cond.rhs
        if op == "=":
            if isinstance(lhs, AttrRef) and isinstance(rhs, AttrRef):
                pos.union(pos.resolve(lhs), pos.resolve(rhs))
            elif isinstance(lhs, AttrRef):
                pos.pin(pos.resolve(lhs), rhs)
            elif isinstance(rhs, AttrRef):
                pos.pin(pos.resolve(rhs), lhs)
            elif lhs != rhs:
                raise InconsistentGround(f"{lhs!r} = {rhs!r} never holds")
        else:
            comparisons.append((lhs, op, rhs))  # resolved below, after pins

    resolved: list[Comparison] = []
    for lhs, op, rhs in comparisons:
        terms = []
        for operand in (lhs, rhs):
            t = pos.term(pos.resolve(operand)) \
                if isinstance(operand, AttrRef) else operand
            if isinstance(t, StringConst):
                raise UnsupportedSql(
                    f"comparison over the string {t.value!r}")
            terms.append(t)
        c = _flip(terms[0], op, terms[1])
        if isinstance(c.lhs, RationalConst) and isinstance(c.rhs, RationalConst):
            holds = (c.lhs.value < c.rhs.value if c.op == "<"
                     else c.lhs.value <= c.rhs.value)
            if not holds:
                raise InconsistentGround(f"{c!r} never holds")
            continue
        resolved.append(c)

    agg_items = [i for i in sql.select_items if isinstance(i, SqlAggregate)]
    plain_items = [i for i in sql.select_items if isinstance(i, AttrRef)]
    if len(agg_items) > 1:
        raise UnsupportedSql("more than one aggregate item in SELECT")

    grouping: list[Variable] = []
    plain_classes = []
    for ref in plain_items:
        p = pos.resolve(ref)
        plain_classes.append(pos.find(p))
        t = pos.term(p)
        if not isinstance(t, Variable):
            raise UnsupportedSql(
                f"selected attribute {ref!r} is pinned to a constant")
        grouping.append(t)

    group_classes = [pos.find(pos.resolve(ref)) for ref in sql.group_by]
    if agg_items:
        # An absent GROUP BY abbreviates grouping by the plain SELECT
        # attributes; when present it must name exactly those attributes.
        if sql.group_by and set(group_classes) != set(plain_classes):
            raise GroupByMismatch(
                "GROUP BY attributes must be exactly the non-aggregate "
                "SELECT attributes")
    elif sql.group_by:
        raise GroupByMismatch("GROUP BY without an aggregate item")

    agg: Optional[Aggregate] = None
    if agg_items:
        item = agg_items[0]
        if item.func == "count":
            agg = Aggregate("count")
        else:
            t = pos.term(pos.resolve(item.arg))
            if not isinstance(t, Variable):
                raise UnsupportedSql(
                    f"aggregated attribute {item.arg!r} is pinned to a "
                    f"constant")
            agg = Aggregate(item.func, t)

    atoms = tuple(
        RelationalAtom(rel, tuple(pos.term((i, j)) for j in range(len(attrs))))
        for i, (rel, _, attrs) in enumerate(pos.occurrences))
    return AggregateQuery(name, tuple(grouping), agg, atoms,
                          tuple(dict.fromkeys(resolved)))


# ---------------------------------------------------------------------------
# Datalog -> SQL
# ---------------------------------------------------------------------------


def datalog_to_sql(q: AggregateQuery,
                   schema: dict[str, list[str]]) -> SqlQuery:
    """Translate an aggregate query into the SQL fragment, aliasing the
    i-th body atom as t<i>. Repeated variables and constants in argument
    positions become equality conjuncts."""
    if isinstance(q.agg, ProductTerm):
        raise UnsupportedSql("product heads have no SQL form")
    if not q.grouping and q.agg is None:
        raise UnsupportedSql("a query with an empty head has no SQL form")
    from_items = []
    first_ref: dict[Variable, AttrRef] = {}
    conjuncts: list[SqlCondition] = []
    for i, a in enumerate(q.atoms):
        attrs = schema.get(a.predicate)
        if attrs is None:
            raise UnknownPredicate(f"unknown relation {a.predicate!r}")
        if len(attrs) != a.arity:
            raise ArityMismatch(
                f"{a.predicate} has {len(attrs)} attributes, used with "
                f"arity {a.arity}")
        alias = f"t{i + 1}"
        from_items.append((a.predicate, alias))
        for j, t in enumerate(a.args):
            ref = AttrRef(alias, attrs[j])
            if isinstance(t, Variable):
                if t in first_ref:
                    conjuncts.append(SqlCondition(first_ref[t], "=", ref))
                else:
                    first_ref[t] = ref
            else:
                conjuncts.append(SqlCondition(ref, "=", t))

    def operand(t: Term) -> Operand:
        if isinstance(t, Variable):
            ref = first_ref.get(t)
            if ref is None:
                raise UnsupportedSql(f"variable {t!r} is not bound by an atom")
            return ref
        return t

    for c in q.comparisons:
        conjuncts.append(SqlCondition(operand(c.lhs), c.op, operand(c.rhs)))

    select: list[SelectItem] = [operand(v) for v in q.grouping]
    group_by: tuple[AttrRef, ...] = ()
    if q.agg is not None:
        if q.agg.func == "count":
            select.append(SqlAggregate("count", None))
        else:
            arg = operand(q.agg.var)
            assert isinstance(arg, AttrRef)
            select.append(SqlAggregate(q.agg.func, arg))
        group_by = tuple(dict.fromkeys(
            ref for ref in select[:-1] if isinstance(ref, AttrRef)))
    return SqlQuery(tuple(select), tuple(from_items), tuple(conjuncts),
                    group_by)


# ---------------------------------------------------------------------------
# SQL rendering
# ---------------------------------------------------------------------------


def _render_operand(x: Operand) -> str:
    if isinstance(x, AttrRef):
        return f"{x.qualifier}.{x.attr}" if x.qualifier else x.attr
    if isinstance(x, RationalConst):
        return format_rational(x.value)
    return f"'{x.value}'"


def _render_item(item: SelectItem) -> str:
    if isinstance(item, SqlAggregate):
        if item.func == "count":
            return "COUNT(*)"
        return f"{item.func.upper()}({_render_operand(item.arg)})"
    return _render_operand(item)


def render_sql(sql: SqlQuery) -> str:
    parts = ["SELECT " + ", ".join(_render_item(i) for i in sql.select_items)]
    parts.append("FROM " + ", ".join(
        rel if alias == rel else f"{rel} {alias}"
        for rel, alias in sql.from_items))
    if sql.where_conjuncts:
        parts.append("WHERE " + " AND ".join(
            f"{_render_operand(c.lhs)} {c.op} {_render_operand(c.rhs)}"
            for c in sql.where_conjuncts))
    if sql.group_by:
        parts.append("GROUP BY " + ", ".join(
            _render_operand(r) for r in sql.group_by))
    return " ".join(parts)
