"""Datalog surface syntax: tokenizer, parser, renderer.

Grammar (statements end with '.'; '%' starts a line comment):

    program    := (stmt '.')*
    stmt       := ['view'] rule
    rule       := head ':-' body | head
    head       := IDENT '(' termlist [';' headagg] ')'
    headagg    := 'count' | ('sum'|'max'|'min') '(' VAR ')'
                | 'sum' '(' prod ')' | prod
    prod       := VAR ('*' VAR)*
    body       := atom (',' atom)*
    atom       := IDENT '(' termlist ')' | term CMP term
    CMP        := '<' | '<=' | '>' | '>=' | '='
    term       := VAR | RATIONAL | "'" CHARS "'" | LIDENT

Variables are uppercase-initial identifiers; lowercase identifiers and quoted
strings are string constants; rationals are integers, decimals, or a/b.

Parsing does more than build syntax: equalities are eliminated (variable
renaming or constant substitution), > and >= are flipped to < and <=, ground
comparisons are evaluated away (false ones raise InconsistentGround),
comparisons on string constants are type errors, and safety is checked (every
grouping, aggregation, and comparison variable must occur in a body atom).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import InconsistentGround, ParseError, UnsafeQuery
from .model import (
    Aggregate,
    AggregateQuery,
    AggTerm,
    Comparison,
    ProductTerm,
    RationalConst,
    RelationalAtom,
    StringConst,
    Substitution,
    Term,
    Variable,
    format_rational,
    is_constant,
    schema_of_atoms,
)

# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+|%[^\n]*)
    | (?P<number>-?\d+(?:\.\d+)?(?:/\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<string>'[^'\n]*')
    | (?P<op>:-|<=|>=|<|>|=|\(|\)|,|;|\.|\*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "ident" | "string" | "op" | "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        value = m.group()
        if kind != "ws":
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    last_line = line
    last_col = len(text) - line_start + 1
    tokens.append(Token("eof", "", last_line, last_col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_FLIP = {">": "<", ">=": "<="}


@dataclass(frozen=True)
class Program:
    """Parsed program: statements in order, each tagged 'query' or 'view'."""

    statements: tuple[tuple[str, AggregateQuery], ...]
    schema: dict[str, int]

    def queries(self) -> list[AggregateQuery]:
        return [q for tag, q in self.statements if tag == "query"]

    def views(self) -> list[AggregateQuery]:
        return [q for tag, q in self.statements if tag == "view"]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, got {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return tok

    def fail(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- terms ---------------------------------------------------------------

    def parse_term(self) -> Term:
        tok = self.next()
        if tok.kind == "number":
            return RationalConst(Fraction(tok.text))
        if tok.kind == "string":
            return StringConst(tok.text[1:-1])
        if tok.kind == "ident":
            if tok.text[0].isupper():
                return Variable(tok.text)
            return StringConst(tok.text)
        self.fail(f"expected a term, got {tok.text or 'end of input'!r}", tok)
        raise AssertionError  # unreachable

    def parse_variable(self) -> Variable:
        tok = self.peek()
        t = self.parse_term()
        if not isinstance(t, Variable):
            self.fail(f"expected a variable, got {tok.text!r}", tok)
        return t  # type: ignore[return-value]

    # -- heads ---------------------------------------------------------------

    def parse_headagg(self) -> AggTerm:
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "count":
            self.next()
            return Aggregate("count")
        if tok.kind == "ident" and tok.text in ("sum", "max", "min") \
                and self.peek(1).text == "(":
            func = self.next().text
            self.expect("(")
            first = self.parse_variable()
            factors = [first]
            while self.peek().text == "*":
                self.next()
                factors.append(self.parse_variable())
            self.expect(")")
            if len(factors) > 1:
                if func != "sum":
                    self.fail(f"{func} takes a single variable", tok)
                return ProductTerm(tuple(factors), summed=True)
            return Aggregate(func, first)
        # bare product
        first = self.parse_variable()
        factors = [first]
        while self.peek().text == "*":
            self.next()
            factors.append(self.parse_variable())
        return ProductTerm(tuple(factors), summed=False)

    def parse_head(self) -> tuple[str, list[Term], Optional[AggTerm], Token]:
        tok = self.next()
        if tok.kind != "ident":
            self.fail("expected a predicate name", tok)
        name = tok.text
        self.expect("(")
        terms: list[Term] = []
        agg: Optional[AggTerm] = None
        if self.peek().text == ";":
            self.next()
            agg = self.parse_headagg()
        elif self.peek().text != ")":
            start = self.pos
            fallback = False
            try:
                terms.append(self.parse_term())
                while self.peek().text == ",":
                    self.next()
                    terms.append(self.parse_term())
            except ParseError:
                fallback = True
            if not fallback and self.peek().text not in (";", ")"):
                # e.g. r(A*CNT) or r(sum(Z1*Z2)): the parenthesis content is a
                # head aggregate written without a leading ';'.
                fallback = True
            if fallback:
                self.pos = start
                terms = []
                agg = self.parse_headagg()
            elif self.peek().text == ";":
                self.next()
                agg = self.parse_headagg()
        self.expect(")")
        return name, terms, agg, tok

    # -- bodies ---------------------------------------------------------------

    def parse_body(self) -> tuple[list[RelationalAtom], list[tuple[Term, str, Term, Token]]]:
        atoms: list[RelationalAtom] = []
        raw_comparisons: list[tuple[Term, str, Term, Token]] = []
        while True:
            tok = self.peek()
            if tok.kind == "ident" and self.peek(1).text == "(" \
                    and not (tok.text[0].isupper()):
                self.next()
                self.expect("(")
                args: list[Term] = []
                if self.peek().text != ")":
                    args.append(self.parse_term())
                    while self.peek().text == ",":
                        self.next()
                        args.append(self.parse_term())
                self.expect(")")
                atoms.append(RelationalAtom(tok.text, tuple(args)))
            else:
                lhs = self.parse_term()
                op_tok = self.next()
                if op_tok.text not in ("<", "<=", ">", ">=", "="):
                    self.fail(f"expected a comparison operator, got {op_tok.text!r}",
                              op_tok)
                rhs = self.parse_term()
                op = op_tok.text
                if op in _FLIP:
                    lhs, rhs = rhs, lhs
                    op = _FLIP[op]
                raw_comparisons.append((lhs, op, rhs, op_tok))
            if self.peek().text == ",":
                self.next()
                continue
            return atoms, raw_comparisons

    # -- statements ------------------------------------------------------------

    def parse_statement(self) -> tuple[str, AggregateQuery]:
        tag = "query"
        if self.peek().kind == "ident" and self.peek().text == "view" \
                and self.peek(1).kind == "ident":
            self.next()
            tag = "view"
        name, head_terms, agg, head_tok = self.parse_head()
        atoms: list[RelationalAtom] = []
        raw_comparisons: list[tuple[Term, str, Term, Token]] = []
        if self.peek().text == ":-":
            self.next()
            atoms, raw_comparisons = self.parse_body()
        self.expect(".")
        q = _assemble(name, head_terms, agg, atoms, raw_comparisons, head_tok)
        return tag, q

    def parse_program(self) -> Program:
        statements = []
        while self.peek().kind != "eof":
            statements.append(self.parse_statement())
        schema: dict[str, int] = {}
        for _, q in statements:
            schema_of_atoms(q.atoms, schema)
        return Program(tuple(statements), schema)


def _assemble(name, head_terms, agg, atoms, raw_comparisons, head_tok) -> AggregateQuery:
    """Equality elimination, flip-normalized comparisons, ground evaluation,
    type checks, safety checks."""
    # Union-find over variables; classes may be pinned to a constant.
    parent: dict[Variable, Variable] = {}
    pinned: dict[Variable, Term] = {}

    # First-appearance order decides class representatives, so heads keep
    # their variable names under equality elimination.
    order: dict[Variable, int] = {}

    def note(t):
        if isinstance(t, Variable) and t not in order:
            order[t] = len(order)

    for t in head_terms:
        note(t)
    if isinstance(agg, Aggregate):
        note(agg.var)
    elif isinstance(agg, ProductTerm):
        for v in agg.factors:
            note(v)
    for a in atoms:
        for t in a.args:
            note(t)
    for lhs, _, rhs, _ in raw_comparisons:
        note(lhs)
        note(rhs)

    def find(v: Variable) -> Variable:
        while parent.get(v, v) != v:
            parent[v] = parent.get(parent[v], parent[v])
            v = parent[v]
        return v

    comparisons: list[tuple[Term, str, Term, Token]] = []
    for lhs, op, rhs, tok in raw_comparisons:
        if op != "=":
            comparisons.append((lhs, op, rhs, tok))
            continue
        if isinstance(lhs, Variable) and isinstance(rhs, Variable):
            a, b = find(lhs), find(rhs)
            if a != b:
                if order[b] < order[a]:
                    a, b = b, a
                parent[b] = a
                if b in pinned:
                    c = pinned.pop(b)
                    if a in pinned and pinned[a] != c:
                        raise InconsistentGround(
                            f"{tok.line}:{tok.col}: {lhs} = {rhs} conflicts with "
                            f"bindings {pinned[a]!r} and {c!r}")
                    pinned[a] = c
        elif isinstance(lhs, Variable) or isinstance(rhs, Variable):
            v, c = (lhs, rhs) if isinstance(lhs, Variable) else (rhs, lhs)
            root = find(v)  # type: ignore[arg-type]
            if root in pinned and pinned[root] != c:
                raise InconsistentGround(
                    f"{tok.line}:{tok.col}: {v} equated with both "
                    f"{pinned[root]!r} and {c!r}")
            pinned[root] = c
        else:
            if lhs != rhs:
                raise InconsistentGround(
                    f"{tok.line}:{tok.col}: {lhs!r} = {rhs!r} is false")

    def resolve(t: Term) -> Term:
        if isinstance(t, Variable):
            root = find(t)
            return pinned.get(root, root)
        return t

    sub_atoms = [RelationalAtom(a.predicate, tuple(resolve(t) for t in a.args))
                 for a in atoms]

    final_comparisons: list[Comparison] = []
    for lhs, op, rhs, tok in comparisons:
        lhs, rhs = resolve(lhs), resolve(rhs)
        for side in (lhs, rhs):
            if isinstance(side, StringConst):
                raise ParseError(
                    f"string constant {side!r} is not comparable under {op}",
                    tok.line, tok.col)
        if is_constant(lhs) and is_constant(rhs):
            holds = lhs.value < rhs.value if op == "<" else lhs.value <= rhs.value  # type: ignore[union-attr]
            if not holds:
                raise InconsistentGround(
                    f"{tok.line}:{tok.col}: {lhs!r} {op} {rhs!r} is false")
            continue
        final_comparisons.append(Comparison(lhs, op, rhs))

    grouping: list[Variable] = []
    for t in head_terms:
        t = resolve(t)
        if not isinstance(t, Variable):
            raise UnsafeQuery(
                f"{head_tok.line}:{head_tok.col}: grouping position holds "
                f"constant {t!r}; grouping positions must be body-bound variables")
        grouping.append(t)

    if isinstance(agg, Aggregate) and agg.var is not None:
        t = resolve(agg.var)
        if not isinstance(t, Variable):
            raise UnsafeQuery(
                f"aggregation variable {agg.var} equated with constant {t!r}")
        agg = Aggregate(agg.func, t)
    elif isinstance(agg, ProductTerm):
        mapped = []
        for v in agg.factors:
            t = resolve(v)
            if not isinstance(t, Variable):
                raise UnsafeQuery(f"head factor {v} equated with constant {t!r}")
            mapped.append(t)
        agg = ProductTerm(tuple(mapped), agg.summed)

    q = AggregateQuery(name, tuple(grouping), agg, tuple(sub_atoms),
                       tuple(final_comparisons))

    bound = q.atom_variables()
    for v in q.grouping:
        if v not in bound:
            raise UnsafeQuery(f"grouping variable {v} of {name} not bound by a body atom")
    for v in (q.agg.factors if isinstance(q.agg, ProductTerm)
              else ([q.agg.var] if isinstance(q.agg, Aggregate) and q.agg.var else [])):
        if v not in bound:
            raise UnsafeQuery(f"aggregation variable {v} of {name} not bound by a body atom")
    for c in q.comparisons:
        for v in c.variables():
            if v not in bound:
                raise UnsafeQuery(f"comparison variable {v} of {name} not bound by a body atom")
    return q


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def parse_program(text: str) -> Program:
    return _Parser(tokenize(text)).parse_program()


def parse_query(text: str) -> AggregateQuery:
    """Parse a program and return its single query statement."""
    program = parse_program(text)
    queries = program.queries()
    if len(queries) != 1:
        raise ParseError(f"expected exactly one query statement, found {len(queries)}")
    return queries[0]


def parse_comparisons(text: str) -> tuple[Comparison, ...]:
    """Parse a comma-separated comparison list such as 'X < Y, Y < 2'.
    Unlike a rule body the variables need not be atom-bound; equalities
    become a pair of opposite weak comparisons."""
    parser = _Parser(tokenize(text))
    if parser.peek().kind == "eof":
        return ()
    atoms, raw = parser.parse_body()
    tok = parser.peek()
    if tok.kind != "eof":
        parser.fail(f"unexpected {tok.text!r} after comparisons")
    if atoms:
        raise ParseError(f"expected comparisons only, got atom {atoms[0]!r}")
    out: list[Comparison] = []
    for lhs, op, rhs, tok in raw:
        for side in (lhs, rhs):
            if isinstance(side, StringConst):
                raise ParseError(
                    f"string constant {side!r} is not comparable",
                    tok.line, tok.col)
        if op == "=":
            if lhs == rhs:
                continue
            if is_constant(lhs) and is_constant(rhs):
                raise InconsistentGround(
                    f"{tok.line}:{tok.col}: {lhs!r} = {rhs!r} is false")
            out.extend((Comparison(lhs, "<=", rhs),
                        Comparison(rhs, "<=", lhs)))
            continue
        if is_constant(lhs) and is_constant(rhs):
            holds = lhs.value < rhs.value if op == "<" \
                else lhs.value <= rhs.value
            if not holds:
                raise InconsistentGround(
                    f"{tok.line}:{tok.col}: {lhs!r} {op} {rhs!r} is false")
            continue
        out.append(Comparison(lhs, op, rhs))
    return tuple(dict.fromkeys(out))


# ---------------------------------------------------------------------------
# Renderer
# ---------------------------------------------------------------------------

_LIDENT_RE = re.compile(r"[a-z_][A-Za-z0-9_]*\Z")


def render_term(t: Term) -> str:
    if isinstance(t, Variable):
        return t.name
    if isinstance(t, RationalConst):
        return format_rational(t.value)
    if _LIDENT_RE.match(t.value) and t.value not in ("view",):
        return t.value
    return f"'{t.value}'"


def render_atom(a: RelationalAtom) -> str:
    return f"{a.predicate}({', '.join(render_term(t) for t in a.args)})"


def render_comparison(c: Comparison) -> str:
    return f"{render_term(c.lhs)} {c.op} {render_term(c.rhs)}"


def render_agg(agg: AggTerm) -> str:
    if isinstance(agg, Aggregate):
        if agg.func == "count":
            return "count"
        return f"{agg.func}({agg.var.name})"  # type: ignore[union-attr]
    prod = "*".join(v.name for v in agg.factors)
    return f"sum({prod})" if agg.summed else prod


def render(q, *, view: bool = False) -> str:
    """Render a query (or anything with a to_query() method, such as a
    Rewriting) back to surface syntax. Round-trips through parse_program
    modulo normalize()."""
    if hasattr(q, "to_query"):
        q = q.to_query()
    head_inside = ", ".join(v.name for v in q.grouping)
    if q.agg is not None:
        head_inside += f"; {render_agg(q.agg)}"
    head = f"{q.name}({head_inside})"
    body_parts = [render_atom(a) for a in q.atoms]
    body_parts += [render_comparison(c) for c in q.comparisons]
    text = head if not body_parts else f"{head} :- {', '.join(body_parts)}"
    if view:
        text = "view " + text
    return text + "."


def render_program(program: Program) -> str:
    return "\n".join(render(q, view=(tag == "view"))
                     for tag, q in program.statements)
