"""Command line interface.

Subcommands: rewrite (search for rewritings of a query over views), verify
(check a proposed rewriting), unfold (expand view atoms), translate (SQL to
Datalog and back), eval (run a query on a JSON database), closure (deductive
closure of a comparison list).

Exit codes: 0 success (a rewriting was found, the verdict was proved or
unknown), 1 negative outcome (no rewriting, refuted), 2 usage or input
error. Output is byte-identical across runs for identical inputs and seed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from fractions import Fraction
from typing import Optional

from .constraints import deductive_closure
from .errors import QueryError, WrongQueryKind
from .evaluator import eval_aggregate, load_database
from .model import Aggregate, AggregateQuery, ViewSet, format_rational
from .parser import (
    parse_comparisons,
    parse_program,
    render,
    render_term,
)
from .rewriter import (
    Rewriting,
    count_rewriting,
    interpret_rewriting,
    max_rewriting,
    omit_summation,
    rewriting_json,
    sum_rewriting,
    unfold,
    verdict_json,
    verify_rewriting,
)
from .sqlbridge import datalog_to_sql, load_schema, render_sql, sql_to_datalog


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as f:
        return f.read()


def _load_query(path: str) -> AggregateQuery:
    program = parse_program(_read(path))
    queries = program.queries()
    if len(queries) != 1 or program.views():
        raise QueryError(f"{path}: expected exactly one query statement")
    return queries[0]


def _load_views(path: str) -> ViewSet:
    program = parse_program(_read(path))
    if program.queries():
        raise QueryError(f"{path}: expected view statements only "
                         f"(prefix each with 'view')")
    return ViewSet(tuple(program.views()))


def _load_rewriting(path: str, views: ViewSet) -> Rewriting:
    program = parse_program(_read(path))
    statements = program.queries() + program.views()
    if len(statements) != 1:
        raise QueryError(f"{path}: expected exactly one rule")
    return interpret_rewriting(statements[0], views)


def _aggregate_kind(q: AggregateQuery) -> str:
    if isinstance(q.agg, Aggregate):
        return q.agg.func
    raise WrongQueryKind(
        "the query must aggregate with count, sum, max or min")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_rewrite(args) -> int:
    q = _load_query(args.query)
    views = _load_views(args.views)
    kind = _aggregate_kind(q)
    mode = kind if args.mode == "auto" else args.mode
    if mode != kind:
        raise WrongQueryKind(f"the query aggregates with {kind}, not {mode}")
    if mode in ("count", "sum"):
        engine = count_rewriting if mode == "count" else sum_rewriting
        gen = engine(q, views, close_first=not args.no_close,
                     partial=args.partial)
    else:
        if args.partial:
            raise QueryError(
                "--partial applies to count and sum queries only")
        if args.no_close:
            raise QueryError(
                "--no-close applies to count and sum queries only")
        gen = max_rewriting(q, views, trials=args.trials, seed=args.seed)
    if args.all:
        rewritings = list(gen)
    else:
        rewritings = list(itertools.islice(gen, 1))

    if args.json:
        items = []
        for r in rewritings:
            verdict = verify_rewriting(q, r, views, trials=args.trials,
                                       seed=args.seed)
            obj = rewriting_json(omit_summation(r), verdict)
            obj["unfolding"] = render(unfold(r, views))
            obj["partial"] = r.is_partial
            items.append(obj)
        print(json.dumps({
            "query": render(q),
            "mode": mode,
            "partial": args.partial,
            "found": bool(rewritings),
            "rewritings": items,
        }, indent=2))
    else:
        for r in rewritings:
            print(render(omit_summation(r)))
        if not rewritings:
            print("no rewriting found", file=sys.stderr)
    return 0 if rewritings else 1


def _render_witness(witness) -> str:
    pairs = sorted(witness.items(), key=lambda kv: kv[0].name)
    inside = ", ".join(f"{v.name} -> {render_term(t)}" for v, t in pairs)
    return "{" + inside + "}"


def _cmd_verify(args) -> int:
    views = _load_views(args.views)
    q = _load_query(args.query)
    r = _load_rewriting(args.rewriting, views)
    verdict = verify_rewriting(q, r, views, trials=args.trials,
                               seed=args.seed)
    obj = verdict_json(verdict)
    status = obj["status"]
    print(type(verdict).__name__)
    if status == "proved_equivalent" and obj["witness"] is not None:
        print(f"witness: {_render_witness(verdict.witness)}")
    elif status == "refuted_by_structure":
        print(f"reason: {obj['reason']}")
    elif status == "refuted_by_counterexample":
        print(f"seed: {obj['seed']}")
        print(json.dumps(obj["database"], indent=2))
    elif status == "unknown":
        print(f"trials: {obj['trials']}")
    return 0 if status in ("proved_equivalent", "unknown") else 1


def _cmd_unfold(args) -> int:
    views = _load_views(args.views)
    r = _load_rewriting(args.rewriting, views)
    print(render(unfold(r, views)))
    return 0


def _cmd_translate(args) -> int:
    schema = load_schema(args.schema)
    text = _read(args.file)
    if getattr(args, "from") == "sql":
        print(render(sql_to_datalog(text, schema)))
    else:
        program = parse_program(text)
        statements = program.queries() + program.views()
        if len(statements) != 1:
            raise QueryError(f"{args.file}: expected exactly one rule")
        print(render_sql(datalog_to_sql(statements[0], schema)))
    return 0


def _render_value(v) -> str:
    if isinstance(v, Fraction):
        return format_rational(v)
    return f"'{v}'"


def _cmd_eval(args) -> int:
    q = _load_query(args.query)
    db = load_database(args.database)
    rows = eval_aggregate(q, db)

    def row_key(row):
        return tuple((1, v) if isinstance(v, str) else (0, v) for v in row)

    for row in sorted(rows, key=row_key):
        print(", ".join(_render_value(v) for v in row))
    return 0


def _cmd_closure(args) -> int:
    comps = parse_comparisons(args.comparisons)
    for c in deductive_closure(comps):
        print(f"{render_term(c.lhs)}{c.op}{render_term(c.rhs)}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aggrewrite",
        description="Rewrite aggregate queries over materialized views.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_trials(p):
        p.add_argument("--trials", type=int, default=200,
                       help="random databases to try (default 200)")
        p.add_argument("--seed", type=int, default=0,
                       help="seed of the first trial (default 0)")

    p = sub.add_parser("rewrite", help="search for rewritings over views")
    p.add_argument("-q", "--query", required=True, help="query file")
    p.add_argument("-v", "--views", required=True, help="views file")
    p.add_argument("--mode", choices=["count", "sum", "max", "min", "auto"],
                   default="auto",
                   help="rewriting kind (default: from the query head)")
    p.add_argument("--all", action="store_true",
                   help="print every rewriting, not just the first")
    p.add_argument("--partial", action="store_true",
                   help="also allow partial rewritings with base atoms")
    p.add_argument("--no-close", action="store_true",
                   help="skip the deductive closure of the query comparisons")
    p.add_argument("--json", action="store_true",
                   help="emit JSON with verdicts instead of rules")
    add_trials(p)
    p.set_defaults(func=_cmd_rewrite)

    p = sub.add_parser("verify", help="check a proposed rewriting")
    p.add_argument("-q", "--query", required=True, help="query file")
    p.add_argument("-r", "--rewriting", required=True, help="rewriting file")
    p.add_argument("-v", "--views", required=True, help="views file")
    add_trials(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("unfold", help="expand a rewriting's view atoms")
    p.add_argument("-r", "--rewriting", required=True, help="rewriting file")
    p.add_argument("-v", "--views", required=True, help="views file")
    p.set_defaults(func=_cmd_unfold)

    p = sub.add_parser("translate", help="translate between SQL and Datalog")
    p.add_argument("--from", choices=["sql", "datalog"], required=True,
                   help="input notation")
    p.add_argument("--schema", required=True,
                   help="JSON schema file mapping relations to attributes")
    p.add_argument("file", help="input file ('-' for stdin)")
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("eval", help="evaluate a query on a JSON database")
    p.add_argument("-q", "--query", required=True, help="query file")
    p.add_argument("-d", "--database", required=True, help="database file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("closure", help="deductive closure of comparisons")
    p.add_argument("-c", "--comparisons", required=True,
                   help="comma-separated list such as 'X<Y, Y<2'")
    p.set_defaults(func=_cmd_closure)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except QueryError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
