"""Rewriting of conjunctive aggregate queries over materialized views.

The package parses an extended Datalog notation for count, sum, max and
min queries, searches for equivalent rewritings over a set of views,
verifies proposed rewritings, evaluates queries on small databases under
bag-set semantics, and translates a restricted SQL fragment to and from
the Datalog notation.
"""

from .constraints import (
    consistent,
    deductive_closure,
    equivalent_constraints,
    implies,
    minimize,
)
from .errors import (
    AggregateMismatch,
    ArityMismatch,
    GroupByMismatch,
    HasComparisons,
    InconsistentGround,
    InconsistentInput,
    NotACountQuery,
    NotAMaxQuery,
    NotASumQuery,
    ParseError,
    QueryError,
    RewritingFormError,
    UnknownAttribute,
    UnknownPredicate,
    UnknownView,
    UnsafeQuery,
    UnsupportedSql,
    WrongQueryKind,
)
from .evaluator import (
    Counterexample,
    Database,
    NoCounterexampleFound,
    SizeParams,
    database_from_json,
    eval_aggregate,
    eval_core_bag,
    extend_database,
    load_database,
    oracle_equivalent,
    random_database,
)
from .matcher import (
    find_body_isomorphisms,
    find_homomorphisms,
    isomorphic_queries,
    set_equivalent_relational,
)
from .model import (
    Aggregate,
    AggregateQuery,
    Comparison,
    ProductTerm,
    RationalConst,
    RelationalAtom,
    StringConst,
    Substitution,
    Variable,
    ViewSet,
    normalize,
)
from .parser import (
    parse_comparisons,
    parse_program,
    parse_query,
    render,
    render_program,
)
from .rewriter import (
    Extremum,
    Match,
    PlainProduct,
    ProvedEquivalent,
    RefutedByCounterexample,
    RefutedByStructure,
    Rewriting,
    RewritingHead,
    SumOfProducts,
    Unknown,
    ViewAtom,
    c_usability_checks,
    c_usable,
    count_rewriting,
    interpret_rewriting,
    max_rewriting,
    omit_summation,
    r_usable_matches,
    sum_rewriting,
    unfold,
    verify_rewriting,
)
from .sqlbridge import (
    SqlQuery,
    datalog_to_sql,
    load_schema,
    parse_sql,
    render_sql,
    sql_to_datalog,
)

__all__ = [
    "Aggregate",
    "AggregateMismatch",
    "AggregateQuery",
    "ArityMismatch",
    "Comparison",
    "Counterexample",
    "Database",
    "Extremum",
    "GroupByMismatch",
    "HasComparisons",
    "InconsistentGround",
    "InconsistentInput",
    "Match",
    "NoCounterexampleFound",
    "NotACountQuery",
    "NotAMaxQuery",
    "NotASumQuery",
    "ParseError",
    "PlainProduct",
    "ProductTerm",
    "ProvedEquivalent",
    "QueryError",
    "RationalConst",
    "RefutedByCounterexample",
    "RefutedByStructure",
    "RelationalAtom",
    "Rewriting",
    "RewritingFormError",
    "RewritingHead",
    "SizeParams",
    "SqlQuery",
    "StringConst",
    "Substitution",
    "SumOfProducts",
    "Unknown",
    "UnknownAttribute",
    "UnknownPredicate",
    "UnknownView",
    "UnsafeQuery",
    "UnsupportedSql",
    "Variable",
    "ViewAtom",
    "ViewSet",
    "WrongQueryKind",
    "c_usability_checks",
    "c_usable",
    "consistent",
    "count_rewriting",
    "database_from_json",
    "datalog_to_sql",
    "deductive_closure",
    "equivalent_constraints",
    "eval_aggregate",
    "eval_core_bag",
    "extend_database",
    "find_body_isomorphisms",
    "find_homomorphisms",
    "implies",
    "interpret_rewriting",
    "isomorphic_queries",
    "load_database",
    "load_schema",
    "max_rewriting",
    "minimize",
    "normalize",
    "omit_summation",
    "oracle_equivalent",
    "parse_comparisons",
    "parse_program",
    "parse_query",
    "parse_sql",
    "r_usable_matches",
    "random_database",
    "render",
    "render_program",
    "render_sql",
    "set_equivalent_relational",
    "sql_to_datalog",
    "sum_rewriting",
    "unfold",
    "verify_rewriting",
]
