"""Bag-set evaluation, databases, and the randomized equivalence oracle.

Expected values are frozen from hand enumeration of the assignments; the
multiplicity of a result row is the number of distinct variable
assignments deriving it.
"""

import json
import random
from collections import Counter
from fractions import Fraction

import pytest

from aggrewrite.errors import QueryError, UnknownPredicate
from aggrewrite.evaluator import (
    Counterexample,
    Database,
    NoCounterexampleFound,
    SizeParams,
    base_schema_of,
    database_from_json,
    eval_aggregate,
    eval_core_bag,
    extend_database,
    oracle_equivalent,
    random_database,
)
from aggrewrite.model import ProductTerm, Variable, ViewSet
from aggrewrite.parser import parse_program, parse_query

from conftest import agg_, atom, cmp_, count_, query

F = Fraction


def db(**relations) -> Database:
    return Database({name: frozenset(tuple(F(v) if isinstance(v, int) else v
                                           for v in row) for row in rows)
                     for name, rows in relations.items()})


TA = [("ann", "db", "t1"), ("bob", "os", "t1"), ("cy", "ai", "t2")]
SAL = [("t1", "gov", 700), ("t1", "uni", 300), ("t2", "gov", 550)]


def test_database_json_round_trip():
    d = database_from_json({"p": [[1, "a"], [0.5, "b"], ["3/2", "c"]]})
    rows = d.relation("p")
    assert (F(1, 2), "b") in rows
    assert (F(3, 2), "c") in rows
    back = database_from_json(d.to_json())
    assert back == d
    with pytest.raises(UnknownPredicate):
        d.relation("q")
    with pytest.raises(QueryError):
        database_from_json({"p": [1]})


def test_core_bag_counts_assignments():
    d = db(p=[(1, 1), (1, 2), (2, 1)])
    q = query("q", ["X"], count_(), [atom("p", "X", "Y")])
    bag = eval_core_bag(q, d)
    assert bag == Counter({((F(1),), ()): 2, ((F(2),), ()): 1})


def test_count_multiplies_across_joins():
    d = db(ta=TA, salaries=SAL)
    q = query("q", ["J"], count_(),
              [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")])
    assert eval_aggregate(q, d) == frozenset({("t1", F(4)), ("t2", F(1))})


def test_empty_groups_are_absent():
    d = db(ta=TA, salaries=[("t3", "gov", 100)])
    q = query("q", ["J"], count_(),
              [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")])
    assert eval_aggregate(q, d) == frozenset()


def test_sum_respects_multiplicity():
    d = db(ta=TA, salaries=SAL)
    q = query("q", ["J"], agg_("sum", "A"),
              [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")])
    # t1: two TAs each joining amounts 700+300; t2: one TA and 550.
    assert eval_aggregate(q, d) == frozenset({("t1", F(2000)),
                                              ("t2", F(550))})


def test_max_min_ignore_multiplicity():
    d = db(ta=TA, salaries=SAL)
    qmax = query("q", ["J"], agg_("max", "A"),
                 [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")])
    qmin = query("q", ["J"], agg_("min", "A"),
                 [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")])
    assert eval_aggregate(qmax, d) == frozenset({("t1", F(700)),
                                                 ("t2", F(550))})
    assert eval_aggregate(qmin, d) == frozenset({("t1", F(300)),
                                                 ("t2", F(550))})


def test_comparisons_filter_assignments():
    d = db(salaries=SAL)
    q = query("q", ["J"], count_(), [atom("salaries", "J", "S", "A")],
              [cmp_(200, "<", "A"), cmp_("A", "<", 600)])
    assert eval_aggregate(q, d) == frozenset({("t1", F(1)), ("t2", F(1))})


def test_constants_in_atoms_select_rows():
    d = db(salaries=SAL)
    q = query("q", ["J"], count_(), [atom("salaries", "J", "gov", "A")])
    assert eval_aggregate(q, d) == frozenset({("t1", F(1)), ("t2", F(1))})


def test_repeated_variable_requires_equal_columns():
    d = db(p=[(1, 1), (1, 2)])
    q = query("q", ["X"], count_(), [atom("p", "X", "X")])
    assert eval_aggregate(q, d) == frozenset({(F(1), F(1))})


def test_plain_query_returns_distinct_rows():
    d = db(p=[(1, 1), (1, 2), (2, 1)])
    q = query("q", ["X"], None, [atom("p", "X", "Y")])
    assert eval_aggregate(q, d) == frozenset({(F(1),), (F(2),)})


def test_unsummed_product_yields_row_per_group():
    d = db(v1=[("a", 2)], v2=[("a", 3), ("b", 5)])
    q = query("r", ["G"], ProductTerm((Variable("Z1"), Variable("Z2")), False),
              [atom("v1", "G", "Z1"), atom("v2", "G", "Z2")])
    assert eval_aggregate(q, d) == frozenset({("a", F(6))})


def test_summed_product_adds_over_assignments():
    d = db(v1=[("a", 2), ("a", 7)], v2=[("a", 3)])
    q = query("r", ["G"], ProductTerm((Variable("Z1"), Variable("Z2")), True),
              [atom("v1", "G", "Z1"), atom("v2", "G", "Z2")])
    assert eval_aggregate(q, d) == frozenset({("a", F(27))})


def test_duplicate_atoms_do_not_double_count():
    d = db(p=[(1,), (2,)])
    q = query("q", [], count_(), [atom("p", "X"), atom("p", "X")])
    assert eval_aggregate(q, d) == frozenset({(F(2),)})


def test_string_values_join_but_do_not_aggregate():
    d = db(p=[("a", 1), ("b", 2)])
    q = query("q", ["X"], count_(), [atom("p", "X", "Y")])
    assert eval_aggregate(q, d) == frozenset({("a", F(1)), ("b", F(1))})
    qsum = query("q", [], agg_("sum", "X"), [atom("p", "X", "Y")])
    with pytest.raises(TypeError):
        eval_aggregate(qsum, d)
    qcmp = query("q", [], count_(), [atom("p", "X", "Y")],
                 [cmp_("X", "<", "Y")])
    with pytest.raises(TypeError):
        eval_aggregate(qcmp, d)


def test_comparison_over_unbound_variable_rejected():
    d = db(p=[(1,)])
    q = query("q", [], count_(), [atom("p", "X")])
    bad = query("q", [], count_(), [atom("p", "X")], [cmp_("X", "<", "Y")])
    assert eval_aggregate(q, d) == frozenset({(F(1),)})
    with pytest.raises(QueryError):
        eval_aggregate(bad, d)


def test_extend_database_materializes_views_in_order():
    d = db(ta=TA)
    v1 = query("v_positions", ["J"], count_(), [atom("ta", "N", "C", "J")])
    ext = extend_database(d, ViewSet((v1,)))
    assert ext.relation("v_positions") == frozenset({("t1", F(2)),
                                                     ("t2", F(1))})
    assert ext.relation("ta") == d.relation("ta")


def test_random_database_is_deterministic():
    schema = {"p": 2, "r": 1}
    d1 = random_database(schema, seed=42)
    d2 = random_database(schema, seed=42)
    assert d1 == d2
    sizes = SizeParams()
    assert all(len(rows) <= sizes.max_tuples
               for rows in d1.relations.values())
    assert all(v in sizes.pool
               for rows in d1.relations.values() for row in rows for v in row)
    distinct = {json.dumps(random_database(schema, seed=s).to_json())
                for s in range(20)}
    assert len(distinct) > 1


def test_oracle_finds_no_counterexample_for_identical_queries():
    q1 = query("q", ["X"], count_(), [atom("p", "X", "Y")])
    q2 = query("q2", ["X"], count_(), [atom("p", "X", "Z")])
    res = oracle_equivalent(q1, q2, ViewSet(()), trials=50)
    assert isinstance(res, NoCounterexampleFound)
    assert res.trials == 50


def test_oracle_finds_counterexample_and_it_separates():
    q1 = query("q", ["X"], count_(), [atom("p", "X", "Y")])
    q2 = query("q2", ["X"], count_(), [atom("p", "Y", "X")])
    res = oracle_equivalent(q1, q2, ViewSet(()), trials=200)
    assert isinstance(res, Counterexample)
    assert eval_aggregate(q1, res.database) != eval_aggregate(q2, res.database)


def test_oracle_compares_over_the_view_extension():
    q = query("q", ["J"], count_(), [atom("ta", "N", "C", "J")])
    v = query("v_positions", ["JP"], count_(), [atom("ta", "NP", "CP", "JP")])
    views = ViewSet((v,))
    r = parse_query("r(J; sum(Z)) :- v_positions(J, Z).")
    res = oracle_equivalent(q, r, views, trials=50)
    assert isinstance(res, NoCounterexampleFound)


def test_base_schema_skips_view_relations():
    v = query("v", ["X"], count_(), [atom("p", "X", "Y")])
    views = ViewSet((v,))
    q = parse_query("q(X; sum(Z)) :- v(X, Z), r(X).")
    schema = base_schema_of((q,), views)
    assert schema == {"p": 2, "r": 1}
    clash = query("q", [], count_(), [atom("p", "X")])
    with pytest.raises(QueryError):
        base_schema_of((clash,), views)
