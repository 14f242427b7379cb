"""SQL surface parsing and the translation to and from the rule notation."""

import random
from fractions import Fraction

import pytest

from aggrewrite.errors import (
    ArityMismatch,
    GroupByMismatch,
    InconsistentGround,
    QueryError,
    UnknownAttribute,
    UnknownPredicate,
    UnsupportedSql,
)
from aggrewrite.evaluator import SizeParams, eval_aggregate, random_database
from aggrewrite.model import (
    Aggregate,
    ProductTerm,
    RationalConst,
    StringConst,
    Variable,
    normalize,
)
from aggrewrite.parser import parse_query, render
from aggrewrite.sqlbridge import (
    AttrRef,
    SqlAggregate,
    datalog_to_sql,
    load_schema,
    parse_sql,
    render_sql,
    schema_from_json,
    sql_to_datalog,
)

from conftest import agg_, atom, cmp_, query, random_query

SCHEMA = {
    "ta": ["name", "course_name", "job_type"],
    "salaries": ["job_type", "sponsorship", "amount"],
}

Q_GOVT_SQL = ("SELECT name FROM ta, salaries WHERE sponsorship = 'Govt.' "
              "AND amount > 500 AND ta.job_type = salaries.job_type")
Q_SUM_SQL = ("SELECT ta.job_type, SUM(amount) FROM ta, salaries "
             "WHERE ta.job_type = salaries.job_type")


def canon(q) -> str:
    return render(normalize(q))


# ---------------------------------------------------------------------------
# Schema files
# ---------------------------------------------------------------------------


def test_schema_loading(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text('{"p": ["a", "b"]}')
    assert load_schema(str(path)) == {"p": ["a", "b"]}
    with pytest.raises(QueryError):
        schema_from_json(["p"])
    with pytest.raises(QueryError):
        schema_from_json({"p": ["a", "a"]})
    with pytest.raises(QueryError):
        schema_from_json({"p": "ab"})


# ---------------------------------------------------------------------------
# Parsing the SQL surface
# ---------------------------------------------------------------------------


def test_parse_sql_shapes():
    sql = parse_sql("select T.name, count(*) from ta as T "
                    "where T.name = 'ann' and amount <= 1.5 "
                    "group by T.name;")
    assert sql.select_items == (AttrRef("T", "name"),
                                SqlAggregate("count", None))
    assert sql.from_items == (("ta", "T"),)
    assert sql.group_by == (AttrRef("T", "name"),)
    lhs, op, rhs = (sql.where_conjuncts[1].lhs, sql.where_conjuncts[1].op,
                    sql.where_conjuncts[1].rhs)
    assert (lhs, op, rhs) == (AttrRef(None, "amount"), "<=",
                              RationalConst(Fraction(3, 2)))


def test_parse_sql_rejects_out_of_fragment_text():
    for text in ("SELECT name FROM ta HAVING name = 'a'",
                 "SELECT name FROM (SELECT name FROM ta)",
                 "SELECT name FROM ta UNION SELECT name FROM ta",
                 "SELECT MAX(COUNT(*)) FROM ta",
                 "SELECT name FROM ta WHERE name != 'a'",
                 "SELECT * FROM ta"):
        with pytest.raises(UnsupportedSql):
            parse_sql(text)


# ---------------------------------------------------------------------------
# SQL -> rules
# ---------------------------------------------------------------------------


def test_govt_example_translates():
    got = sql_to_datalog(Q_GOVT_SQL, SCHEMA)
    want = parse_query(
        "q(N) :- ta(N, C, J), salaries(J, 'Govt.', A), 500 < A.")
    assert canon(got) == canon(want)


def test_sum_example_translates_with_and_without_group_by():
    want = parse_query("q(J; sum(A)) :- ta(N, C, J), salaries(J, S, A).")
    assert canon(sql_to_datalog(Q_SUM_SQL, SCHEMA)) == canon(want)
    explicit = Q_SUM_SQL + " GROUP BY ta.job_type"
    assert canon(sql_to_datalog(explicit, SCHEMA)) == canon(want)
    # Naming the merged class through the other relation also matches.
    via_other = Q_SUM_SQL + " GROUP BY salaries.job_type"
    assert canon(sql_to_datalog(via_other, SCHEMA)) == canon(want)


def test_single_relation_projection():
    got = sql_to_datalog("SELECT a FROM p", {"p": ["a", "b"]})
    assert canon(got) == canon(parse_query("q(A) :- p(A, B)."))


def test_equalities_pin_constants_and_merge_variables():
    got = sql_to_datalog(
        "SELECT course_name FROM ta "
        "WHERE course_name = job_type AND name = 'ann'",
        SCHEMA)
    (a,) = got.atoms
    assert a.args[0] == StringConst("ann")
    assert a.args[1] == a.args[2]
    assert got.grouping == (a.args[1],)


def test_selected_pinned_attribute_is_rejected():
    with pytest.raises(UnsupportedSql):
        sql_to_datalog(
            "SELECT sponsorship FROM salaries WHERE sponsorship = 'Govt.'",
            SCHEMA)


def test_self_join_gets_fresh_variables_per_occurrence():
    got = sql_to_datalog(
        "SELECT t.name FROM ta t, ta u WHERE t.job_type = u.job_type",
        SCHEMA)
    assert len(got.atoms) == 2
    a, b = got.atoms
    assert a.args[2] == b.args[2]
    assert a.args[0] != b.args[0] and a.args[1] != b.args[1]


def test_comparison_direction_is_normalized():
    got = sql_to_datalog("SELECT name FROM salaries, ta "
                         "WHERE amount >= 500", SCHEMA)
    (c,) = got.comparisons
    assert c.op == "<=" and c.lhs == RationalConst(500)


def test_count_star_and_scalar_aggregates():
    got = sql_to_datalog("SELECT COUNT(*) FROM ta", SCHEMA)
    assert got.grouping == () and got.agg == Aggregate("count")
    got = sql_to_datalog("SELECT MIN(amount) FROM salaries", SCHEMA)
    assert got.agg == Aggregate("min", got.atoms[0].args[2])


def test_group_by_mismatches():
    with pytest.raises(GroupByMismatch):
        sql_to_datalog("SELECT name, COUNT(*) FROM ta "
                       "GROUP BY name, job_type", SCHEMA)
    with pytest.raises(GroupByMismatch):
        sql_to_datalog("SELECT name, course_name, COUNT(*) FROM ta "
                       "GROUP BY name", SCHEMA)
    with pytest.raises(GroupByMismatch):
        sql_to_datalog("SELECT name FROM ta GROUP BY name", SCHEMA)


def test_attribute_resolution_errors():
    with pytest.raises(UnknownAttribute):
        sql_to_datalog("SELECT nope FROM ta", SCHEMA)
    with pytest.raises(UnknownAttribute):
        # job_type lives in both relations; unqualified is ambiguous.
        sql_to_datalog("SELECT job_type FROM ta, salaries", SCHEMA)
    with pytest.raises(UnknownAttribute):
        sql_to_datalog("SELECT x.name FROM ta", SCHEMA)
    with pytest.raises(UnknownPredicate):
        sql_to_datalog("SELECT name FROM nope", SCHEMA)


def test_ground_inconsistencies():
    with pytest.raises(InconsistentGround):
        sql_to_datalog("SELECT name FROM ta WHERE name = 'a' AND name = 'b'",
                       SCHEMA)
    with pytest.raises(InconsistentGround):
        sql_to_datalog("SELECT name FROM ta WHERE 5 < 4", SCHEMA)
    # A true ground comparison is simply dropped.
    got = sql_to_datalog("SELECT name FROM ta WHERE 4 < 5", SCHEMA)
    assert got.comparisons == ()


def test_unsupported_aggregation_shapes():
    with pytest.raises(UnsupportedSql):
        sql_to_datalog("SELECT COUNT(*), SUM(amount) FROM salaries", SCHEMA)
    with pytest.raises(UnsupportedSql):
        sql_to_datalog("SELECT SUM(amount) FROM salaries WHERE amount = 5",
                       SCHEMA)
    with pytest.raises(UnsupportedSql):
        sql_to_datalog("SELECT name FROM ta WHERE sponsorship < 'x'",
                       {"ta": ["name", "sponsorship"]})


# ---------------------------------------------------------------------------
# Rules -> SQL
# ---------------------------------------------------------------------------


def test_plain_projection_to_sql():
    q = query("q", ["X"], None, [atom("p", "X", "Y")])
    assert render_sql(datalog_to_sql(q, {"p": ["a1", "a2"]})) == \
        "SELECT t1.a1 FROM p t1"


def test_repeated_variables_and_constants_become_conjuncts():
    q = query("q", ["X"], None,
              [atom("p", "X", "X"), atom("r", "X", 2, "ann")])
    sql = datalog_to_sql(q, {"p": ["a", "b"], "r": ["c", "d", "e"]})
    text = render_sql(sql)
    assert "t1.b = t1.a" in text or "t1.a = t1.b" in text
    assert "t2.c = t1.a" in text or "t1.a = t2.c" in text
    assert "t2.d = 2" in text
    assert "t2.e = 'ann'" in text


def test_aggregate_head_gets_select_and_group_by():
    q = query("q", ["J"], agg_("sum", "A"),
              [atom("ta", "N", "C", "J"), atom("salaries", "J", "S", "A")],
              [cmp_(500, "<", "A")])
    text = render_sql(datalog_to_sql(q, SCHEMA))
    assert text == ("SELECT t1.job_type, SUM(t2.amount) FROM ta t1, "
                    "salaries t2 WHERE t1.job_type = t2.job_type "
                    "AND 500 < t2.amount GROUP BY t1.job_type")


def test_datalog_to_sql_schema_errors():
    q = query("q", ["X"], None, [atom("nope", "X")])
    with pytest.raises(UnknownPredicate):
        datalog_to_sql(q, SCHEMA)
    q = query("q", ["X"], None, [atom("ta", "X")])
    with pytest.raises(ArityMismatch):
        datalog_to_sql(q, SCHEMA)


def test_product_heads_have_no_sql_form():
    q = query("q", ["X"], ProductTerm((Variable("Y"),), True),
              [atom("p", "X", "Y")])
    with pytest.raises(UnsupportedSql):
        datalog_to_sql(q, {"p": ["a", "b"]})


def test_empty_heads_have_no_sql_form():
    q = query("q", [], None, [atom("p", "X", "Y")])
    with pytest.raises(UnsupportedSql):
        datalog_to_sql(q, {"p": ["a", "b"]})


# ---------------------------------------------------------------------------
# Round trips
# ---------------------------------------------------------------------------


def _schema_for(q) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for a in q.atoms:
        out.setdefault(a.predicate,
                       [f"c{i + 1}" for i in range(len(a.args))])
    return out


def test_round_trip_on_reference_examples():
    for text, schema in ((Q_GOVT_SQL, SCHEMA), (Q_SUM_SQL, SCHEMA)):
        q = sql_to_datalog(text, schema)
        back = sql_to_datalog(render_sql(datalog_to_sql(q, schema)), schema)
        assert canon(back) == canon(q)


def test_round_trip_on_random_queries():
    rng = random.Random(41)
    for _ in range(200):
        kind = rng.choice(("count", "sum", "max", "min", "none"))
        q = random_query(rng, agg_kind="count" if kind == "none" else kind,
                         with_comparisons=True)
        if kind == "none":
            if not q.grouping:
                continue  # boolean queries have no SQL form
            q = query(q.name, q.grouping, None, q.atoms, q.comparisons)
        schema = _schema_for(q)
        back = sql_to_datalog(render_sql(datalog_to_sql(q, schema)), schema)
        assert canon(back) == canon(q), render(q)


def test_round_trip_preserves_semantics():
    rng = random.Random(43)
    for trial in range(60):
        q = random_query(rng, agg_kind=rng.choice(("count", "sum")),
                         with_comparisons=True)
        schema = _schema_for(q)
        back = sql_to_datalog(render_sql(datalog_to_sql(q, schema)), schema)
        db = random_database({p: len(attrs) for p, attrs in schema.items()},
                             SizeParams(), seed=trial)
        assert eval_aggregate(q, db) == eval_aggregate(back, db)
