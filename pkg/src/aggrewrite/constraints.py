"""Reasoning over comparison sets: consistency, implication, deductive closure.

Comparisons range over the rationals with operators < and <=. A comparison
set is represented as a plain tuple of Comparison values; its vocabulary is
the set of variables and rational constants it mentions.

The engine builds a weighted order graph: one node per term, an edge s -> t
of strength 2 for s < t and strength 1 for s <= t, plus exact-order edges
between every pair of rational constants. Transitive closure combines edge
strengths by taking the maximum along a path (a chain is strict as soon as
one link is strict). A set is inconsistent exactly when some node reaches
itself strictly; implication and closure are read off the closed graph.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Sequence

from .errors import InconsistentInput
from .model import (
    Comparison,
    RationalConst,
    Term,
    Variable,
    comparison_key,
    term_key,
)

ConstraintSet = tuple[Comparison, ...]

_LE = 1
_LT = 2
_STRENGTH = {"<=": _LE, "<": _LT}
_OP = {_LE: "<=", _LT: "<"}


def vocabulary(comparisons: Iterable[Comparison]) -> set[Term]:
    vocab: set[Term] = set()
    for c in comparisons:
        vocab.add(c.lhs)
        vocab.add(c.rhs)
    return vocab


def _closed_graph(comparisons: Iterable[Comparison],
                  extra_terms: Iterable[Term] = ()) -> dict[Term, dict[Term, int]]:
    comparisons = tuple(comparisons)
    nodes = sorted(vocabulary(comparisons) | set(extra_terms), key=term_key)
    reach: dict[Term, dict[Term, int]] = {n: {} for n in nodes}

    def add_edge(a: Term, b: Term, strength: int):
        if reach[a].get(b, 0) < strength:
            reach[a][b] = strength

    constants = [n for n in nodes if isinstance(n, RationalConst)]
    for a, b in combinations(constants, 2):  # constants arrive sorted by value
        if a.value < b.value:
            add_edge(a, b, _LT)
        elif a.value == b.value:  # distinct objects cannot share a value here
            add_edge(a, b, _LE)
            add_edge(b, a, _LE)
    for c in comparisons:
        add_edge(c.lhs, c.rhs, _STRENGTH[c.op])

    for k in nodes:
        row_k = reach[k]
        for i in nodes:
            via = reach[i].get(k, 0)
            if not via:
                continue
            row_i = reach[i]
            for j, kj in row_k.items():
                strength = max(via, kj) if via and kj else 0
                if strength and row_i.get(j, 0) < strength:
                    row_i[j] = strength
    return reach


def consistent(comparisons: Iterable[Comparison]) -> bool:
    """True iff some rational assignment satisfies every comparison."""
    reach = _closed_graph(comparisons)
    return all(row.get(n, 0) < _LT for n, row in reach.items())


def implies(premise: Iterable[Comparison],
            conclusion: Iterable[Comparison]) -> bool:
    """True iff every assignment satisfying premise satisfies conclusion.
    An inconsistent premise implies everything."""
    premise = tuple(premise)
    conclusion = tuple(conclusion)
    if not consistent(premise):
        return True
    reach = _closed_graph(premise, extra_terms=vocabulary(conclusion))
    for c in conclusion:
        if c.lhs == c.rhs:
            if c.op == "<":
                return False
            continue
        if reach[c.lhs].get(c.rhs, 0) < _STRENGTH[c.op]:
            return False
    return True


def equivalent_constraints(c1: Iterable[Comparison],
                           c2: Iterable[Comparison]) -> bool:
    c1, c2 = tuple(c1), tuple(c2)
    return implies(c1, c2) and implies(c2, c1)


def deductive_closure(comparisons: Iterable[Comparison],
                      extra_vocabulary: Iterable[Term] = ()) -> ConstraintSet:
    """All comparisons over the vocabulary (plus extra_vocabulary) entailed by
    the input, together with the input itself. Ground constant pairs are
    facts, not members. Raises InconsistentInput on inconsistent input."""
    comparisons = tuple(comparisons)
    if not consistent(comparisons):
        raise InconsistentInput(f"inconsistent comparison set {comparisons}")
    reach = _closed_graph(comparisons, extra_terms=extra_vocabulary)
    out = set(comparisons)
    for a, row in reach.items():
        for b, strength in row.items():
            if a == b:
                continue
            if not isinstance(a, Variable) and not isinstance(b, Variable):
                continue
            if strength >= _LT:
                out.add(Comparison(a, "<", b))
            out.add(Comparison(a, "<=", b))
    return tuple(sorted(out, key=comparison_key))


def minimize(comparisons: Iterable[Comparison],
             given: Iterable[Comparison] = ()) -> ConstraintSet:
    """Drop comparisons implied by `given` together with the remaining ones.
    The result, conjoined with `given`, is equivalent to the input conjoined
    with `given`. Deterministic: candidates are examined in sorted order."""
    given = tuple(given)
    keep = sorted(set(comparisons), key=comparison_key)
    for c in list(keep):
        rest = [k for k in keep if k != c]
        if implies(given + tuple(rest), [c]):
            keep = rest
    return tuple(keep)
