"""Exception types shared across the package.

Every error raised on user input derives from QueryError, so the CLI can map
any of them to exit code 2 (usage / input error) uniformly.
"""

from __future__ import annotations


class QueryError(Exception):
    """Base class for all input-level errors."""


class ParseError(QueryError):
    """Syntax error in Datalog or SQL text, with 1-based position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class ArityMismatch(QueryError):
    """The same predicate is used with two different arities."""


class UnsafeQuery(QueryError):
    """A head, aggregation, or comparison variable is not bound by a body atom."""


class InconsistentGround(QueryError):
    """A ground comparison or equality in a body is false."""


class UnknownPredicate(QueryError):
    """A query references a relation absent from the database."""


class UnknownView(QueryError):
    """A rewriting references a view absent from the view set."""


class AggregateMismatch(QueryError):
    """Two queries with different aggregate kinds were compared."""


class HasComparisons(QueryError):
    """A relational-only operation was given a query with comparisons."""


class WrongQueryKind(QueryError):
    """A rewriting algorithm was given a query of the wrong aggregate kind."""


class NotACountQuery(WrongQueryKind):
    pass


class NotASumQuery(WrongQueryKind):
    pass


class NotAMaxQuery(WrongQueryKind):
    pass


class UnsupportedSql(QueryError):
    """SQL input outside the supported fragment."""


class UnknownAttribute(QueryError):
    """A SQL attribute or relation does not exist in the schema."""


class GroupByMismatch(QueryError):
    """GROUP BY attributes differ from the non-aggregate SELECT attributes."""


class InconsistentInput(QueryError):
    """deductive_closure was given an inconsistent comparison set."""


class RewritingFormError(QueryError):
    """A parsed rule cannot be read as a rewriting over the given views."""
