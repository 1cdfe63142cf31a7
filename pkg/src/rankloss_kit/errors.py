"""Exception types raised across the package."""


class RanklossError(Exception):
    """Base class for all package errors."""


class ZeroVector(RanklossError, ValueError):
    pass


class DimensionMismatch(RanklossError, ValueError):
    pass


class NotSquare(DimensionMismatch):
    pass


class IndexOutOfRange(RanklossError, IndexError):
    pass


class NoPositives(RanklossError, ValueError):
    """A query has no positive example in its database."""

    def __init__(self, query=None, message=None):
        self.query = query
        if message is None:
            message = "query has no positives" if query is None else f"query {query} has no positives"
        super().__init__(message)


class EmptyAfterFilter(RanklossError, ValueError):
    pass


class NotDivisible(RanklossError, ValueError):
    pass


class TooFewClasses(RanklossError, ValueError):
    pass


class ActivationsMissing(RanklossError, ValueError):
    pass


class ShapeMismatch(RanklossError, ValueError):
    pass


class BadParam(RanklossError, ValueError):
    pass


class ParseError(RanklossError, ValueError):
    def __init__(self, message, line=None, token=None):
        self.line = line
        self.token = token
        super().__init__(message)


class VersionMismatch(RanklossError, ValueError):
    pass


class CorruptCheckpoint(RanklossError, ValueError):
    pass


class ConfigError(RanklossError, ValueError):
    pass
