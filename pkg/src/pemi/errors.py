"""Exception hierarchy shared across the package."""


class PemiError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PemiError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigurationError(PemiError, ValueError):
    """A rule, score, or experiment configuration cannot be resolved."""


class PreconditionError(PemiError, ValueError):
    """A documented precondition of an operation does not hold."""


class GuardError(PemiError, ValueError):
    """A safety guard (e.g. the enumeration size cap) was tripped."""


class SchemaError(PemiError, ValueError):
    """A data file is missing required columns."""


class ParseError(PemiError, ValueError):
    """A data file row could not be parsed."""
