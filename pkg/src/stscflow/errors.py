class STSCError(Exception):
    """Base class for library errors."""


class ParseError(STSCError, ValueError):
    """A file does not match its declared format."""


class ValidationError(STSCError, ValueError):
    """Data violates a type invariant (ordering, bounds, polarity)."""


class ConfigError(STSCError, ValueError):
    """Invalid parameter combination."""


class DomainError(STSCError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NonFiniteError(STSCError, FloatingPointError):
    """A loss or gradient evaluated to NaN or infinity."""
