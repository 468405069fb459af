"""Exception types shared across the package.

All of these derive from ValueError so callers that do not care about the
distinction can still catch one base class.
"""


class ShapeError(ValueError):
    """Operand dimensions do not conform."""


class ParameterError(ValueError):
    """An argument value is outside its allowed domain."""


class FormatError(ValueError):
    """A file or serialized payload is malformed."""


class ConfigError(ValueError):
    """A configuration object violates its invariants."""


class InvariantViolation(RuntimeError):
    """A runtime cross-check failed (measured vs. predicted, etc.)."""
