"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside the range an operation accepts."""


class DomainError(ValueError):
    """A point lies outside the domain of a macroscopic function."""


class PreconditionError(ValueError):
    """Input violates a documented precondition (e.g. density band)."""


class OracleCapError(RuntimeError):
    """Exhaustive enumeration was refused because the path count is too large."""


class MarginError(RuntimeError):
    """A finite simulation window is too small for the requested horizon."""
