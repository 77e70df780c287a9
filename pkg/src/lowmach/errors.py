"""Exception types shared across the package."""


class LowmachError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LowmachError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(LowmachError):
    """A configuration or parameter combination is invalid or inconsistent."""


class SolverError(LowmachError):
    """An iterative solver failed to converge.

    Carries the residual / iterate history so callers can inspect what
    happened before giving up.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
