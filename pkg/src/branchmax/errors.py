"""Exception types raised across the package."""


class BranchmaxError(Exception):
    """Base class for package errors."""


class ParameterError(BranchmaxError, ValueError):
    """A model or law parameter is outside its admissible range."""


class DomainError(BranchmaxError, ValueError):
    """A function was evaluated outside its domain."""


class UnsupportedVariantError(BranchmaxError, TypeError):
    """The operation is not defined for this Levy model variant."""


class NoRootError(BranchmaxError, ValueError):
    """No positive Cramer root exists for the model."""


class ConvergenceError(BranchmaxError, RuntimeError):
    """Fixed-point iteration stopped before reaching the tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FitError(BranchmaxError, ValueError):
    """Not enough usable points for a tail fit."""


class ConfigError(BranchmaxError, ValueError):
    """Invalid experiment configuration."""
