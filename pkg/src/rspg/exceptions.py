"""Exception hierarchy.

Argument and domain errors subclass :class:`ValueError` so callers that only
care about "bad input" can keep catching the builtin.
"""


class RSPGError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RSPGError, ValueError):
    pass


class DomainError(RSPGError, ValueError):
    """Input outside the mathematical domain (zero probabilities, etc.)."""


class CoverageError(RSPGError, ValueError):
    """An offline dataset never observed a pair the operator needs."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ConvergenceError(RSPGError, RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), n_iter=0):
        super().__init__(message)
        self.residual = residual
        self.n_iter = n_iter


class MonotonicityError(RSPGError, RuntimeError):
    """Strong monotonicity check failed (mu_R <= 0)."""


class ConfigError(RSPGError, ValueError):
    pass
