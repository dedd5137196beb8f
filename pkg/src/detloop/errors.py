"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input failed a structural or numerical validation check."""


class BudgetExhausted(RuntimeError):
    """A bounded search ran out of budget before finishing.

    ``best`` carries the best result found so far so callers can still use it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CapExceeded(RuntimeError):
    """An instance is larger than the configured size cap."""


class SolverError(RuntimeError):
    """The LP solver failed to produce a trustworthy answer."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class IterationCapExceeded(RuntimeError):
    """A retry loop hit its iteration cap."""
