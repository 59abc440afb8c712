class NotStrictEquilibriumError(ValueError):
    """Raised when an operation needs a strict equilibrium and gets something else."""


class NotFittedError(ValueError, AttributeError):
    """Raised when an estimator is used before ``fit``."""
