"""Exception hierarchy shared by all modules."""


class AggBNEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AggBNEError, ValueError):
    """Invalid user-supplied parameters or configuration."""


class ModelError(AggBNEError, ValueError):
    """A model ingredient (cdf, cost) violates its declared properties."""


class ShapeError(AggBNEError, ValueError):
    """Array dimensions do not match the discretization."""


class ValidationError(AggBNEError):
    """A validator probe (model, schedule) failed."""


class NumericalError(AggBNEError, ArithmeticError):
    """An iterative procedure failed to converge."""


class DivergenceError(NumericalError):
    """Non-finite values appeared during iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
