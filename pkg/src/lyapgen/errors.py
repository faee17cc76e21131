"""Exception hierarchy shared across the package."""


class LyapgenError(Exception):
    """Base class for all package errors."""


class DimensionError(LyapgenError, ValueError):
    """Operands have incompatible or non-square shapes."""


class DefinitenessError(LyapgenError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class NotHurwitzError(LyapgenError, ValueError):
    """The system matrix has an eigenvalue with nonnegative real part."""


class NumericError(LyapgenError, ArithmeticError):
    """Overflow, non-finite values, or a singular linear system."""


class UnknownSystemError(LyapgenError, KeyError):
    """Requested system name is not registered."""


class ValidationError(LyapgenError, ValueError):
    """An input value violates its documented contract."""


class FiniteEscapeError(LyapgenError, RuntimeError):
    """A trajectory left the blow-up ball before the requested time."""

    def __init__(self, msg, witness=None, t=None):
        super().__init__(msg)
        self.witness = witness
        self.t = t


class StepBudgetError(LyapgenError, RuntimeError):
    """The integrator exceeded its step budget."""


class HorizonNotFoundError(LyapgenError, RuntimeError):
    """No horizon in the searched grid satisfies the contraction margin."""


class BracketError(LyapgenError, RuntimeError):
    """Level bisection cannot start: the lower bracket already fails."""


class EmptyRegionError(LyapgenError, ValueError):
    """A candidate set or feasible sample set is empty."""


class GeometryError(LyapgenError, RuntimeError):
    """Level-set geometry extraction failed."""
