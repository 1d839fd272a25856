"""Exception and warning classes."""
import numpy as np


class TransRocError(Exception):
    """Base class for errors raised by this package."""


class OutOfRangeError(TransRocError, ValueError):
    """A value lies outside the range of the transformation function."""


class NonFiniteLikelihoodError(TransRocError, FloatingPointError):
    """The log-likelihood evaluated to a non-finite value."""


class SingularInformationError(TransRocError, np.linalg.LinAlgError):
    """The observed information (or one of its blocks) is numerically singular."""


class NotConvergedError(TransRocError, RuntimeError):
    """The optimizer stopped before meeting the gradient tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SeparationError(NotConvergedError):
    """The shift parameter diverges; the disease groups look perfectly separated."""


class DegenerateVarianceError(TransRocError, ValueError):
    """The covariance used for simulation is zero."""


class DimensionMismatchError(TransRocError, ValueError):
    """A covariate vector does not match the fitted model."""


class MultimodalWarning(UserWarning):
    """The score statistic crosses the critical value more than twice."""


class UnboundedIntervalWarning(UserWarning):
    """A score interval has no finite endpoint on at least one side."""


class FlatTransformationWarning(UserWarning):
    """Some Bernstein coefficient increments collapsed to (near) zero."""


class PolarityWarning(UserWarning):
    """The estimated shift is negative: lower test values indicate disease."""


class NoRootError(TransRocError, ValueError):
    """No shift attains the requested index value."""
