"""Exception types shared across the package."""

import numpy as np


class MomentOptError(Exception):
    """Base class for all errors raised by momentopt."""


class InvalidInputError(MomentOptError, ValueError):
    """Malformed input: wrong shape, non-finite entries, bad parameters."""


class SingularConditioningError(MomentOptError, np.linalg.LinAlgError):
    """A conditioning system is singular or indefinite beyond tolerance."""


class EvaluationError(MomentOptError):
    """A moment function (or its derivative) failed at a parameter value.

    The offending point is kept on ``theta`` so callers can report it.
    """

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = None if theta is None else np.array(theta, dtype=float)


class DomainError(EvaluationError):
    """The model cannot be evaluated at this parameter value."""


class ConfigError(MomentOptError, ValueError):
    """Invalid experiment or optimizer configuration."""
