"""Iterative GMM and indirect-inference estimators with global-convergence diagnostics."""

from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    InvalidInputError,
    MomentOptError,
    SingularConditioningError,
)
from .model import MomentModel, Weighting, objective, objective_hessian
from .optimizers import (
    GlobalStepConfig,
    IterationTrace,
    OptimizerConfig,
    Termination,
    run,
    run_global,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "EvaluationError",
    "GlobalStepConfig",
    "InvalidInputError",
    "IterationTrace",
    "MomentModel",
    "MomentOptError",
    "OptimizerConfig",
    "SingularConditioningError",
    "Termination",
    "Weighting",
    "objective",
    "objective_hessian",
    "run",
    "run_global",
]
