"""Sensitivity of estimated structural parameters to calibrated parameters."""

from .numdiff import StepPolicy, jacobian, moment_variance_weight, stacked_second_derivatives
from .sensitivity import (
    MomentBundle,
    QoIJacobians,
    SensitivityResult,
    SingularityError,
    aggregate_delta,
    elasticities,
    extrapolate_percent,
    generalization_sensitivity,
    lambda_matrix,
    qoi_sensitivity,
    sensitivity_approx,
    sensitivity_robust,
)

__version__ = "0.1.0"

__all__ = [
    "StepPolicy",
    "jacobian",
    "moment_variance_weight",
    "stacked_second_derivatives",
    "MomentBundle",
    "QoIJacobians",
    "SensitivityResult",
    "SingularityError",
    "aggregate_delta",
    "elasticities",
    "extrapolate_percent",
    "generalization_sensitivity",
    "lambda_matrix",
    "qoi_sensitivity",
    "sensitivity_approx",
    "sensitivity_robust",
]
