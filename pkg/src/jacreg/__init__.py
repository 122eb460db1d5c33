"""Jacobian-regularised learned reconstruction for linear inverse problems."""
from .estimator import JacobianRegularizedRegressor, MeasurementTransformer

__all__ = ["JacobianRegularizedRegressor", "MeasurementTransformer"]
__version__ = "0.1.0"
