"""Marginalizable individual-frailty proportional-odds models fitted by composite likelihood."""

from pofrailty.em import FitConfig, FitResult, fit
from pofrailty.frailty import CorrelationKind, CorrelationModel
from pofrailty.models import BaselineFunction, Cluster, Dataset, ModelParams, Observation
from pofrailty.variance import SandwichEstimate, sandwich

__all__ = [
    "BaselineFunction",
    "Cluster",
    "CorrelationKind",
    "CorrelationModel",
    "Dataset",
    "FitConfig",
    "FitResult",
    "ModelParams",
    "Observation",
    "SandwichEstimate",
    "fit",
    "sandwich",
]
