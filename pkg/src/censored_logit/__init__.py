"""Conditional logit estimation of choice behavior and unobserved no-purchase
demand from censored sales transactions."""

from .data import (
    AlternativeCatalog,
    ChoiceReshaper,
    ChoiceSet,
    TransactionDataset,
    TransactionRecord,
    long_to_wide,
    parse_long,
    parse_wide,
    reshape,
)
from .estimation import FitResult, RobustDemandEstimator, fit
from .likelihood import ModelCoefficients, observed_loglik
from .prediction import PredictionResult, predict

__all__ = [
    "AlternativeCatalog",
    "ChoiceReshaper",
    "ChoiceSet",
    "FitResult",
    "ModelCoefficients",
    "PredictionResult",
    "RobustDemandEstimator",
    "TransactionDataset",
    "TransactionRecord",
    "fit",
    "long_to_wide",
    "observed_loglik",
    "parse_long",
    "parse_wide",
    "predict",
    "reshape",
]

__version__ = "0.1.0"
