"""Locally private federated boosting: perturbation mechanisms, secure sums,
base learners, SAMME, and a multi-owner simulator."""

from .boosting import Ensemble, LearnerConfig, fit_samme_centralized
from .federation import BudgetExhaustedError, Federation, FederationConfig, run_boosting
from .mechanisms import DomainError, MechanismKind, PrivacyBudget, perturb

__all__ = [
    "BudgetExhaustedError",
    "DomainError",
    "Ensemble",
    "Federation",
    "FederationConfig",
    "LearnerConfig",
    "MechanismKind",
    "PrivacyBudget",
    "fit_samme_centralized",
    "perturb",
    "run_boosting",
]

__version__ = "0.1.0"
