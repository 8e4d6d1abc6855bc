"""Differentially private AIPW estimation of average treatment effects with valid confidence intervals."""

from .aipw import ScoreVector, estimate_ate, score_gamma
from .core import Dataset, DomainBounds, PrivacyBudget, RngStream, Sample, load_csv, validate_dataset
from .errors import PrivateAteError
from .nuisance import KernelConfig, LearnerConfig, MlpConfig, fit_nuisance
from .privatize import DpAteReport, estimate_private
from .sensitivity import OptimizerConfig
from .synthdata import DATASET1, DATASET2, RCT, gen_dataset, gen_rct

__version__ = "0.1.0"

__all__ = [
    "DATASET1", "DATASET2", "RCT", "Dataset", "DomainBounds", "DpAteReport", "KernelConfig",
    "LearnerConfig", "MlpConfig", "OptimizerConfig", "PrivacyBudget", "PrivateAteError", "RngStream",
    "Sample", "ScoreVector", "estimate_ate", "estimate_private", "fit_nuisance", "gen_dataset",
    "gen_rct", "load_csv", "score_gamma", "validate_dataset",
]
