"""Causal debiasing for credit scoring: proxy screening, counterfactual inference, audits."""
from .dataset import (
    Categorical,
    Column,
    ColumnRole,
    Dataset,
    Numeric,
    Schema,
    kfold,
    load_csv,
    split,
)
from .errors import CreditDebiasError
from .evaluation import auc, discrimination_report, group_auc, significance
from .experiment import ExperimentConfig, ExperimentResult, run_experiment
from .learner import GbdtParams, TrainedModel, train, train_logistic
from .pipeline import DecisionPolicy, ModelMode, decide, feature_set, paired_test, score, train_mode
from .scm import ScmSpec, check_ci, discretize, exact_query, sample
from .screening import Group, mask_violations, overlap_test, screen_proxies

__version__ = "0.1.0"

__all__ = [
    "Categorical", "Column", "ColumnRole", "Dataset", "Numeric", "Schema", "kfold", "load_csv",
    "split", "CreditDebiasError", "auc", "discrimination_report", "group_auc", "significance",
    "ExperimentConfig", "ExperimentResult", "run_experiment", "GbdtParams", "TrainedModel",
    "train", "train_logistic", "DecisionPolicy", "ModelMode", "decide", "feature_set",
    "paired_test", "score", "train_mode", "ScmSpec", "check_ci", "discretize", "exact_query",
    "sample", "Group", "mask_violations", "overlap_test", "screen_proxies",
]
