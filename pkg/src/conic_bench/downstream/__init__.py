"""Grading/survival harness: CV splits, random search over gradient-boosted
trees, permutation-importance feature selection, and downstream metrics."""
from .splits import CvSplit, make_cv_splits
from .hyperparams import GbtHyperparams, sample_hyperparameters
from .gbt import GbtModel, fit_gbt, predict
from .metrics import c_index, classification_metrics, qwk
from .importance import ImportanceReport, permutation_importance, select_features
from .harness import run_downstream

__all__ = [
    "CvSplit", "make_cv_splits",
    "GbtHyperparams", "sample_hyperparameters",
    "GbtModel", "fit_gbt", "predict",
    "qwk", "classification_metrics", "c_index",
    "ImportanceReport", "permutation_importance", "select_features",
    "run_downstream",
]
