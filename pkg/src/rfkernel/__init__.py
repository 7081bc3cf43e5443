"""Random forests as kernel generators for ridge regression and survival SVMs."""

from .data import SurvivalData
from .forest import Forest, TreeParams, fit_forest, fit_tree, predict_forest, terminal_leaf_ids
from .kernels import KernelMatrix, laplace_kernel, mantel_statistic, rf_kernel
from .krr import KrrModel, classify_krr, fit_krr, predict_krr, select_lambda
from .metrics import MetricValue, accuracy, c_index, mse
from .ssvm import SsvmModel, prognostic_index, solve_ssvm

__version__ = "0.1.0"

__all__ = [
    "Forest", "KernelMatrix", "KrrModel", "MetricValue", "SsvmModel", "SurvivalData", "TreeParams",
    "accuracy", "c_index", "classify_krr", "fit_forest", "fit_krr", "fit_tree", "laplace_kernel",
    "mantel_statistic", "mse", "predict_forest", "predict_krr", "prognostic_index", "rf_kernel",
    "select_lambda", "solve_ssvm", "terminal_leaf_ids",
]
