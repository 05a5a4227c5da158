"""Sparse deformation sensing: simulate plate deformations, pick a small
set of sensor sites, and localize contact forces from their readings."""

from .errors import (ConditioningError, ConvergenceError, DomainError,
                     SparseTouchError, ValidationError)
from .plate import (PlateSpec, SamplingGrid, default_plate_spec,
                    default_sampling_grid, deflection, generate_dataset,
                    rectangular_grid, surface_strain)
from .dataset import (DeformationDataset, FoldPlan, StandardizationStats,
                      load_dataset, make_folds, save_dataset, split,
                      standardize)
from .filtering import (FilterConfig, com_filter, default_com_radius,
                        filter_pipeline, margin_filter)
from .svr import (ForceLocator, SvrHyperParams, SvrModel, cv_position_error,
                  euclidean_error, fit_locator, grid_search_cv, load_locator,
                  locate_force, rbf_kernel_matrix, save_locator,
                  solver_backend, train_svr)
from .gp import GpKernelParams, GpModel, gp_grid_search, gp_posterior
from .placement import (SelectionGoal, SelectionResult, condition_number,
                        cs_reconstruct, entropy_select, greedy_svr_select,
                        load_selection, mi_select, pca, pca_qr_select,
                        qr_column_pivoting, reconstruction_error,
                        save_selection)
from .evaluation import (EvaluationReport, dataset_fingerprint, emit_report,
                         error_vs_budget, failure_robustness,
                         force_interval_report)

__version__ = "0.1.0"

__all__ = [
    "ConditioningError", "ConvergenceError", "DomainError", "SparseTouchError",
    "ValidationError",
    "PlateSpec", "SamplingGrid", "default_plate_spec", "default_sampling_grid",
    "deflection", "generate_dataset", "rectangular_grid", "surface_strain",
    "DeformationDataset", "FoldPlan", "StandardizationStats", "load_dataset",
    "make_folds", "save_dataset", "split", "standardize",
    "FilterConfig", "com_filter", "default_com_radius", "filter_pipeline",
    "margin_filter",
    "ForceLocator", "SvrHyperParams", "SvrModel", "cv_position_error",
    "euclidean_error", "fit_locator", "grid_search_cv", "load_locator",
    "locate_force", "rbf_kernel_matrix", "save_locator", "solver_backend",
    "train_svr",
    "GpKernelParams", "GpModel", "gp_grid_search", "gp_posterior",
    "SelectionGoal", "SelectionResult", "condition_number", "cs_reconstruct",
    "entropy_select", "greedy_svr_select", "load_selection", "mi_select",
    "pca", "pca_qr_select", "qr_column_pivoting", "reconstruction_error",
    "save_selection",
    "EvaluationReport", "dataset_fingerprint", "emit_report",
    "error_vs_budget", "failure_robustness", "force_interval_report",
    "__version__",
]
