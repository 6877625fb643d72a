"""Spillover-effect estimation in egocentric-network randomized trials
when network membership is misclassified.

Submodules
----------
model       data types, CSV ingestion, fourfold and validation tables
estimators  naive ASpE, matrix and inverse-matrix corrections, analytic bias
variance    delta method, ICC / design effect, network bootstrap
mle         observed-data likelihood with a network random intercept
sim         simulation engine and scenario grids
cli         ``enrtspill`` command-line entry point
"""
__version__ = "0.1.0"

from .errors import EnrtError, EstimationError, InputError
from .model import (
    EffectEstimate,
    EnrtData,
    EnrtRecord,
    FourfoldTable,
    MisclassModel,
    StudyDesign,
    ValidationTable,
    build_fourfold,
    build_validation_table,
    read_csv,
    validate_records,
    write_csv,
)
from .estimators import (
    PredictiveValues,
    analytic_bias,
    check_matrix_constraints,
    estimate_misclassification,
    estimate_ppv_npv,
    inverse_matrix_correct,
    matrix_correct,
    naive_aspe,
    nondifferential_test,
)
from .variance import (
    BootstrapSpec,
    delta_variance,
    design_effect,
    estimate_icc,
    network_bootstrap,
)
from .mle import MleConfig, fit_mle
from .sim import GridSpec, ScenarioSpec, generate_dataset, run_grid, run_scenario

__all__ = [
    "BootstrapSpec", "EffectEstimate", "EnrtData", "EnrtError", "EnrtRecord", "EstimationError",
    "FourfoldTable", "GridSpec", "InputError", "MisclassModel", "MleConfig", "PredictiveValues",
    "ScenarioSpec", "StudyDesign", "ValidationTable", "analytic_bias", "build_fourfold",
    "build_validation_table", "check_matrix_constraints", "delta_variance", "design_effect",
    "estimate_icc", "estimate_misclassification", "estimate_ppv_npv", "fit_mle", "generate_dataset",
    "inverse_matrix_correct", "matrix_correct", "naive_aspe", "network_bootstrap",
    "nondifferential_test", "read_csv", "run_grid", "run_scenario", "validate_records", "write_csv",
]
