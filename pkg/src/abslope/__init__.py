"""Adaptive Bayesian SLOPE for sparse regression with missing covariates.

``fit_abslope`` runs the stochastic approximation EM with Gibbs draws;
``fit_slobe`` is the faster deterministic variant.
"""
from ._accel import backend_name
from .core import (
    Dataset,
    DegenerateConditionalError,
    Hyperparams,
    LambdaSequence,
    ModelState,
    ScalingInfo,
    UnusableColumnError,
    bh_lambda,
    initial_standardize,
    read_csv,
    rescale_iteration,
)
from .predict import predict_batch, predict_row, relative_error
from .saem import FitResult, fit_abslope
from .simulate import SimScenario, run_scenario
from .slobe import fit_slobe
from .slope import prox_sorted_l1, solve_slope, solve_weighted_slope

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DegenerateConditionalError",
    "FitResult",
    "Hyperparams",
    "LambdaSequence",
    "ModelState",
    "ScalingInfo",
    "SimScenario",
    "UnusableColumnError",
    "backend_name",
    "bh_lambda",
    "fit_abslope",
    "fit_slobe",
    "initial_standardize",
    "predict_batch",
    "predict_row",
    "prox_sorted_l1",
    "read_csv",
    "relative_error",
    "rescale_iteration",
    "run_scenario",
    "solve_slope",
    "solve_weighted_slope",
]
