"""Speed-climbing results analysis: preprocessing, crossed random-effects
models for best times and falls, model comparison and simulation."""

from .data import AttemptRecord, ClimberProfile, Dataset, Event, Outcome, RoundKind, validate
from .design import LADDER, LADDER_NAMES, ModelSpec, RandomTerm, falls_spec, ladder_spec
from .glmm import FittedGLMM, fit_binomial, wald_test
from .ingest import load_dataset, write_dataset
from .lmm import FittedLMM, compose_coefficients, effect_multiplier, fit, profiled_deviance, wald_ci
from .preprocess import build_fall_rows, build_model_rows, discipline_stats, propagate_skip
from .selection import bic, compare_ladder, lrt
from .simulate import PUBLISHED_TRUTH, SimulationParams, recovery_report, simulate_binary, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "AttemptRecord", "ClimberProfile", "Dataset", "Event", "Outcome", "RoundKind", "validate",
    "LADDER", "LADDER_NAMES", "ModelSpec", "RandomTerm", "falls_spec", "ladder_spec",
    "FittedGLMM", "fit_binomial", "wald_test", "load_dataset", "write_dataset",
    "FittedLMM", "compose_coefficients", "effect_multiplier", "fit", "profiled_deviance", "wald_ci",
    "build_fall_rows", "build_model_rows", "discipline_stats", "propagate_skip",
    "bic", "compare_ladder", "lrt",
    "PUBLISHED_TRUTH", "SimulationParams", "recovery_report", "simulate_binary", "simulate_dataset",
]
