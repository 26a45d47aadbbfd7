"""Glitch detection, cleaning strategies and statistical distortion for hierarchical time series."""
from ._accel import backend
from .cleaning import STRATEGIES, Strategy, apply_strategy, fit_gaussian, gaussian_impute, mean_replace, winsorize
from .core import Dataset, NodeId, Observation, TimeSeries, Transform, load_dataset, save_dataset
from .distortion import BinningSpec, Histogram, build_histogram, emd, emd_flow, statistical_distortion
from .experiment import ExperimentConfig, ReplicationResult, extract_ideal, run_experiment, summarize
from .glitch import (
    DEFAULT_WEIGHTS,
    ConstraintRule,
    OutlierLimits,
    cell_glitch_index,
    default_rules,
    fit_outlier_limits,
    glitch_percentages,
    normalized_glitch_score,
    series_glitch_rank,
)
from .synth import SynthSpec, generate, reference_dataset

__version__ = "0.1.0"

__all__ = [
    "apply_strategy",
    "backend",
    "BinningSpec",
    "build_histogram",
    "cell_glitch_index",
    "ConstraintRule",
    "Dataset",
    "default_rules",
    "DEFAULT_WEIGHTS",
    "emd",
    "emd_flow",
    "ExperimentConfig",
    "extract_ideal",
    "fit_gaussian",
    "fit_outlier_limits",
    "gaussian_impute",
    "generate",
    "glitch_percentages",
    "Histogram",
    "load_dataset",
    "mean_replace",
    "NodeId",
    "normalized_glitch_score",
    "Observation",
    "OutlierLimits",
    "reference_dataset",
    "ReplicationResult",
    "run_experiment",
    "save_dataset",
    "series_glitch_rank",
    "statistical_distortion",
    "STRATEGIES",
    "Strategy",
    "summarize",
    "SynthSpec",
    "TimeSeries",
    "Transform",
    "winsorize",
]
