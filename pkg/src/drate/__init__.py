"""Doubly robust average treatment effect estimation."""
from .core import (
    METHODS,
    MODEL_KINDS,
    AteEstimate,
    CausalDataset,
    DataError,
    EmptyArm,
    NonBinaryTreatment,
    NonFinite,
    NuisanceEstimates,
    validate_dataset,
)
from .estimators import (
    PencompConfig,
    build_match_set,
    estimate_aiptw,
    estimate_dsm,
    estimate_imp,
    estimate_iptw,
    estimate_pencomp,
    estimate_tmle,
)
from .models import fit_nuisances, select_covariates
from .simulation import MetricsRow, ScenarioSpec, compute_metrics, gen_dataset, run_replications, true_ate_oracle

__version__ = "0.1.0"

__all__ = [
    "METHODS", "MODEL_KINDS", "AteEstimate", "CausalDataset", "DataError", "EmptyArm", "MetricsRow",
    "NonBinaryTreatment", "NonFinite", "NuisanceEstimates", "PencompConfig", "ScenarioSpec", "build_match_set",
    "compute_metrics", "estimate_aiptw", "estimate_dsm", "estimate_imp", "estimate_iptw", "estimate_pencomp",
    "estimate_tmle", "fit_nuisances", "gen_dataset", "run_replications", "select_covariates", "true_ate_oracle",
    "validate_dataset",
]
