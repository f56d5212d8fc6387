from .gam import AdditiveModel, fit_gam
from .gbt import TreeEnsembleModel, fit_gbt
from .lasso import cv_lasso, lambda_max, lasso_path, select_outcome_predictors
from .linear import (
    FitError,
    LinearModel,
    LogisticModel,
    RankDeficient,
    SeparationWarning,
    SingleClass,
    Underdetermined,
    fit_logit,
    fit_ols,
    fit_stepwise,
)
from .nuisance import fit_model, fit_nuisances, fit_propensity, select_covariates
from .superlearner import DegenerateLibrary, StackedModel, fit_superlearner, simplex_least_squares

__all__ = [
    "AdditiveModel", "DegenerateLibrary", "FitError", "LinearModel", "LogisticModel",
    "RankDeficient", "SeparationWarning", "SingleClass", "StackedModel", "TreeEnsembleModel",
    "Underdetermined", "cv_lasso", "fit_gam", "fit_gbt", "fit_logit", "fit_model",
    "fit_nuisances", "fit_ols", "fit_propensity", "fit_stepwise", "fit_superlearner",
    "lambda_max", "lasso_path", "select_covariates", "select_outcome_predictors",
    "simplex_least_squares",
]
