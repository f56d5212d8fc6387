"""Propensity and outcome models feeding every estimator."""
from __future__ import annotations

import warnings

import numpy as np

from ..core import DEFAULT_PS_EPS, MODEL_KINDS, CausalDataset, NuisanceEstimates
from .gam import fit_gam
from .lasso import select_outcome_predictors
from .linear import SeparationWarning, fit_intercept_only, fit_logit, fit_ols
from .superlearner import fit_superlearner


def select_covariates(data: CausalDataset, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Union of the Lasso (1-SE) outcome-predictor selections of both arms."""
    order = data.canonical_order()
    X, A, Y = data.X[order], data.A[order], data.Y[order]
    chosen = set()
    for k, arm in enumerate((1.0, 0.0)):
        rows = A == arm
        if rows.sum() < 2 * folds:
            continue
        sel = select_outcome_predictors(X[rows], Y[rows], folds=folds, seed=seed + k)
        chosen.update(int(j) for j in sel)
    return np.array(sorted(chosen), dtype=int)


def fit_model(X, y, kind: str, family: str, seed: int = 0, groups=None):
    """Fit one nuisance model of the given kind; empty ``X`` gives a constant model."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] == 0:
        return fit_intercept_only(y, family)
    if kind == "glm":
        return fit_logit(X, y) if family == "binomial" else fit_ols(X, y)
    if kind == "gam":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fit_gam(X, y, family)
    if kind == "sl":
        return fit_superlearner(X, y, family, seed=seed, groups=groups)
    raise ValueError(f"unknown model kind {kind!r}")


def _predict(model, X, family):
    if X.shape[1] == 0:
        X = np.zeros((X.shape[0], 0))
    return model.predict(X)


def fit_propensity(data: CausalDataset, kind: str, columns=None, seed: int = 0, rows=None):
    """Fit the treatment model on ``rows`` (default all) and return ``(model, flags)``."""
    cols = np.arange(data.p) if columns is None else np.asarray(columns, dtype=int)
    rows = data.canonical_order() if rows is None else rows
    flags = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SeparationWarning)
        model = fit_model(data.X[rows][:, cols], data.A[rows], kind, "binomial", seed, data.ids[rows])
    if any(issubclass(w.category, SeparationWarning) for w in caught):
        flags.append("ps_separation")
    return model, cols, flags


def fit_nuisances(data: CausalDataset, model_kind: str = "glm", selected=None, seed: int = 0,
                  eps: float = DEFAULT_PS_EPS, ps_selected=None) -> NuisanceEstimates:
    """Fit the propensity model and the two arm-specific outcome models.

    The propensity model uses ``ps_selected`` columns (default: all); outcome
    models use ``selected`` (default: all), fitted separately on treated and
    control units. An empty selection yields an intercept-only model.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    sel = np.arange(data.p) if selected is None else np.asarray(selected, dtype=int)
    s_ps, s_m1, s_m0 = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    order = data.canonical_order()

    ps_model, ps_cols, flags = fit_propensity(data, model_kind, ps_selected, s_ps, order)
    e_raw = _predict(ps_model, data.X[:, ps_cols], "binomial")
    if ps_cols.size == 0:
        flags.append("intercept_only_ps")

    preds = {}
    Xs = data.X[:, sel]
    for arm, s in ((1.0, s_m1), (0.0, s_m0)):
        rows = order[data.A[order] == arm]
        model = fit_model(Xs[rows], data.Y[rows], model_kind, "gaussian", s, data.ids[rows])
        preds[arm] = _predict(model, Xs, "gaussian")
    if sel.size == 0:
        flags.append("intercept_only_outcome")
    return NuisanceEstimates.build(e_raw, preds[1.0], preds[0.0], model_kind, eps, flags)
