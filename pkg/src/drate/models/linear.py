"""Least squares, logistic IRLS and forward-stepwise GLMs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit


class FitError(RuntimeError):
    """A nuisance model could not be fitted."""


class RankDeficient(FitError):
    pass


class Underdetermined(FitError):
    pass


class SingleClass(FitError):
    pass


class SeparationWarning(UserWarning):
    pass


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.column_stack([np.ones(X.shape[0]), X])


@dataclass
class LinearModel:
    coef: np.ndarray

    def predict(self, X) -> np.ndarray:
        return _design(X) @ self.coef

    @property
    def n_params(self) -> int:
        return self.coef.shape[0]


def fit_ols(X, y) -> LinearModel:
    """Ordinary least squares with an intercept prepended to ``X``."""
    D = _design(X)
    y = np.asarray(y, dtype=float)
    n, k = D.shape
    if n <= k:
        raise Underdetermined(f"n={n} observations for {k} coefficients")
    Q, R = np.linalg.qr(D)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficient("design matrix is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y)
    return LinearModel(coef)


@dataclass
class LogisticModel:
    coef: np.ndarray
    converged: bool
    iterations: int
    separated: bool = False

    def linear_predictor(self, X) -> np.ndarray:
        return _design(X) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        # keep strictly inside (0, 1) even for separated fits
        return np.clip(expit(self.linear_predictor(X)), 1e-12, 1 - 1e-12)

    predict = predict_proba

    @property
    def n_params(self) -> int:
        return self.coef.shape[0]


def _irls(D: np.ndarray, a: np.ndarray, max_iter: int = 100, tol: float = 1e-8,
          sep_bound: float = 30.0):
    """Newton/IRLS for the Bernoulli likelihood on design ``D``.

    Returns ``(beta, converged, iterations, separated)``.
    """
    k = D.shape[1]
    beta = np.zeros(k)
    mean_a = a.mean()
    beta[0] = math.log(mean_a / (1 - mean_a))
    separated = False
    for it in range(1, max_iter + 1):
        eta = D @ beta
        mu = expit(eta)
        w = mu * (1 - mu)
        grad = D.T @ (a - mu)
        hess = (D * w[:, None]).T @ D
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(beta)) > sep_bound:
            separated = True
            return beta, False, it, separated
        if np.max(np.abs(step)) < tol:
            return beta, True, it, separated
    return beta, False, max_iter, separated


def fit_logit(X, a, max_iter: int = 100, tol: float = 1e-8) -> LogisticModel:
    """Logistic regression by IRLS on an internally standardized design.

    Divergence of any standardized coefficient beyond 30 is reported as
    separation: the fit is returned with ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    a = np.asarray(a, dtype=float)
    if a.min() == a.max():
        raise SingleClass("logistic regression needs both classes")
    n, p = X.shape
    if n <= p + 1:
        raise Underdetermined(f"n={n} observations for {p + 1} coefficients")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale == 0):
        raise RankDeficient("constant covariate column")
    Z = (X - center) / scale
    D = _design(Z)
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise RankDeficient("design matrix is rank deficient")
    beta_s, converged, iters, separated = _irls(D, a, max_iter, tol)
    if separated:
        warnings.warn("logistic fit diverged: data appear separable", SeparationWarning, stacklevel=2)
    slope = beta_s[1:] / scale
    intercept = beta_s[0] - center @ slope
    return LogisticModel(np.concatenate([[intercept], slope]), converged, iters, separated)


def fit_intercept_only(y, family: str = "gaussian"):
    """Constant model: mean for gaussian, logit of the mean for binomial."""
    y = np.asarray(y, dtype=float)
    m = y.mean()
    if family == "binomial":
        m = min(max(m, 1e-12), 1 - 1e-12)
        return LogisticModel(np.array([math.log(m / (1 - m))]), True, 0)
    return LinearModel(np.array([m]))


@dataclass
class SubsetModel:
    """A model fitted on a subset of columns of the full covariate matrix."""

    columns: np.ndarray
    model: object

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return self.model.predict(X[:, self.columns])


def _gaussian_aic(model: LinearModel, X, y) -> float:
    n = y.shape[0]
    rss = float(np.sum((y - model.predict(X)) ** 2))
    rss = max(rss, 1e-300)
    return n * math.log(rss / n) + 2 * (model.n_params + 1)


def _binomial_aic(model: LogisticModel, X, a) -> float:
    p = model.predict_proba(X)
    ll = float(np.sum(a * np.log(p) + (1 - a) * np.log1p(-p)))
    return -2 * ll + 2 * model.n_params


def fit_stepwise(X, y, family: str = "gaussian", max_terms: int | None = None) -> SubsetModel:
    """Forward selection by AIC, at most ``min(p, 15)`` terms."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    cap = min(p, 15) if max_terms is None else min(p, max_terms)
    if family == "binomial":
        fit = lambda cols: fit_logit(X[:, cols], y) if cols else fit_intercept_only(y, "binomial")
        aic = _binomial_aic
    else:
        fit = lambda cols: fit_ols(X[:, cols], y) if cols else fit_intercept_only(y)
        aic = _gaussian_aic

    chosen: list[int] = []
    best_model = fit(chosen)
    best_aic = aic(best_model, X[:, chosen], y)
    while len(chosen) < cap:
        step_best = None
        for j in range(p):
            if j in chosen:
                continue
            cols = chosen + [j]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SeparationWarning)
                    m = fit(cols)
            except FitError:
                continue
            score = aic(m, X[:, cols], y)
            if step_best is None or score < step_best[0]:
                step_best = (score, j, m)
        if step_best is None or step_best[0] >= best_aic:
            break
        best_aic, j, best_model = step_best
        chosen.append(j)
    return SubsetModel(np.array(chosen, dtype=int), best_model)
