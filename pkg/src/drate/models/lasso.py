"""Coordinate-descent Lasso path with K-fold CV and the one-standard-error rule."""
from __future__ import annotations

import numpy as np


def _standardize(X: np.ndarray, y: np.ndarray):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd_safe
    Z[:, sd == 0] = 0.0
    return Z, y - y.mean(), mu, sd_safe


def lambda_max(X, y) -> float:
    """Smallest penalty at which every standardized coefficient is zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z, yc, _, _ = _standardize(X, y)
    return float(np.max(np.abs(Z.T @ yc)) / X.shape[0])


def lambda_grid(lam_max: float, n_lambda: int = 100, ratio: float = 1e-3) -> np.ndarray:
    return lam_max * np.logspace(0, np.log10(ratio), n_lambda)


def _cd_path(G: np.ndarray, c: np.ndarray, lambdas: np.ndarray, tol: float = 1e-7,
             max_sweeps: int = 1000) -> np.ndarray:
    """Covariance-update coordinate descent for ``0.5 b'Gb - c'b + lam |b|_1``.

    ``G`` and ``c`` are the standardized Gram matrix and correlations divided
    by ``n``. Returns coefficients with shape ``(len(lambdas), p)``.
    """
    p = G.shape[0]
    diag = np.diag(G).copy()
    b = np.zeros(p)
    grad = c.copy()  # c - G b, maintained incrementally
    out = np.empty((len(lambdas), p))
    active = diag > 0
    for k, lam in enumerate(lambdas):
        for _ in range(max_sweeps):
            max_delta = 0.0
            for j in range(p):
                if not active[j]:
                    continue
                old = b[j]
                rho = grad[j] + diag[j] * old
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / diag[j]
                if new != old:
                    delta = new - old
                    grad -= G[:, j] * delta
                    b[j] = new
                    max_delta = max(max_delta, abs(delta) * np.sqrt(diag[j]))
            if max_delta < tol:
                break
        out[k] = b
    return out


def lasso_path(X, y, lambdas=None, n_lambda: int = 100, ratio: float = 1e-3):
    """Lasso coefficients along a penalty path.

    Covariates are standardized internally; coefficients are returned on the
    original scale as ``(lambdas, intercepts, coefs)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    Z, yc, mu, sd = _standardize(X, y)
    if lambdas is None:
        lambdas = lambda_grid(float(np.max(np.abs(Z.T @ yc)) / n), n_lambda, ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    beta_std = _cd_path(G, c, lambdas)
    coefs = beta_std / sd
    intercepts = y.mean() - coefs @ mu
    return lambdas, intercepts, coefs


def cv_lasso(X, y, folds: int = 5, seed: int = 0, n_lambda: int = 100, ratio: float = 1e-3,
             fold_ids=None):
    """K-fold CV over the full-data lambda path.

    Returns a dict with ``lambdas``, ``cvm``, ``cvsd``, ``lambda_min``,
    ``lambda_1se`` and the full-data ``coef`` at ``lambda_1se``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2 * folds:
        raise ValueError(f"need n >= 2*folds, got n={n}")
    lam_max = lambda_max(X, y)
    if lam_max == 0.0:
        return {"lambdas": np.zeros(0), "cvm": np.zeros(0), "cvsd": np.zeros(0),
                "lambda_min": 0.0, "lambda_1se": 0.0, "coef": np.zeros(p)}
    lambdas = lambda_grid(lam_max, n_lambda, ratio)
    if fold_ids is None:
        rng = np.random.default_rng(seed)
        fold_ids = np.empty(n, dtype=int)
        fold_ids[rng.permutation(n)] = np.arange(n) % folds
    errs = np.empty((folds, len(lambdas)))
    for k in range(folds):
        test = fold_ids == k
        _, b0, B = lasso_path(X[~test], y[~test], lambdas)
        pred = b0[:, None] + B @ X[test].T
        errs[k] = np.mean((y[test][None, :] - pred) ** 2, axis=1)
    cvm = errs.mean(axis=0)
    cvsd = errs.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(cvm))
    threshold = cvm[i_min] + cvsd[i_min]
    # lambdas are decreasing: the first index under the threshold is the largest lambda
    i_1se = int(np.flatnonzero(cvm <= threshold)[0])
    _, _, B = lasso_path(X, y, lambdas[: i_1se + 1])
    return {"lambdas": lambdas, "cvm": cvm, "cvsd": cvsd, "lambda_min": lambdas[i_min],
            "lambda_1se": lambdas[i_1se], "coef": B[-1]}


def select_outcome_predictors(X, y, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Indices of covariates with nonzero Lasso coefficients at the 1-SE penalty."""
    res = cv_lasso(X, y, folds=folds, seed=seed)
    return np.flatnonzero(np.abs(res["coef"]) > 0)
