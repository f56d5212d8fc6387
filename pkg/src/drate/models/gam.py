"""Penalized natural-cubic-spline additive models with GCV smoothing selection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .linear import RankDeficient, Underdetermined

KNOT_QUANTILES = (0.05, 0.275, 0.5, 0.725, 0.95)
LAMBDA_GRID = np.logspace(-4, 4, 20)


def natural_spline_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Truncated-power natural cubic spline basis without the constant.

    Columns are ``x`` followed by ``len(knots) - 2`` nonlinear terms, each
    linear beyond the boundary knots.
    """
    x = np.asarray(x, dtype=float)
    K = len(knots)

    def d(k):
        return (np.maximum(x - knots[k], 0.0) ** 3 - np.maximum(x - knots[-1], 0.0) ** 3) / (
            knots[-1] - knots[k])

    d_last = d(K - 2)
    cols = [x] + [d(k) - d_last for k in range(K - 2)]
    return np.column_stack(cols)


@dataclass
class SmoothTerm:
    column: int
    knots: np.ndarray | None  # None: enters linearly

    @property
    def basis_dim(self) -> int:
        # counts the constant absorbed into the global intercept
        return 2 if self.knots is None else len(self.knots)

    def expand(self, X: np.ndarray) -> np.ndarray:
        x = X[:, self.column]
        if self.knots is None:
            return x.reshape(-1, 1)
        return natural_spline_basis(x, self.knots)


@dataclass
class AdditiveModel:
    terms: list
    center: np.ndarray
    scale: np.ndarray
    penalized: np.ndarray  # bool mask over basis columns (intercept excluded)
    coef: np.ndarray  # intercept first
    lam: float
    family: str
    gcv: np.ndarray

    @property
    def lambdas(self) -> dict:
        """Ridge penalty per smooth term (a single GCV-selected value is shared)."""
        return {t.column: self.lam for t in self.terms if t.knots is not None}

    def _basis(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if not self.terms:
            return np.ones((X.shape[0], 1))
        B = np.column_stack([t.expand(X) for t in self.terms])
        B = (B - self.center) / self.scale
        return np.column_stack([np.ones(X.shape[0]), B])

    def linear_predictor(self, X) -> np.ndarray:
        return self._basis(X) @ self.coef

    def predict(self, X) -> np.ndarray:
        eta = self.linear_predictor(X)
        if self.family == "binomial":
            return np.clip(expit(eta), 1e-12, 1 - 1e-12)
        return eta

    predict_proba = predict


def _build_terms(X: np.ndarray, n_knots: int) -> list:
    qs = np.linspace(KNOT_QUANTILES[0], KNOT_QUANTILES[-1], n_knots) if n_knots != 5 else KNOT_QUANTILES
    terms = []
    for j in range(X.shape[1]):
        x = X[:, j]
        uniq = np.unique(x)
        if uniq.size <= 2:
            terms.append(SmoothTerm(j, None))
            continue
        knots = np.unique(np.quantile(x, qs))
        if knots.size < 3:
            terms.append(SmoothTerm(j, None))
        else:
            terms.append(SmoothTerm(j, knots))
    return terms


def _solve(M, rhs, lam, pen):
    A = M + lam * np.diag(pen)
    try:
        return np.linalg.solve(A, rhs), A
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, rhs, rcond=None)[0], A


def fit_gam(X, y, family: str = "gaussian", n_knots: int = 5, lambdas=LAMBDA_GRID,
            max_iter: int = 50, tol: float = 1e-8) -> AdditiveModel:
    """Fit an additive model by penalized least squares or penalized IRLS.

    Continuous covariates get a natural cubic spline basis with knots at fixed
    quantiles; binary covariates enter linearly. A ridge penalty on the
    nonlinear basis coefficients is chosen by GCV over ``lambdas``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if p and n < 10 * p:
        warnings.warn(f"fit_gam: n={n} is small for p={p} covariates", RuntimeWarning, stacklevel=2)
    if n < 3:
        raise Underdetermined("too few observations for an additive model")

    terms = _build_terms(X, n_knots)
    if terms:
        blocks = [t.expand(X) for t in terms]
        raw = np.column_stack(blocks)
        pen_mask = np.concatenate([
            np.r_[False, np.ones(b.shape[1] - 1, dtype=bool)] for b in blocks])
        center = raw.mean(axis=0)
        scale = raw.std(axis=0)
        if np.any(scale <= 1e-12 * np.maximum(1.0, np.abs(center))):
            raise RankDeficient("constant basis column")
        B = np.column_stack([np.ones(n), (raw - center) / scale])
    else:
        center = scale = np.zeros(0)
        pen_mask = np.zeros(0, dtype=bool)
        B = np.ones((n, 1))
    pen = np.r_[0.0, pen_mask.astype(float)]
    unpen = B[:, pen == 0]
    if np.linalg.matrix_rank(unpen) < unpen.shape[1]:
        raise RankDeficient("unpenalized part of the basis is rank deficient")

    lambdas = np.asarray(lambdas, dtype=float)
    gcv = np.empty(len(lambdas))
    coefs = []
    if family == "gaussian":
        M = B.T @ B / n
        rhs = B.T @ y / n
        for k, lam in enumerate(lambdas):
            beta, A = _solve(M, rhs, lam, pen)
            edf = np.trace(np.linalg.solve(A, M))
            rss = float(np.sum((y - B @ beta) ** 2))
            gcv[k] = n * rss / max(n - edf, 1e-8) ** 2
            coefs.append(beta)
    elif family == "binomial":
        if y.min() == y.max():
            raise Underdetermined("binomial additive model needs both classes")
        beta = np.zeros(B.shape[1])
        m = y.mean()
        beta[0] = np.log(m / (1 - m))
        # warm start from the most penalized fit down the grid
        order = np.argsort(lambdas)[::-1]
        for k in order:
            lam = lambdas[k]
            for _ in range(max_iter):
                eta = B @ beta
                mu = np.clip(expit(eta), 1e-10, 1 - 1e-10)
                w = mu * (1 - mu)
                z = eta + (y - mu) / w
                M = (B * w[:, None]).T @ B / n
                new, A = _solve(M, (B * w[:, None]).T @ z / n, lam, pen)
                done = np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(beta)))
                beta = new
                if done or np.max(np.abs(beta)) > 50:
                    break
            mu = np.clip(expit(B @ beta), 1e-12, 1 - 1e-12)
            w = mu * (1 - mu)
            M = (B * w[:, None]).T @ B / n
            edf = np.trace(np.linalg.solve(M + lam * np.diag(pen), M))
            dev = -2 * float(np.sum(y * np.log(mu) + (1 - y) * np.log1p(-mu)))
            gcv[k] = n * dev / max(n - edf, 1e-8) ** 2
            coefs.append((k, beta.copy()))
        coefs = [b for _, b in sorted(coefs, key=lambda t: t[0])]
    else:
        raise ValueError(f"unknown family {family!r}")

    best = int(np.argmin(gcv))
    return AdditiveModel(terms, center, scale, pen_mask, coefs[best], float(lambdas[best]), family, gcv)


def ridge_gcv(D: np.ndarray, y: np.ndarray, penalized: np.ndarray, lambdas=LAMBDA_GRID):
    """Penalized least squares with a ridge on ``penalized`` columns, lambda by GCV.

    ``D`` must already contain an intercept column. Columns other than the
    intercept are standardized before penalizing. Returns ``(predict, rss,
    edf, lam)`` where ``predict`` maps a raw design to fitted values.
    """
    n, k = D.shape
    center = np.zeros(k)
    scale = np.ones(k)
    sd = D.std(axis=0)
    nonconst = sd > 1e-12 * np.maximum(1.0, np.abs(D.mean(axis=0)))
    center[nonconst] = D[:, nonconst].mean(axis=0)
    scale[nonconst] = sd[nonconst]
    Ds = (D - center) / scale
    Ds[:, ~nonconst] = D[:, ~nonconst]
    pen = np.asarray(penalized, dtype=float)
    M = Ds.T @ Ds / n
    rhs = Ds.T @ y / n
    best = None
    for lam in np.asarray(lambdas, dtype=float):
        beta, A = _solve(M, rhs, lam, pen)
        edf = float(np.trace(np.linalg.solve(A, M)))
        rss = float(np.sum((y - Ds @ beta) ** 2))
        score = n * rss / max(n - edf, 1e-8) ** 2
        if best is None or score < best[0]:
            best = (score, beta, rss, edf, float(lam))
    _, beta, rss, edf, lam = best

    def predict(Dnew):
        Dn = (np.asarray(Dnew, dtype=float) - center) / scale
        Dn[:, ~nonconst] = np.asarray(Dnew, dtype=float)[:, ~nonconst]
        return Dn @ beta

    return predict, rss, edf, lam
