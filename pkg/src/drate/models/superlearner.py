"""Cross-validated stacking ensemble with simplex-constrained weights."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gam import fit_gam
from .gbt import fit_gbt
from .linear import FitError, fit_logit, fit_ols, fit_stepwise

log = logging.getLogger(__name__)


class DegenerateLibrary(FitError):
    pass


@dataclass(frozen=True)
class Learner:
    name: str
    fit: Callable  # (X, y, family, seed) -> model with .predict


def _glm(X, y, family, seed):
    return fit_logit(X, y) if family == "binomial" else fit_ols(X, y)


def _stepwise(X, y, family, seed):
    return fit_stepwise(X, y, family)


def _gam(X, y, family, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_gam(X, y, family)


def _gbt(X, y, family, seed):
    return fit_gbt(X, y, family, seed=seed)


GLM = Learner("glm", _glm)
STEPWISE = Learner("stepwise", _stepwise)
GAM = Learner("gam", _gam)
GBT = Learner("gbt", _gbt)
DEFAULT_LIBRARY = (GLM, STEPWISE, GAM, GBT)


@dataclass
class StackedModel:
    names: list
    models: list
    weights: np.ndarray
    V: int
    family: str
    cv_risk: np.ndarray  # per learner, same folds
    stack_cv_risk: float
    cv_predictions: np.ndarray

    def predict(self, X) -> np.ndarray:
        preds = np.column_stack([m.predict(X) for m in self.models])
        out = preds @ self.weights
        if self.family == "binomial":
            out = np.clip(out, 1e-12, 1 - 1e-12)
        return out

    predict_proba = predict


def simplex_least_squares(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimize ``||y - Z w||^2`` over the probability simplex.

    Exact: every support is solved under the sum-to-one constraint and the
    best feasible candidate kept. Ties go to smaller supports, then to
    earlier columns, so a learner duplicated later in the library never
    takes weight from the original.
    """
    n, L = Z.shape
    if L > 12:
        raise ValueError("support enumeration is limited to 12 learners")
    best_w, best_risk = None, np.inf
    for size in range(1, L + 1):
        for S in itertools.combinations(range(L), size):
            S = list(S)
            Zs = Z[:, S]
            if size == 1:
                w_s = np.ones(1)
            else:
                G = Zs.T @ Zs
                kkt = np.zeros((size + 1, size + 1))
                kkt[:size, :size] = 2 * G
                kkt[:size, size] = 1.0
                kkt[size, :size] = 1.0
                rhs = np.r_[2 * Zs.T @ y, 1.0]
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
                w_s = sol[:size]
                if np.any(w_s < -1e-12):
                    continue
                w_s = np.maximum(w_s, 0.0)
                if w_s.sum() <= 0:
                    continue
                w_s = w_s / w_s.sum()
            risk = float(np.mean((y - Zs @ w_s) ** 2))
            if best_w is None or risk < best_risk - 1e-12 * max(1.0, abs(best_risk)):
                best_risk = risk
                best_w = np.zeros(L)
                best_w[S] = w_s
    return best_w


def make_folds(y: np.ndarray, V: int, seed: int, stratify: bool, groups=None) -> np.ndarray:
    """Fold labels; rows sharing a ``groups`` label always land in the same fold."""
    if groups is not None:
        _, first, inv = np.unique(np.asarray(groups), return_index=True, return_inverse=True)
        if first.size < y.shape[0]:
            return make_folds(y[first], V, seed, stratify)[inv.ravel()]
    n = y.shape[0]
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    if stratify:
        start = 0
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            idx = idx[rng.permutation(idx.size)]
            folds[idx] = (np.arange(idx.size) + start) % V
            start += idx.size
    else:
        folds[rng.permutation(n)] = np.arange(n) % V
    return folds


def fit_superlearner(X, y, family: str = "gaussian", V: int = 10, seed: int = 0,
                     library=DEFAULT_LIBRARY, groups=None) -> StackedModel:
    """Stack the library on V-fold cross-validated predictions.

    ``groups`` keeps repeated units (e.g. bootstrap duplicates) in one fold so
    the cross-validated risk is not flattered by copies of the held-out rows.

    Learners that fail on any fold are dropped; if all fail,
    :class:`DegenerateLibrary` is raised.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 5 * V:
        raise FitError(f"superlearner needs n >= 5*V, got n={n}, V={V}")
    folds = make_folds(y, V, seed, stratify=(family == "binomial"), groups=groups)
    seeds = np.random.SeedSequence(seed).generate_state(V + 1)

    Z = np.full((n, len(library)), np.nan)
    ok = np.ones(len(library), dtype=bool)
    for v in range(V):
        test = folds == v
        for l, learner in enumerate(library):
            if not ok[l]:
                continue
            try:
                m = learner.fit(X[~test], y[~test], family, int(seeds[v]))
                Z[test, l] = m.predict(X[test])
            except (FitError, np.linalg.LinAlgError, ValueError) as exc:
                log.debug("learner %s failed on fold %d: %s", learner.name, v, exc)
                ok[l] = False
    ok &= np.all(np.isfinite(Z), axis=0)
    if not ok.any():
        raise DegenerateLibrary("every learner in the library failed")

    keep = np.flatnonzero(ok)
    Zk = Z[:, keep]
    w = simplex_least_squares(Zk, y)
    models, names, weights, cols = [], [], [], []
    for j, l in enumerate(keep):
        learner = library[l]
        try:
            m = learner.fit(X, y, family, int(seeds[V]))
        except (FitError, np.linalg.LinAlgError, ValueError):
            continue
        models.append(m)
        names.append(learner.name)
        weights.append(w[j])
        cols.append(j)
    if not models:
        raise DegenerateLibrary("no learner could be refitted on the full data")
    weights = np.asarray(weights)
    if weights.sum() <= 0:
        # every positively weighted learner failed to refit: fall back to the best survivor
        risks = np.mean((y[:, None] - Zk[:, cols]) ** 2, axis=0)
        weights = np.zeros(len(cols))
        weights[int(np.argmin(risks))] = 1.0
    weights = weights / weights.sum()
    cv_risk = np.mean((y[:, None] - Zk) ** 2, axis=0)
    stack_risk = float(np.mean((y - Zk[:, cols] @ weights) ** 2))
    return StackedModel(names, models, weights, V, family, cv_risk, stack_risk, Zk)
