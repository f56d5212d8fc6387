"""Penalized spline of propensity imputation with bootstrap multiple imputation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from ..core import DEFAULT_PS_EPS, AteEstimate, CausalDataset
from ..inference import TooManyFailures, replicate_seed, rubin_combine, stratified_resample
from ..models.gam import ridge_gcv
from ..models.linear import FitError
from ..models.nuisance import fit_propensity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PencompConfig:
    B: int = 500
    knots: int = 10
    seed: int = 0
    max_fail: float = 0.10

    def __post_init__(self):
        if self.B < 2:
            raise ValueError("PENCOMP needs B >= 2")
        if self.knots < 3:
            raise ValueError("PENCOMP needs at least 3 knots")


def _spline_design(u: np.ndarray, X: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Intercept, linear terms ``(u, X)`` and truncated-linear terms in ``u``."""
    trunc = np.maximum(u[:, None] - knots[None, :], 0.0)
    return np.column_stack([np.ones(u.shape[0]), u, X, trunc])


@dataclass
class ArmModel:
    knots: np.ndarray
    predict_design: object
    sigma: float

    def predict(self, u, X):
        return self.predict_design(_spline_design(u, X, self.knots))


def fit_arm_model(u: np.ndarray, X: np.ndarray, y: np.ndarray, n_knots: int) -> ArmModel:
    """Outcome model for one arm: penalized spline in logit propensity plus linear covariates."""
    qs = np.arange(1, n_knots + 1) / (n_knots + 1)
    knots = np.unique(np.quantile(u, qs))
    D = _spline_design(u, X, knots)
    n = D.shape[0]
    if n <= 2 + X.shape[1]:
        raise FitError("too few units in arm for the PENCOMP outcome model")
    pen = np.r_[np.zeros(2 + X.shape[1]), np.ones(knots.size)]
    predict, rss, edf, _ = ridge_gcv(D, y, pen)
    dof = max(n - edf, 1.0)
    return ArmModel(knots, predict, float(np.sqrt(rss / dof)))


@dataclass
class PencompReplicates:
    estimates: np.ndarray
    within: np.ndarray
    n_failed: int


def pencomp_replicates(data: CausalDataset, model_kind: str, selected=None, cfg: PencompConfig = PencompConfig(),
                       ps_selected=None, eps: float = DEFAULT_PS_EPS) -> PencompReplicates:
    sel = np.arange(data.p) if selected is None else np.asarray(selected, dtype=int)
    order = data.canonical_order()
    X, A, Y = data.X[order], data.A[order], data.Y[order]
    canon = data.subset(order)
    n = data.n
    ests, within = [], []
    n_failed = 0
    for b in range(cfg.B):
        rng = np.random.default_rng(replicate_seed(cfg.seed, b))
        rows = stratified_resample(canon, rng)
        try:
            ps_model, ps_cols, _ = fit_propensity(canon, model_kind, ps_selected,
                                                  replicate_seed(cfg.seed, cfg.B + b), rows)
            e_boot = np.clip(ps_model.predict(X[rows][:, ps_cols]), eps, 1 - eps)
            e_orig = np.clip(ps_model.predict(X[:, ps_cols]), eps, 1 - eps)
            u_boot, u_orig = logit(e_boot), logit(e_orig)
            Xb, Ab, Yb = X[rows][:, sel], A[rows], Y[rows]
            y_full = {}
            sigmas = {}
            noise = rng.standard_normal(n)
            for arm in (0.0, 1.0):
                m = Ab == arm
                model = fit_arm_model(u_boot[m], Xb[m], Yb[m], cfg.knots)
                draw = model.predict(u_orig, X[:, sel]) + model.sigma * noise
                y_full[arm] = np.where(A == arm, Y, draw)
                sigmas[arm] = model.sigma
        except (FitError, np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
            log.debug("PENCOMP replicate %d failed: %s", b, exc)
            n_failed += 1
            continue
        tau_b = float(np.mean(y_full[1.0] - y_full[0.0]))
        if not np.isfinite(tau_b):
            n_failed += 1
            continue
        ests.append(tau_b)
        within.append((sigmas[1.0] ** 2 + sigmas[0.0] ** 2) / n)
    if n_failed > cfg.max_fail * cfg.B or len(ests) < 2:
        raise TooManyFailures(f"{n_failed} of {cfg.B} PENCOMP replicates failed")
    return PencompReplicates(np.asarray(ests), np.asarray(within), n_failed)


def estimate_pencomp(data: CausalDataset, model_kind: str = "glm", selected=None,
                     cfg: PencompConfig = PencompConfig(), level: float = 0.95,
                     ps_selected=None) -> AteEstimate:
    """Average of ``B`` bootstrap-imputation estimates with a Rubin's-rules interval."""
    reps = pencomp_replicates(data, model_kind, selected, cfg, ps_selected)
    sel_size = data.p if selected is None else len(selected)
    res = rubin_combine(reps.estimates, reps.within, level, df_complete=max(data.n - sel_size - 2, 1))
    flags = (f"pencomp_failed={reps.n_failed}",) if reps.n_failed else ()
    return AteEstimate("pencomp", model_kind, res.point, res.se, res.ci_lo, res.ci_hi, level, "rubin", flags)
