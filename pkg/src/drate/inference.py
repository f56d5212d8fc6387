"""Variance and interval machinery: bootstrap, influence curves, wild bootstrap, Rubin's rules."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .core import CausalDataset, NuisanceEstimates

log = logging.getLogger(__name__)

INTERVAL_METHODS = ("percentile", "normal_ic", "wild", "rubin")


class TooManyFailures(RuntimeError):
    pass


@dataclass(frozen=True)
class IntervalSpec:
    level: float = 0.95
    B: int = 500
    method: str = "percentile"

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.method not in INTERVAL_METHODS:
            raise ValueError(f"unknown interval method {self.method!r}")
        if self.method != "normal_ic" and self.B < 2:
            raise ValueError("resampling needs B >= 2")


def replicate_seed(seed: int, b: int) -> int:
    """Seed of replicate ``b``; a pure function of ``(seed, b)``."""
    return int(np.random.SeedSequence([int(seed), int(b)]).generate_state(1)[0])


def normal_interval(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    z = stats.norm.ppf(0.5 + level / 2)
    return point - z * se, point + z * se


def percentile_interval(reps: np.ndarray, level: float = 0.95):
    alpha = 1 - level
    lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2], axis=0)
    return lo, hi


def stratified_resample(data: CausalDataset, rng: np.random.Generator) -> np.ndarray:
    """Row indices of a bootstrap sample drawn with replacement within each arm.

    Units are drawn from the id-sorted order, so the sample does not depend
    on how rows happen to be arranged.
    """
    order = data.canonical_order()
    parts = []
    for arm in (0.0, 1.0):
        idx = order[data.A[order] == arm]
        parts.append(idx[rng.integers(0, idx.size, idx.size)])
    return np.concatenate(parts)


@dataclass
class BootstrapResult:
    se: np.ndarray | float
    ci_lo: np.ndarray | float
    ci_hi: np.ndarray | float
    replicates: np.ndarray
    n_failed: int


def bootstrap_replicates(data: CausalDataset, recipe: Callable, B: int, seed: int,
                         max_fail: float = 0.10, executor=None) -> tuple[np.ndarray, int]:
    """Run ``recipe(resampled_dataset, replicate_seed)`` on ``B`` stratified resamples.

    Failed replicates (any exception derived from ``Exception`` other than
    programming errors) are dropped and counted.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")

    def one(b):
        rng = np.random.default_rng(replicate_seed(seed, b))
        rows = stratified_resample(data, rng)
        # original ids mark duplicates for group-aware cross-validation
        boot = data.subset(rows)
        try:
            return np.atleast_1d(np.asarray(recipe(boot, replicate_seed(seed, b + B)), dtype=float))
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.debug("bootstrap replicate %d failed: %s", b, exc)
            return None

    results = list(executor.map(one, range(B))) if executor is not None else [one(b) for b in range(B)]
    good = [r for r in results if r is not None and np.all(np.isfinite(r))]
    n_failed = B - len(good)
    if n_failed > max_fail * B:
        raise TooManyFailures(f"{n_failed} of {B} bootstrap replicates failed")
    return np.vstack(good), n_failed


def bootstrap_ci(data: CausalDataset, recipe: Callable, spec: IntervalSpec | None = None,
                 seed: int = 0, executor=None) -> BootstrapResult:
    """Nonparametric stratified bootstrap: replicate SD and percentile interval.

    ``recipe`` may return a scalar or a vector (several estimators sharing one
    refit); results then carry one entry per component.
    """
    spec = spec or IntervalSpec()
    reps, n_failed = bootstrap_replicates(data, recipe, spec.B, seed, executor=executor)
    se = reps.std(axis=0, ddof=1)
    lo, hi = percentile_interval(reps, spec.level)
    if reps.shape[1] == 1:
        return BootstrapResult(float(se[0]), float(lo[0]), float(hi[0]), reps[:, 0], n_failed)
    return BootstrapResult(se, lo, hi, reps, n_failed)


def aiptw_influence(data: CausalDataset, nuis: NuisanceEstimates, tau_hat: float) -> np.ndarray:
    A, Y, e = data.A, data.Y, nuis.e_hat
    return (A * Y / e - (A - e) * nuis.m1_hat / e) - (
        (1 - A) * Y / (1 - e) + (A - e) * nuis.m0_hat / (1 - e)) - tau_hat


def aiptw_ic_variance(data: CausalDataset, nuis: NuisanceEstimates, tau_hat: float) -> float:
    """Influence-curve standard error of the AIPTW estimator."""
    phi = aiptw_influence(data, nuis, tau_hat)
    return math.sqrt(float(np.sum(phi ** 2))) / data.n


def tmle_influence(data: CausalDataset, nuis: NuisanceEstimates, y1_star, y0_star,
                   tau_hat: float) -> np.ndarray:
    A, Y, e = data.A, data.Y, nuis.e_hat
    return (A / e) * (Y - y1_star) - ((1 - A) / (1 - e)) * (Y - y0_star) + (y1_star - y0_star) - tau_hat


def tmle_ic_variance(data: CausalDataset, nuis: NuisanceEstimates, y1_star, y0_star,
                     tau_hat: float) -> float:
    """Efficient-influence-curve standard error for TMLE (targeted predictions on the Y scale)."""
    phi = tmle_influence(data, nuis, np.asarray(y1_star), np.asarray(y0_star), tau_hat)
    return math.sqrt(float(np.sum(phi ** 2))) / data.n


def wild_bootstrap(psi: np.ndarray, tau_hat: float, B: int, seed: int, level: float = 0.95):
    """Rademacher multiplier bootstrap on fixed per-unit terms.

    Replicate statistic: ``tau_hat + mean(w * psi)``. Returns
    ``(se, ci_lo, ci_hi, replicates)``.
    """
    if B < 2:
        raise ValueError("wild bootstrap needs B >= 2")
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    rng = np.random.default_rng(seed)
    reps = np.empty(B)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, B, chunk):
        stop = min(B, start + chunk)
        w = rng.integers(0, 2, size=(stop - start, n)) * 2.0 - 1.0
        reps[start:stop] = tau_hat + (w @ psi) / n
    se = float(reps.std(ddof=1))
    lo, hi = percentile_interval(reps, level)
    return se, float(lo), float(hi), reps


def dsm_wild_bootstrap(dsm_fit, B: int, seed: int, level: float = 0.95):
    """Wild bootstrap interval for a fitted double-score matching estimate."""
    return wild_bootstrap(dsm_fit.psi, dsm_fit.tau, B, seed, level)


@dataclass(frozen=True)
class RubinResult:
    point: float
    se: float
    ci_lo: float
    ci_hi: float
    within: float
    between: float
    total: float
    df: float


def rubin_combine(estimates, within_vars, level: float = 0.95, df_complete: float | None = None) -> RubinResult:
    """Combine multiply-imputed estimates with Rubin's rules.

    The interval uses a t reference with Barnard-Rubin degrees of freedom
    when ``df_complete`` is given, otherwise Rubin's large-sample df. The
    df is floored at 1 so a zero within-variance never yields an unbounded
    interval.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(within_vars, dtype=float)
    m = q.shape[0]
    if m < 2:
        raise ValueError("Rubin's rules need at least 2 estimates")
    point = float(q.mean())
    between = float(q.var(ddof=1))
    within = float(u.mean())
    total = within + (1 + 1 / m) * between
    se = math.sqrt(max(total, 0.0))
    if total <= 0:
        return RubinResult(point, 0.0, point, point, within, between, total, math.inf)
    lam = (1 + 1 / m) * between / total
    df_old = math.inf if lam ** 2 == 0 else (m - 1) / lam ** 2
    if df_complete is None:
        df = df_old
    else:
        df_obs = (df_complete + 1) / (df_complete + 3) * df_complete * (1 - lam)
        if math.isinf(df_old):
            df = df_obs
        elif df_obs <= 0:
            df = 0.0
        else:
            df = df_old * df_obs / (df_old + df_obs)
    df = max(df, 1.0)
    crit = stats.t.ppf(0.5 + level / 2, df) if math.isfinite(df) else stats.norm.ppf(0.5 + level / 2)
    return RubinResult(point, se, point - crit * se, point + crit * se, within, between, total, df)
