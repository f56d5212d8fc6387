"""Targeted maximum likelihood estimation with a logistic fluctuation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from ..core import AteEstimate, CausalDataset, NuisanceEstimates
from ..inference import normal_interval, tmle_ic_variance

SCALE_PAD = 1e-3
DIVERGENCE_BOUND = 10.0


@dataclass
class TmleFit:
    tau: float
    y1_star: np.ndarray
    y0_star: np.ndarray
    epsilon: tuple[float, ...]
    lower: float
    upper: float
    diverged: bool


def _scaling(Y, m1, m0):
    lo = min(Y.min(), m1.min(), m0.min())
    hi = max(Y.max(), m1.max(), m0.max())
    binary = np.all((Y == 0) | (Y == 1)) and lo >= 0 and hi <= 1
    if binary:
        return 0.0, 1.0
    span = hi - lo
    if span <= 0:
        span = 1.0
    return lo - SCALE_PAD * span, hi + SCALE_PAD * span


def _fit_epsilon(ys, offset, h, max_iter: int = 100, tol: float = 1e-12) -> float:
    """MLE of ``eps`` in ``logit E[ys] = offset + eps * h`` (no intercept).

    ``ys`` may be fractional in [0, 1] (quasi-binomial likelihood).
    """
    def loglik(eps):
        eta = offset + eps * h
        return float(np.sum(ys * eta - np.logaddexp(0.0, eta)))

    eps = 0.0
    ll = loglik(eps)
    for _ in range(max_iter):
        p = expit(offset + eps * h)
        score = float(np.sum(h * (ys - p)))
        info = float(np.sum(h * h * p * (1 - p)))
        if info <= 0:
            break
        step = score / info
        # damped Newton: the likelihood is concave, halve until it does not decrease
        for _ in range(50):
            cand = eps + step
            ll_c = loglik(cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            step /= 2
        eps, ll = cand, ll_c
        if abs(step) < tol * max(1.0, abs(eps)):
            break
    return eps


def tmle_targeting(data: CausalDataset, nuis: NuisanceEstimates, fluctuation: str = "shared",
                   epsilon: float | tuple[float, float] | None = None) -> TmleFit:
    """Run the targeting step and return the updated arm predictions.

    ``fluctuation="shared"`` fits one coefficient on the combined clever
    covariate; ``"split"`` fits one per arm. ``epsilon`` forces the
    coefficient(s) instead of estimating them.
    """
    A, Y, e = data.A, data.Y, nuis.e_hat
    a, b = _scaling(Y, nuis.m1_hat, nuis.m0_hat)
    width = b - a
    q1 = np.clip((nuis.m1_hat - a) / width, 1e-9, 1 - 1e-9)
    q0 = np.clip((nuis.m0_hat - a) / width, 1e-9, 1 - 1e-9)
    ys = np.clip((Y - a) / width, 0.0, 1.0)
    h1 = 1.0 / e
    h0 = -1.0 / (1.0 - e)
    off1, off0 = logit(q1), logit(q0)

    if fluctuation == "shared":
        if epsilon is None:
            h = A * h1 + (1 - A) * h0
            off = A * off1 + (1 - A) * off0
            eps1 = eps0 = _fit_epsilon(ys, off, h)
        else:
            eps1 = eps0 = float(epsilon)
    elif fluctuation == "split":
        if epsilon is None:
            t = A == 1
            eps1 = _fit_epsilon(ys[t], off1[t], h1[t])
            eps0 = _fit_epsilon(ys[~t], off0[~t], h0[~t])
        else:
            eps1, eps0 = (float(epsilon), float(epsilon)) if np.isscalar(epsilon) else map(float, epsilon)
    else:
        raise ValueError("fluctuation must be 'shared' or 'split'")

    # zero fluctuation leaves the initial predictions untouched
    # clip guards the back-transform against rounding past the interval ends
    y1 = nuis.m1_hat.copy() if eps1 == 0 else np.clip(a + width * expit(off1 + eps1 * h1), a, b)
    y0 = nuis.m0_hat.copy() if eps0 == 0 else np.clip(a + width * expit(off0 + eps0 * h0), a, b)
    tau = float(np.mean(y1 - y0))
    diverged = max(abs(eps1), abs(eps0)) > DIVERGENCE_BOUND
    eps_out = (eps1,) if fluctuation == "shared" else (eps1, eps0)
    return TmleFit(tau, y1, y0, eps_out, a, b, diverged)


def estimate_tmle(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95,
                  fluctuation: str = "shared", epsilon=None) -> AteEstimate:
    fit = tmle_targeting(data, nuis, fluctuation, epsilon)
    se = tmle_ic_variance(data, nuis, fit.y1_star, fit.y0_star, fit.tau)
    lo, hi = normal_interval(fit.tau, se, level)
    flags = nuis.flags + (("fluctuation_diverged",) if fit.diverged else ())
    if not math.isfinite(fit.tau):
        raise ArithmeticError("TMLE produced a non-finite estimate")
    return AteEstimate("tmle", nuis.model_kind, fit.tau, se, lo, hi, level, "analytic", flags)
