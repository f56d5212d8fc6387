"""Regression imputation, inverse probability weighting and its augmented form."""
from __future__ import annotations

import numpy as np

from ..core import AteEstimate, CausalDataset, NuisanceEstimates
from ..inference import aiptw_ic_variance, normal_interval


def _check(data: CausalDataset, nuis: NuisanceEstimates):
    if nuis.e_hat.shape[0] != data.n:
        raise ValueError("nuisance estimates do not match the dataset")


def imp_point(data: CausalDataset, nuis: NuisanceEstimates) -> float:
    _check(data, nuis)
    return float(np.mean(nuis.m1_hat - nuis.m0_hat))


def iptw_point(data: CausalDataset, nuis: NuisanceEstimates) -> float:
    _check(data, nuis)
    A, Y, e = data.A, data.Y, nuis.e_hat
    return float(np.mean(A * Y / e) - np.mean((1 - A) * Y / (1 - e)))


def aiptw_point(data: CausalDataset, nuis: NuisanceEstimates) -> float:
    _check(data, nuis)
    A, Y, e = data.A, data.Y, nuis.e_hat
    treated = A * Y / e - (A - e) / e * nuis.m1_hat
    control = (1 - A) * Y / (1 - e) + (A - e) / (1 - e) * nuis.m0_hat
    return float(np.mean(treated) - np.mean(control))


def aiptw_point_combined(data: CausalDataset, nuis: NuisanceEstimates) -> float:
    """AIPTW as IPTW minus a weighted average of the two imputations."""
    A, Y, e = data.A, data.Y, nuis.e_hat
    ipw = A * Y / e - (1 - A) * Y / (1 - e)
    aug = (A - e) / (e * (1 - e)) * ((1 - e) * nuis.m1_hat + e * nuis.m0_hat)
    return float(np.mean(ipw - aug))


def estimate_imp(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> AteEstimate:
    """Mean difference of the two arm-specific outcome predictions (point only)."""
    return AteEstimate.point_only("imp", nuis.model_kind, imp_point(data, nuis), level, nuis.flags)


def estimate_iptw(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> AteEstimate:
    return AteEstimate.point_only("iptw", nuis.model_kind, iptw_point(data, nuis), level, nuis.flags)


def estimate_aiptw(data: CausalDataset, nuis: NuisanceEstimates, level: float = 0.95) -> AteEstimate:
    """Augmented IPTW with an influence-curve normal interval."""
    tau = aiptw_point(data, nuis)
    se = aiptw_ic_variance(data, nuis, tau)
    lo, hi = normal_interval(tau, se, level)
    return AteEstimate("aiptw", nuis.model_kind, tau, se, lo, hi, level, "analytic", nuis.flags)
