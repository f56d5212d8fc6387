import numpy as np

from drate.core import NuisanceEstimates, validate_dataset
from drate.models.linear import fit_intercept_only, fit_logit, fit_ols


def nuisances(e, m1, m0, kind="glm"):
    return NuisanceEstimates.build(np.asarray(e, float), np.asarray(m1, float), np.asarray(m0, float), kind)


def oracle_nuisances(data, truth, ps="correct", outcome="correct"):
    """GLM nuisances on the true transformed features, or intercept-only fits."""
    W, A, Y = truth.W, data.A, data.Y
    if ps == "correct":
        e = fit_logit(W, A).predict_proba(W)
    else:
        e = np.full(data.n, A.mean())
    preds = {}
    for arm in (0.0, 1.0):
        rows = A == arm
        if outcome == "correct":
            preds[arm] = fit_ols(W[rows], Y[rows]).predict(W)
        else:
            preds[arm] = fit_intercept_only(Y[rows]).predict(np.zeros((data.n, 0)))
    return nuisances(e, preds[1.0], preds[0.0])


def on_true_features(data, truth):
    """Same units with the true transformed features as covariates."""
    return validate_dataset(truth.W, data.A, data.Y, tuple(f"W{j + 1}" for j in range(truth.W.shape[1])))
