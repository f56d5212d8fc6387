import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from drate import ScenarioSpec, gen_dataset, validate_dataset
from drate.estimators import aiptw_point, estimate_aiptw
from drate.inference import (
    IntervalSpec,
    TooManyFailures,
    bootstrap_ci,
    bootstrap_replicates,
    percentile_interval,
    replicate_seed,
    rubin_combine,
    stratified_resample,
    wild_bootstrap,
)
from drate.models.nuisance import fit_nuisances
from helpers import on_true_features


def _mean_y(d, seed):
    return d.Y.mean()


@pytest.mark.parametrize("kw", [dict(level=1.0), dict(B=1), dict(method="bca")])
def test_interval_spec_invariants(kw):
    with pytest.raises(ValueError):
        IntervalSpec(**kw)


def test_replicate_seed_is_pure():
    assert replicate_seed(3, 5) == replicate_seed(3, 5)
    assert len({replicate_seed(3, b) for b in range(100)}) == 100


def test_stratified_resample_keeps_arm_sizes(toy_data):
    rows = stratified_resample(toy_data, np.random.default_rng(0))
    assert rows.size == toy_data.n
    assert toy_data.A[rows].sum() == toy_data.A.sum()


def test_bootstrap_se_of_mean():
    rng = np.random.default_rng(0)
    n = 2000
    d = validate_dataset(np.zeros((n, 1)), np.r_[np.ones(n // 2), np.zeros(n // 2)], rng.standard_normal(n))
    res = bootstrap_ci(d, _mean_y, IntervalSpec(B=500), seed=1)
    assert 0.018 <= res.se <= 0.027


def test_bootstrap_constant_outcome_width_zero(toy_data):
    d = validate_dataset(toy_data.X, toy_data.A, np.full(toy_data.n, 2.0))
    res = bootstrap_ci(d, _mean_y, IntervalSpec(B=50), seed=0)
    assert res.ci_hi - res.ci_lo == 0 and res.se == 0


def test_percentile_endpoints_are_empirical_quantiles(toy_data):
    res = bootstrap_ci(toy_data, _mean_y, IntervalSpec(level=0.95, B=200), seed=4)
    lo, hi = np.quantile(res.replicates, [0.025, 0.975])
    assert (res.ci_lo, res.ci_hi) == (lo, hi)
    assert res.ci_lo <= np.median(res.replicates) <= res.ci_hi


def test_bootstrap_vector_recipe(toy_data):
    res = bootstrap_ci(toy_data, lambda d, s: [d.Y.mean(), d.Y.std()], IntervalSpec(B=30), seed=0)
    assert res.replicates.shape == (30, 2) and len(res.se) == 2


def test_bootstrap_failures_counted_then_fatal(toy_data):
    state = {"k": 0}

    def sometimes(d, seed):
        state["k"] += 1
        if state["k"] % 20 == 0:
            raise ArithmeticError("planted")
        return d.Y.mean()

    _, failed = bootstrap_replicates(toy_data, sometimes, 40, seed=0)
    assert failed == 2

    def mostly(d, seed):
        raise ArithmeticError("planted")

    with pytest.raises(TooManyFailures):
        bootstrap_replicates(toy_data, mostly, 10, seed=0)


def test_bootstrap_reproducible_and_order_free(toy_data):
    a = bootstrap_ci(toy_data, _mean_y, IntervalSpec(B=50), seed=3)
    perm = np.random.default_rng(1).permutation(toy_data.n)
    b = bootstrap_ci(toy_data.subset(perm), _mean_y, IntervalSpec(B=50), seed=3)
    np.testing.assert_allclose(a.replicates, b.replicates, atol=1e-12)


@given(st.floats(-10, 10), st.integers(0, 1000))
def test_wild_bootstrap_zero_terms(tau, seed):
    se, lo, hi, _ = wild_bootstrap(np.zeros(25), tau, 50, seed)
    assert se < 1e-12 and lo == hi == tau


def test_wild_bootstrap_centres_on_estimate():
    psi = np.random.default_rng(0).standard_normal(300)
    psi -= psi.mean()
    se, lo, hi, reps = wild_bootstrap(psi, 1.5, 2000, seed=5)
    assert abs(reps.mean() - 1.5) < 3 * reps.std() / math.sqrt(2000)
    np.testing.assert_allclose(se, np.sqrt(np.sum(psi ** 2)) / 300, rtol=0.1)
    assert wild_bootstrap(psi, 1.5, 2000, seed=5)[0] == se


def test_rubin_zero_between_variance():
    r = rubin_combine([2.5, 2.5, 2.5], [0.4, 0.4, 0.4])
    assert r.point == 2.5 and r.total == pytest.approx(0.4)


def test_rubin_two_estimates_hand_case():
    r = rubin_combine([1.0, 3.0], [0.0, 0.0])
    assert r.point == 2.0
    assert r.total == pytest.approx(3.0)
    assert r.se == pytest.approx(math.sqrt(3))
    # all variance is between-imputation, so the df floor of 1 applies
    assert r.df == 1.0
    assert r.ci_hi - r.point == pytest.approx(stats.t.ppf(0.975, 1) * math.sqrt(3))


@given(st.floats(0.01, 5), st.floats(0, 5), st.floats(0.01, 5))
def test_rubin_se_monotone_in_between_variance(w, spread, extra):
    base = rubin_combine([0.0, spread], [w, w])
    wider = rubin_combine([0.0, spread + extra], [w, w])
    assert wider.se > base.se


def test_rubin_needs_two():
    with pytest.raises(ValueError):
        rubin_combine([1.0], [0.1])


@pytest.mark.slow
def test_analytic_se_tracks_bootstrap():
    ratios = []
    for seed in range(100):
        d, truth = gen_dataset(ScenarioSpec("large", "homo", seed=300 + seed))
        dw = on_true_features(d, truth)
        est = estimate_aiptw(dw, fit_nuisances(dw, "glm", seed=0))
        boot = bootstrap_ci(dw, lambda b, s: aiptw_point(b, fit_nuisances(b, "glm", seed=s)),
                            IntervalSpec(B=100), seed=seed)
        ratios.append(est.se / boot.se)
    assert 0.8 <= np.median(ratios) <= 1.2


@pytest.mark.slow
def test_bootstrap_se_stable_in_B():
    rel = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = 500
        d = validate_dataset(np.zeros((n, 1)), np.r_[np.ones(250), np.zeros(250)], rng.exponential(size=n))
        a = bootstrap_ci(d, _mean_y, IntervalSpec(B=500), seed=seed).se
        b = bootstrap_ci(d, _mean_y, IntervalSpec(B=1000), seed=seed + 1000).se
        rel.append(abs(a - b) / b)
    assert np.median(rel) < 0.1
