import numpy as np
import pytest

from drate.models.gam import LAMBDA_GRID, fit_gam, natural_spline_basis, ridge_gcv
from drate.models.linear import fit_ols


def test_natural_spline_is_linear_beyond_boundary():
    knots = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    x = np.linspace(5, 9, 9)
    B = natural_spline_basis(x, knots)
    assert B.shape == (9, 4)
    second_diff = np.diff(B, 2, axis=0)
    np.testing.assert_allclose(second_diff, 0, atol=1e-9)


def test_quadratic_truth_prediction_error():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((2000, 1))
    f = X[:, 0] ** 2
    y = f + rng.standard_normal(2000)
    m = fit_gam(X[:1000], y[:1000])
    mspe = np.mean((y[1000:] - m.predict(X[1000:])) ** 2)
    assert mspe <= 1.5


def test_linear_truth_matches_ols():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((1000, 1))
    y = X[:, 0] + 0.3 * rng.standard_normal(1000)
    g = fit_gam(X, y).predict(X)
    o = fit_ols(X, y).predict(X)
    assert np.sqrt(np.mean((g - o) ** 2)) < 0.05


def test_constant_outcome():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((200, 2))
    m = fit_gam(X, np.full(200, 3.25))
    np.testing.assert_allclose(m.predict(X), 3.25, atol=1e-6)


def test_binary_covariate_enters_linearly_and_lambda_reproducible():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.standard_normal(300), rng.integers(0, 2, 300)])
    y = np.sin(X[:, 0]) + X[:, 1] + 0.2 * rng.standard_normal(300)
    m1, m2 = fit_gam(X, y), fit_gam(X, y)
    assert m1.terms[1].knots is None
    assert m1.terms[0].basis_dim >= 3
    assert m1.lam == m2.lam and m1.lam in LAMBDA_GRID
    assert list(m1.lambdas) == [0]


def test_binomial_predictions_in_unit_interval():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((500, 2))
    a = (rng.random(500) < 1 / (1 + np.exp(-(X[:, 0] ** 2 - 1)))).astype(float)
    p = fit_gam(X, a, "binomial").predict(X)
    assert np.all((p > 0) & (p < 1))
    # the U-shaped truth is picked up
    assert np.corrcoef(p, X[:, 0] ** 2)[0, 1] > 0.8


def test_small_n_warns():
    rng = np.random.default_rng(5)
    with pytest.warns(RuntimeWarning):
        fit_gam(rng.standard_normal((30, 4)), rng.standard_normal(30))


def test_ridge_gcv_no_penalty_reproduces_least_squares():
    rng = np.random.default_rng(6)
    D = np.column_stack([np.ones(80), rng.standard_normal((80, 3))])
    y = D @ [1, 2, 0, -1] + rng.standard_normal(80)
    predict, rss, edf, _ = ridge_gcv(D, y, np.zeros(4))
    ref = D @ np.linalg.lstsq(D, y, rcond=None)[0]
    np.testing.assert_allclose(predict(D), ref, atol=1e-8)
    np.testing.assert_allclose(edf, 4, atol=1e-8)
