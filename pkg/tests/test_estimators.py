import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gravimet.estimators import (
    DesignMatrix,
    fit,
    fit_fixed_effects,
    fit_pooled_ols,
    fit_random_effects,
    ols,
)
from gravimet.exceptions import EstimationError, RankDeficiencyError, ZeroWithinVariationError

from helpers import dummy_ols, random_design


# --- design matrix ------------------------------------------------------------


def test_design_rejects_duplicates_and_nonfinite():
    with pytest.raises(EstimationError):
        DesignMatrix(np.zeros(3), np.zeros((3, 2)), ("a", "a"))
    with pytest.raises(EstimationError):
        DesignMatrix(np.array([0, np.nan, 1]), np.zeros((3, 1)), ("a",))
    with pytest.raises(EstimationError):
        DesignMatrix(np.zeros(3), np.zeros((4, 1)), ("a",))


# --- pooled OLS ---------------------------------------------------------------


def test_pooled_exact_fit():
    d = DesignMatrix([1, 2, 3], [[1], [2], [3]], ("x",))
    f = fit_pooled_ols(d)
    assert f.coef("x") == pytest.approx(1.0, abs=1e-12)
    assert f.coef("const") == pytest.approx(0.0, abs=1e-12)
    assert f.rss == pytest.approx(0.0, abs=1e-20)


def test_pooled_constant_outcome():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 3))
    f = fit_pooled_ols(DesignMatrix(np.full(30, 4.2), X, ("a", "b", "c")))
    np.testing.assert_allclose(f.coefficients[1:], 0, atol=1e-12)
    assert f.coef("const") == pytest.approx(4.2)


def test_pooled_matches_normal_equations():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + 0.7 + rng.standard_normal(200)
    f = fit_pooled_ols(DesignMatrix(y, X, ("a", "b", "c", "d")))
    Z = np.column_stack([np.ones(200), X])
    beta = np.linalg.inv(Z.T @ Z) @ Z.T @ y
    np.testing.assert_allclose(f.coefficients, beta, rtol=1e-9)
    resid = y - Z @ beta
    s2 = resid @ resid / (200 - 5)
    np.testing.assert_allclose(f.covariance, s2 * np.linalg.inv(Z.T @ Z), rtol=1e-9)
    assert f.rss == pytest.approx(float(f.residuals @ f.residuals), rel=1e-10)


def test_pooled_rank_deficiency_names_column():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(20)
    d = DesignMatrix(rng.standard_normal(20), np.column_stack([x, 2 * x]), ("x", "x2"))
    with pytest.raises(RankDeficiencyError) as err:
        fit_pooled_ols(d)
    assert set(err.value.columns) & {"x", "x2"}


def test_ols_helper():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    beta, resid, xtx_inv = ols(X, 1 + 2 * np.arange(5.0))
    np.testing.assert_allclose(beta, [1, 2])
    np.testing.assert_allclose(resid, 0, atol=1e-12)


# --- fixed effects ------------------------------------------------------------


def test_fe_two_by_two_slope():
    d = DesignMatrix([1, 3, 2, 6], [[0], [1], [1], [3]], ("x",), groups=["A", "A", "B", "B"], years=[1, 2, 1, 2])
    f = fit_fixed_effects(d, year_effects=False)
    assert f.coef("x") == pytest.approx(2.0, abs=1e-12)
    Z = np.array([[0, 1, 0], [1, 1, 0], [1, 0, 1], [3, 0, 1]], dtype=float)
    assert np.linalg.lstsq(Z, np.array([1, 3, 2, 6.0]), rcond=None)[0][0] == pytest.approx(2.0)


def test_fe_rejects_absorbed_regressor():
    rng = np.random.default_rng(3)
    g = np.repeat(np.arange(5), 3)
    X = np.column_stack([rng.standard_normal(15), rng.standard_normal(5)[g]])
    d = DesignMatrix(rng.standard_normal(15), X, ("ok", "flat"), groups=g, years=np.tile([1, 2, 3], 5))
    with pytest.raises(ZeroWithinVariationError, match="flat"):
        fit_fixed_effects(d)


def test_fe_matches_dummy_expansion():
    rng = np.random.default_rng(4)
    d = random_design(rng, n_pairs=10, n_years=6, k=3, drop=0.0)
    d = d.subset(np.arange(60))
    f = fit_fixed_effects(d)
    oracle = dummy_ols(d)
    np.testing.assert_allclose(f.coefficients[:3], oracle, rtol=1e-8)
    assert f.dof == d.n - 3 - (len(np.unique(d.years)) - 1) - 10
    assert f.absorbed == 10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 20), st.integers(2, 4), st.integers(1, 4))
def test_fe_matches_dummy_expansion_property(seed, pairs, years, k):
    rng = np.random.default_rng(seed)
    d = random_design(rng, pairs, years, k, drop=0.2)
    if d.n <= k + pairs + years:
        return
    try:
        f = fit_fixed_effects(d)
    except EstimationError:
        return
    np.testing.assert_allclose(f.coefficients[:k], dummy_ols(d), rtol=1e-7, atol=1e-9)


def test_fe_residual_and_covariance_invariants():
    rng = np.random.default_rng(5)
    d = random_design(rng, 12, 4, 2, drop=0.1)
    f = fit_fixed_effects(d)
    assert f.n == len(f.residuals)
    assert f.rss == pytest.approx(float(f.residuals @ f.residuals), rel=1e-10)
    np.testing.assert_allclose(f.covariance, f.covariance.T, atol=1e-14)
    assert np.linalg.eigvalsh(f.covariance).min() > -1e-10


# --- random effects -----------------------------------------------------------


def test_re_zero_sigma_u_equals_pooled():
    rng = np.random.default_rng(6)
    d = random_design(rng, 15, 4, 2, drop=0.2)
    re = fit_random_effects(d, variance_components=(0.0, 1.0))
    pooled = fit_pooled_ols(d, year_effects=True)
    np.testing.assert_allclose(re.coefficients, pooled.coefficients, atol=1e-10)


def test_re_long_panel_approaches_fe():
    rng = np.random.default_rng(7)
    G, T = 20, 200
    g = np.repeat(np.arange(G), T)
    t = np.tile(np.arange(T), G)
    u = 5.0 * rng.standard_normal(G)
    # group effects independent of X, as random effects assume
    X = rng.standard_normal((G * T, 2)) + rng.standard_normal((G, 2))[g]
    y = X @ np.array([0.5, -1.0]) + u[g] + 0.5 * rng.standard_normal(G * T)
    d = DesignMatrix(y, X, ("a", "b"), groups=g, years=t % 4, clusters=g)
    fe = fit_fixed_effects(d)
    re = fit_random_effects(d)
    np.testing.assert_allclose(re.coefficients[1:3], fe.coefficients[:2], atol=1e-3)


def gls_oracle(d, sigma_u2, sigma_e2):
    """Full block-equicorrelated covariance solved by explicit GLS."""
    yd = pd.get_dummies(d.years).to_numpy(dtype=float)[:, 1:]
    Z = np.column_stack([np.ones(d.n), d.X, yd])
    omega = sigma_e2 * np.eye(d.n)
    same = d.groups[:, None] == d.groups[None, :]
    omega = omega + sigma_u2 * same
    W = np.linalg.inv(omega)
    return np.linalg.solve(Z.T @ W @ Z, Z.T @ W @ d.y)


@pytest.mark.parametrize("drop", [0.0, 0.25])
def test_re_matches_explicit_gls(drop):
    rng = np.random.default_rng(8)
    d = random_design(rng, 12, 4, 2, drop=drop)
    re = fit_random_effects(d)
    vc = re.variance_components
    beta = gls_oracle(d, vc["sigma_u2"], vc["sigma_e2"])
    np.testing.assert_allclose(re.coefficients, beta, rtol=1e-9, atol=1e-12)


def test_re_floors_negative_sigma_u():
    rng = np.random.default_rng(9)
    G, T = 30, 4
    g = np.repeat(np.arange(G), T)
    # strong negative within-pair correlation pushes the between variance below sigma_e^2 / T
    e = rng.standard_normal(G * T)
    e = e - np.repeat(np.bincount(g, weights=e) / T, T)
    X = rng.standard_normal((G * T, 1))
    d = DesignMatrix(X[:, 0] + e, X, ("x",), groups=g, years=np.tile(np.arange(T), G))
    with pytest.warns(RuntimeWarning):
        re = fit_random_effects(d)
    assert "sigma_u2_floored" in re.flags
    assert re.variance_components["sigma_u2"] == 0.0


def test_fit_dispatch():
    rng = np.random.default_rng(10)
    d = random_design(rng, 8, 3, 1)
    assert fit(d, "fe").estimator == "fixed-effects"
    assert fit(d, "re").estimator == "random-effects"
    assert fit(d, "pooled").estimator == "pooled"
