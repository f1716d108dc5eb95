import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gravimet.descriptives import (
    correlation_report,
    paired_t_test,
    pearson,
    reports_frame,
    simple_linreg,
    spearman,
)
from gravimet.estimators import DesignMatrix, fit_pooled_ols
from gravimet.exceptions import DegenerateStatisticError, InvalidInputError


def brute_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def brute_midranks(x):
    out = []
    for v in x:
        below = sum(1 for w in x if w < v)
        equal = sum(1 for w in x if w == v)
        out.append(below + (equal + 1) / 2)
    return out


def test_pearson_exact_lines():
    x = np.arange(10.0)
    assert pearson(x, 2 * x)[0] == pytest.approx(1.0)
    assert pearson(x, -x + 7)[0] == pytest.approx(-1.0)
    assert pearson(x, 2 * x)[1] == 0.0


def test_pearson_matches_formula():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(100), rng.standard_normal(100)
    r, p = pearson(x, y)
    assert r == pytest.approx(brute_pearson(x, y), abs=1e-12)
    t = r * math.sqrt(98 / (1 - r * r))
    assert p == pytest.approx(2 * stats.t.sf(abs(t), 98), abs=1e-12)


def test_spearman_monotone():
    x = np.linspace(-2, 2, 30)
    assert spearman(x, np.exp(x))[0] == pytest.approx(1.0)
    assert spearman(x, x[::-1])[0] == pytest.approx(-1.0)


def test_spearman_ties_match_midrank_oracle():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 5, 40).astype(float)
    y = rng.integers(0, 4, 40).astype(float)
    rho, _ = spearman(x, y)
    assert rho == pytest.approx(brute_pearson(brute_midranks(list(x)), brute_midranks(list(y))), abs=1e-12)


def test_linreg_collinear_points():
    lr = simple_linreg([0, 1, 2], [1, 3, 5])
    assert lr.slope == pytest.approx(2) and lr.intercept == pytest.approx(1)


def test_linreg_slope_product_is_r_squared():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(50)
    y = 0.5 * x + rng.standard_normal(50)
    r, _ = pearson(x, y)
    assert simple_linreg(x, y).slope * simple_linreg(y, x).slope == pytest.approx(r * r, rel=1e-12)


def test_linreg_matches_pooled_engine():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(80)
    y = 1.5 - 0.7 * x + rng.standard_normal(80)
    lr = simple_linreg(x, y)
    f = fit_pooled_ols(DesignMatrix(y, x[:, None], ("x",)))
    assert lr.slope == pytest.approx(f.coef("x"), rel=1e-12)
    assert lr.intercept == pytest.approx(f.coef("const"), rel=1e-12)
    assert lr.se_slope == pytest.approx(f.se("x"), rel=1e-10)


def test_linreg_band_contains_fit():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(30)
    lr = simple_linreg(x, x + rng.standard_normal(30))
    fit, lo, hi = lr.band(np.linspace(-2, 2, 5))
    assert np.all(lo < fit) and np.all(fit < hi)


def test_paired_t_degenerate_and_zero_mean():
    a = np.array([1.0, 2.0, 3.0])
    with pytest.raises(DegenerateStatisticError):
        paired_t_test(a, a)
    res = paired_t_test([1, -1, 1, -1], [0, 0, 0, 0])
    assert res.statistic == 0 and res.p_value == 1


def test_paired_t_matches_textbook():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal(25), rng.standard_normal(25) + 0.3
    res = paired_t_test(a, b)
    d = a - b
    n = len(d)
    mean = sum(d) / n
    sd = math.sqrt(sum((v - mean) ** 2 for v in d) / (n - 1))
    t = mean / (sd / math.sqrt(n))
    assert res.statistic == pytest.approx(t, abs=1e-12)
    assert res.p_value == pytest.approx(2 * stats.t.sf(abs(t), n - 1), abs=1e-12)
    assert res.dof == n - 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_correlations_bounded(pairs):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    try:
        r, p = pearson(x, y)
        rho, ps = spearman(x, y)
    except DegenerateStatisticError:
        return
    assert -1 <= r <= 1 and -1 <= rho <= 1
    assert 0 <= p <= 1 and 0 <= ps <= 1


def test_input_validation():
    with pytest.raises(InvalidInputError):
        pearson([1, 2], [1, 2])
    with pytest.raises(InvalidInputError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(DegenerateStatisticError):
        pearson([1, 1, 1], [1, 2, 3])


def test_correlation_report_frame():
    rng = np.random.default_rng(6)
    x = rng.poisson(3, 60).astype(float)
    y = 0.01 * x + rng.standard_normal(60) * 0.01
    rep = correlation_report(x, y, "ap_total_dest", "outflow_rate")
    frame = reports_frame([rep])
    assert frame.loc[0, "x"] == "ap_total_dest" and frame.loc[0, "n"] == 60
    assert frame.loc[0, "pearson_r"] == pearson(x, y)[0]
    assert frame.loc[0, "spearman_rho"] == spearman(x, y)[0]
    assert frame.loc[0, "ols_slope"] == simple_linreg(x, y).slope
