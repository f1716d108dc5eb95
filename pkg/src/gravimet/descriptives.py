"""Bivariate statistics: correlations, simple regression and paired t-tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import DegenerateStatisticError, InvalidInputError
from .inference import TestResult


def _pair(x, y, min_n: int = 3):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InvalidInputError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < min_n:
        raise InvalidInputError(f"need at least {min_n} observations, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("series contain non-finite values")
    return x, y


def _corr_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2 * stats.t.sf(abs(t), n - 2))


def _product_moment(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateStatisticError("correlation undefined for a constant series")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def pearson(x, y) -> tuple[float, float]:
    """Product-moment correlation and its two-sided t-based p-value."""
    x, y = _pair(x, y)
    r = _product_moment(x, y)
    return r, _corr_pvalue(r, x.size)


def spearman(x, y) -> tuple[float, float]:
    """Correlation of mid-ranks (ties share their average rank)."""
    x, y = _pair(x, y)
    rho = _product_moment(stats.rankdata(x, method="average"), stats.rankdata(y, method="average"))
    return rho, _corr_pvalue(rho, x.size)


@dataclass(frozen=True)
class LinregResult:
    slope: float
    intercept: float
    p_slope: float
    se_slope: float
    se_intercept: float
    residual_var: float
    n: int
    x_mean: float
    sxx: float

    def band(self, x, level: float = 0.95):
        """Confidence band for the fitted mean at ``x``: (fit, lower, upper)."""
        x = np.asarray(x, dtype=float)
        fit = self.intercept + self.slope * x
        q = stats.t.ppf(0.5 + level / 2, self.n - 2)
        half = q * np.sqrt(self.residual_var * (1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx))
        return fit, fit - half, fit + half


def simple_linreg(x, y) -> LinregResult:
    x, y = _pair(x, y)
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0:
        raise DegenerateStatisticError("regressor is constant")
    slope = float(dx @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    n = x.size
    s2 = float(resid @ resid) / (n - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / n + x.mean() ** 2 / sxx))
    if se_slope == 0:
        p = 0.0
    else:
        p = float(2 * stats.t.sf(abs(slope / se_slope), n - 2))
    return LinregResult(slope, intercept, p, se_slope, se_int, s2, n, float(x.mean()), sxx)


def paired_t_test(a, b) -> TestResult:
    """t = mean(d) / (sd(d) / sqrt(n)) on d = a - b, two-sided."""
    a, b = _pair(a, b, min_n=2)
    d = a - b
    n = d.size
    sd = float(np.std(d, ddof=1))
    if sd == 0:
        raise DegenerateStatisticError("paired differences have zero variance")
    t = float(d.mean() / (sd / math.sqrt(n)))
    return TestResult(t, n - 1, float(2 * stats.t.sf(abs(t), n - 1)), "paired-t")


@dataclass(frozen=True)
class CorrelationReport:
    x: str
    y: str
    n: int
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float
    ols_slope: float
    ols_intercept: float
    ols_p: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


def correlation_report(x, y, x_name: str = "x", y_name: str = "y") -> CorrelationReport:
    r, pr = pearson(x, y)
    rho, ps = spearman(x, y)
    lr = simple_linreg(x, y)
    return CorrelationReport(x_name, y_name, len(np.asarray(x)), r, pr, rho, ps, lr.slope, lr.intercept, lr.p_slope)


def reports_frame(reports) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in reports])
