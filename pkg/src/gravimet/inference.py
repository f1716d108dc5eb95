"""Covariance estimators, specification tests and fit metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .estimators import INTERCEPT, FitResult
from .exceptions import (
    EstimationError,
    InvalidInputError,
    NumericalInconsistencyError,
)
from .transforms import GroupIndex

PINV_RTOL = 1e-10
STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))

METRICS_CONVENTION = (
    "AIC = n ln(RSS/n) + 2k, BIC = n ln(RSS/n) + k ln(n), k = substantive slopes + 1 "
    "(concentrated Gaussian likelihood, constants dropped; year indicators not counted); "
    "RMSE = sqrt(RSS/n); adjusted R2 uses the outcome demeaned at the estimator's level"
)


def stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


@dataclass(frozen=True)
class ClusterCovariance:
    matrix: np.ndarray
    n_clusters: int
    correction: str


@dataclass(frozen=True)
class TestResult:
    statistic: float
    dof: float | tuple[float, float]
    p_value: float
    test: str
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        dof = list(self.dof) if isinstance(self.dof, tuple) else self.dof
        return {"test": self.test, "statistic": self.statistic, "dof": dof,
                "p_value": self.p_value, "flags": list(self.flags)}


@dataclass(frozen=True)
class CoefTest:
    name: str
    estimate: float
    se: float
    result: TestResult
    ci90: tuple[float, float]
    ci95: tuple[float, float]

    @property
    def t(self) -> float:
        return self.result.statistic

    @property
    def p_value(self) -> float:
        return self.result.p_value

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.result.flags


@dataclass(frozen=True)
class FitMetrics:
    adj_r2: float
    rmse: float
    aic: float
    bic: float
    k_eff: int
    convention: str = field(default=METRICS_CONVENTION, repr=False)


def cluster_robust_cov(X, residuals, clusters, correction: str = "CR1", bread=None) -> ClusterCovariance:
    """Sandwich covariance with one-way clustering.

    Parameters
    ----------
    X : ndarray, shape (n, k)
        Regressors of the final OLS step.
    residuals : ndarray, shape (n,)
    clusters : array-like, shape (n,)
        Cluster label per row.
    correction : {"CR0", "CR1"}
        CR1 scales by G/(G-1) * (n-1)/(n-k).
    bread : ndarray, optional
        Precomputed (X'X)^-1.
    """
    X = np.asarray(X, dtype=float)
    e = np.asarray(residuals, dtype=float).ravel()
    n, k = X.shape
    if clusters is None or len(clusters) != n:
        raise InvalidInputError("every row needs a cluster label")
    gi = GroupIndex.from_labels(clusters)
    G = gi.n_groups
    if G < 2:
        raise EstimationError("cluster-robust covariance needs at least two clusters")
    if bread is None:
        bread = np.linalg.inv(X.T @ X)
    scores = np.zeros((G, k))
    np.add.at(scores, gi.codes, X * e[:, None])
    meat = scores.T @ scores
    cov = bread @ meat @ bread
    correction = correction.upper()
    if correction == "CR1":
        cov = cov * (G / (G - 1)) * ((n - 1) / (n - k))
    elif correction != "CR0":
        raise InvalidInputError(f"unknown small-sample correction {correction!r}")
    return ClusterCovariance((cov + cov.T) / 2, G, correction)


def with_cluster_covariance(fit: FitResult, clusters=None, correction: str = "CR1") -> FitResult:
    """Return ``fit`` with its covariance replaced by the clustered sandwich."""
    clusters = fit.clusters if clusters is None else clusters
    X = fit.regressors
    bread = np.linalg.pinv(X.T @ X)
    cc = cluster_robust_cov(X, fit.residuals, clusters, correction, bread=bread)
    return replace(fit, covariance=cc.matrix, cov_type=cc.correction, n_clusters=cc.n_clusters)


def _t_pvalue(t: float, dof: float) -> float:
    if math.isinf(dof):
        return float(2 * stats.norm.sf(abs(t)))
    return float(2 * stats.t.sf(abs(t), dof))


def coef_tests(fit: FitResult, covariance=None, dof: float | None = None) -> list[CoefTest]:
    """Two-sided t-tests and 90/95% intervals for every coefficient.

    The reference dof is G - 1 for a clustered fit, otherwise the residual
    dof of the fit.
    """
    cov = fit.covariance if covariance is None else np.asarray(covariance, dtype=float)
    if cov.shape != (fit.k, fit.k):
        raise InvalidInputError(f"covariance is {cov.shape}, fit has {fit.k} coefficients")
    if dof is None:
        dof = fit.n_clusters - 1 if fit.n_clusters else fit.dof
    q90 = stats.t.ppf(0.95, dof) if math.isfinite(dof) else stats.norm.ppf(0.95)
    q95 = stats.t.ppf(0.975, dof) if math.isfinite(dof) else stats.norm.ppf(0.975)
    out = []
    for i, name in enumerate(fit.names):
        b = float(fit.coefficients[i])
        se = float(np.sqrt(max(cov[i, i], 0.0)))
        if se == 0.0:
            res = TestResult(math.copysign(math.inf, b) if b else 0.0, dof, 0.0, "coef-t", ("degenerate",))
        else:
            t = b / se
            res = TestResult(t, dof, _t_pvalue(t, dof), "coef-t")
        out.append(CoefTest(name, b, se, res, (b - q90 * se, b + q90 * se), (b - q95 * se, b + q95 * se)))
    return out


def coef_table(fit: FitResult, **kwargs) -> pd.DataFrame:
    rows = [
        {"name": c.name, "estimate": c.estimate, "se": c.se, "t": c.t, "p_value": c.p_value,
         "lo90": c.ci90[0], "hi90": c.ci90[1], "lo95": c.ci95[0], "hi95": c.ci95[1],
         "stars": stars(c.p_value)}
        for c in coef_tests(fit, **kwargs)
    ]
    return pd.DataFrame(rows).set_index("name")


def f_test_fe_vs_pooled(fe_fit: FitResult, pooled_fit: FitResult) -> TestResult:
    """F-test of the absorbed pair effects against the pooled model."""
    if fe_fit.estimator != "fixed-effects" or pooled_fit.estimator != "pooled":
        raise InvalidInputError("expected a fixed-effects fit and a pooled fit")
    pooled_slopes = tuple(n for n in pooled_fit.names if n != INTERCEPT)
    if pooled_slopes != fe_fit.names or fe_fit.n != pooled_fit.n:
        raise InvalidInputError("pooled model is not nested in the fixed-effects model (slope sets differ)")
    diff = pooled_fit.rss - fe_fit.rss
    if diff < -1e-10 * max(1.0, pooled_fit.rss):
        raise NumericalInconsistencyError(f"pooled RSS {pooled_fit.rss} below FE RSS {fe_fit.rss}")
    q = fe_fit.absorbed - 1
    if q < 1:
        raise EstimationError("F-test needs at least two pairs")
    F = max(diff, 0.0) / q / (fe_fit.rss / fe_fit.dof)
    return TestResult(float(F), (q, fe_fit.dof), float(stats.f.sf(F, q, fe_fit.dof)), "fe-vs-pooled-F")


def hausman_test(fe_fit: FitResult, re_fit: FitResult, names: Sequence[str] | None = None) -> TestResult:
    """Hausman contrast of FE and RE estimates on the tested coefficients.

    Uses the eigenvalue pseudo-inverse of V_FE - V_RE; the ``non_pd`` flag
    is set when that difference is not positive definite.
    """
    if names is None:
        names = fe_fit.substantive
    names = [n for n in names if n in fe_fit.names and n in re_fit.names]
    if not names:
        raise InvalidInputError("no tested coefficient is present in both fits")
    i_fe = [fe_fit.index(n) for n in names]
    i_re = [re_fit.index(n) for n in names]
    d = fe_fit.coefficients[i_fe] - re_fit.coefficients[i_re]
    V = fe_fit.covariance[np.ix_(i_fe, i_fe)] - re_fit.covariance[np.ix_(i_re, i_re)]
    V = (V + V.T) / 2
    w, U = np.linalg.eigh(V)
    cutoff = PINV_RTOL * max(np.max(np.abs(w)), np.finfo(float).tiny)
    flags = []
    if np.any(w <= cutoff):
        flags.append("non_pd")
    keep = w > cutoff
    proj = U[:, keep].T @ d
    H = float(np.sum(proj**2 / w[keep]))
    dof = len(names)
    return TestResult(H, dof, float(stats.chi2.sf(H, dof)), "hausman-chi2", tuple(flags))


def chi2_pvalue(statistic: float, dof: int) -> float:
    return float(stats.chi2.sf(statistic, dof))


def fit_metrics(fit: FitResult) -> FitMetrics:
    k_eff = len(fit.substantive) + 1
    n = fit.n
    if n <= k_eff:
        raise EstimationError(f"n={n} does not exceed k_eff={k_eff}")
    rss = max(fit.rss, 1e-300)
    adj = 1.0 - (rss / fit.dof) / (fit.tss / (n - 1)) if fit.tss > 0 else float("nan")
    ll = n * math.log(rss / n)
    return FitMetrics(
        adj_r2=float(adj),
        rmse=math.sqrt(rss / n),
        aic=ll + 2 * k_eff,
        bic=ll + k_eff * math.log(n),
        k_eff=k_eff,
    )


@dataclass(frozen=True)
class WithinVariationReport:
    table: pd.DataFrame
    share_multi_year: float


def within_variation_report(panel, columns: Sequence[str]) -> WithinVariationReport:
    """Within-pair share of each column's total sum of squares.

    A column with zero total variance gets a NaN share.
    """
    gi = GroupIndex.from_labels(panel.pair_codes)
    rows = []
    for c in columns:
        x = panel.column(c)
        total = float(np.sum((x - x.mean()) ** 2))
        within = float(np.sum(gi.demean(x) ** 2))
        between = float(np.sum(gi.counts * (gi.means(x) - x.mean()) ** 2))
        if total <= 1e-14 * max(1.0, float(np.sum(x**2))):
            w_share = b_share = float("nan")
        else:
            w_share, b_share = within / total, between / total
        rows.append({"variable": c, "within_share": w_share, "between_share": b_share,
                     "within_ss": within, "between_ss": between, "total_ss": total})
    table = pd.DataFrame(rows).set_index("variable")
    return WithinVariationReport(table, float((gi.counts >= 2).mean()))
