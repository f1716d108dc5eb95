"""
Pooled OLS, two-way fixed effects and random-effects GLS.

All three estimators share one least-squares kernel: a column-pivoted QR
decomposition whose diagonal doubles as the rank check.  Pair effects are
absorbed by demeaning; year effects enter as explicit indicators with the
smallest year as base.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .exceptions import EstimationError, RankDeficiencyError, ZeroWithinVariationError
from .transforms import GroupIndex

RANK_TOL = 1e-10
INTERCEPT = "const"


@dataclass(frozen=True)
class DesignMatrix:
    """Outcome, named regressors and the panel structure needed to fit them.

    ``X`` holds the substantive regressors only; year indicators and the
    intercept are added by the estimators.
    """

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]
    groups: np.ndarray | None = None
    years: np.ndarray | None = None
    clusters: np.ndarray | None = None
    outcome: str = "ln_outflow"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = tuple(self.names)
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise EstimationError(f"duplicate design column names: {dup}")
        if X.shape != (len(y), len(names)):
            raise EstimationError(f"X has shape {X.shape}, expected ({len(y)}, {len(names)})")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise EstimationError("design contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)
        for attr in ("groups", "years", "clusters"):
            value = getattr(self, attr)
            if value is not None:
                value = np.asarray(value)
                if len(value) != len(y):
                    raise EstimationError(f"{attr} has {len(value)} labels for {len(y)} rows")
                object.__setattr__(self, attr, value)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def cluster_labels(self) -> np.ndarray | None:
        return self.clusters if self.clusters is not None else self.groups

    def year_indicators(self) -> tuple[np.ndarray, tuple[str, ...]]:
        """Indicator columns for every year but the smallest."""
        if self.years is None:
            raise EstimationError("year effects requested but design has no year labels")
        levels = np.unique(self.years)
        if len(levels) < 2:
            raise EstimationError("year effects requested on a single-year panel")
        D = (self.years[:, None] == levels[None, 1:]).astype(float)
        return D, tuple(f"year_{lvl}" for lvl in levels[1:])

    @property
    def year_indicator_names(self) -> tuple[str, ...]:
        return self.year_indicators()[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.names.index(name)]
        except ValueError:
            raise EstimationError(f"design has no column {name!r}") from None

    def subset(self, rows: np.ndarray) -> "DesignMatrix":
        take = lambda a: None if a is None else a[rows]  # noqa: E731
        return replace(self, y=self.y[rows], X=self.X[rows], groups=take(self.groups),
                       years=take(self.years), clusters=take(self.clusters))


@dataclass(frozen=True)
class FitResult:
    """Estimates plus everything inference needs.

    ``regressors`` and ``residuals`` are on the scale of the final OLS step
    (demeaned for FE, quasi-demeaned for RE) so that sandwich covariances
    can be formed directly from them.
    """

    names: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    dof: int
    rss: float
    tss: float
    estimator: str
    n: int
    substantive: tuple[str, ...]
    regressors: np.ndarray = field(repr=False)
    clusters: np.ndarray | None = field(default=None, repr=False)
    absorbed: int = 0
    cov_type: str = "classical"
    n_clusters: int | None = None
    variance_components: Mapping[str, float] | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "covariance", (cov + cov.T) / 2)

    @property
    def k(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"fit has no coefficient {name!r}") from None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def se(self, name: str) -> float:
        i = self.index(name)
        return float(np.sqrt(max(self.covariance[i, i], 0.0)))

    @property
    def params(self) -> pd.Series:
        return pd.Series(self.coefficients, index=list(self.names), name="estimate")

    @property
    def std_errors(self) -> pd.Series:
        return pd.Series(np.sqrt(np.clip(np.diag(self.covariance), 0, None)), index=list(self.names), name="se")

    def to_dict(self) -> dict:
        se = self.std_errors
        return {
            "estimator": self.estimator,
            "cov_type": self.cov_type,
            "n": self.n,
            "dof": self.dof,
            "rss": self.rss,
            "absorbed_effects": self.absorbed,
            "n_clusters": self.n_clusters,
            "variance_components": dict(self.variance_components) if self.variance_components else None,
            "flags": list(self.flags),
            "coefficients": [
                {"name": n, "estimate": float(b), "se": float(se[n])}
                for n, b in zip(self.names, self.coefficients)
            ],
        }


class _LeastSquares:
    """Pivoted-QR least squares with explicit rank check."""

    def __init__(self, X: np.ndarray, y: np.ndarray, names: Sequence[str], drop_dependent: bool = False):
        n, k = X.shape
        if n <= k and not drop_dependent:
            raise EstimationError(f"{n} observations for {k} parameters")
        Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        scale = diag[0] if k and diag[0] > 0 else 1.0
        rank = int(np.sum(diag > RANK_TOL * scale))
        self.rank = rank
        if rank < k:
            if not drop_dependent:
                raise RankDeficiencyError([names[j] for j in piv[rank:]])
            # keep the leading independent pivots only
            self.dropped = tuple(names[j] for j in piv[rank:])
            kept = np.sort(piv[:rank])
            sub = _LeastSquares(X[:, kept], y, [names[j] for j in kept])
            self.beta = np.zeros(k)
            self.beta[kept] = sub.beta
            self.xtx_inv = np.zeros((k, k))
            self.xtx_inv[np.ix_(kept, kept)] = sub.xtx_inv
            self.fitted, self.resid, self.rss = sub.fitted, sub.resid, sub.rss
            return
        self.dropped = ()
        z = Q.T @ y
        beta_p = linalg.solve_triangular(R, z)
        Rinv = linalg.solve_triangular(R, np.eye(k))
        xtx_inv_p = Rinv @ Rinv.T
        inv_piv = np.empty_like(piv)
        inv_piv[piv] = np.arange(k)
        self.beta = beta_p[inv_piv]
        self.xtx_inv = xtx_inv_p[np.ix_(inv_piv, inv_piv)]
        self.fitted = X @ self.beta
        self.resid = y - self.fitted
        self.rss = float(self.resid @ self.resid)


def ols(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None):
    """Plain least squares: returns (beta, residuals, (X'X)^-1)."""
    X = np.asarray(X, dtype=float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    ls = _LeastSquares(X, np.asarray(y, dtype=float), names)
    return ls.beta, ls.resid, ls.xtx_inv


def _assemble(design: DesignMatrix, year_effects: bool, intercept: bool):
    blocks, names = [], []
    if intercept:
        blocks.append(np.ones((design.n, 1)))
        names.append(INTERCEPT)
    blocks.append(design.X)
    names.extend(design.names)
    if year_effects:
        D, dnames = design.year_indicators()
        blocks.append(D)
        names.extend(dnames)
    return np.hstack(blocks), tuple(names)


def fit_pooled_ols(design: DesignMatrix, year_effects: bool = False, intercept: bool = True) -> FitResult:
    """OLS on the stacked panel; the F-test's restricted model."""
    if design.n == 0:
        raise EstimationError("design has no rows")
    X, names = _assemble(design, year_effects, intercept)
    ls = _LeastSquares(X, design.y, names)
    dof = design.n - len(names)
    s2 = ls.rss / dof
    centred = design.y - design.y.mean() if intercept else design.y
    return FitResult(
        names=names,
        coefficients=ls.beta,
        covariance=s2 * ls.xtx_inv,
        residuals=ls.resid,
        fitted=ls.fitted,
        dof=dof,
        rss=ls.rss,
        tss=float(centred @ centred),
        estimator="pooled",
        n=design.n,
        substantive=design.names,
        regressors=X,
        clusters=design.cluster_labels,
    )


def _groups(design: DesignMatrix, groups) -> GroupIndex:
    labels = design.groups if groups is None else np.asarray(groups)
    if labels is None:
        raise EstimationError("pair groups are required for panel estimators")
    if len(labels) != design.n:
        raise EstimationError("group labels do not match the number of rows")
    return GroupIndex.from_labels(labels)


def fit_fixed_effects(design: DesignMatrix, groups=None, years=None, year_effects: bool = True) -> FitResult:
    """Within estimator with pair effects absorbed and year indicators.

    Raises
    ------
    ZeroWithinVariationError
        If a substantive regressor is constant within every pair.
    """
    if years is not None:
        design = replace(design, years=np.asarray(years))
    gi = _groups(design, groups)
    if gi.n == 0 or gi.counts.max() < 2:
        raise EstimationError("fixed effects need at least one pair observed twice")
    X, names = _assemble(design, year_effects, intercept=False)
    Xw = gi.demean(X)
    yw = gi.demean(design.y)

    norms = np.linalg.norm(X[:, : design.k], axis=0)
    within = np.linalg.norm(Xw[:, : design.k], axis=0)
    dead = [design.names[j] for j in range(design.k) if within[j] <= RANK_TOL * max(norms[j], 1.0)]
    if dead:
        raise ZeroWithinVariationError(dead)

    ls = _LeastSquares(Xw, yw, names)
    dof = design.n - len(names) - gi.n_groups
    if dof <= 0:
        raise EstimationError(f"no residual degrees of freedom (n={design.n}, slopes={len(names)}, pairs={gi.n_groups})")
    s2 = ls.rss / dof
    return FitResult(
        names=names,
        coefficients=ls.beta,
        covariance=s2 * ls.xtx_inv,
        residuals=ls.resid,
        fitted=design.y - ls.resid,
        dof=dof,
        rss=ls.rss,
        tss=float(yw @ yw),
        estimator="fixed-effects",
        n=design.n,
        substantive=design.names,
        regressors=Xw,
        clusters=design.cluster_labels,
        absorbed=gi.n_groups,
    )


def swamy_arora_components(design: DesignMatrix, gi: GroupIndex, year_effects: bool = True):
    """Moment estimates of (sigma_u^2, sigma_e^2) for an unbalanced panel.

    sigma_e^2 comes from the within regression.  The between regression of
    group means has residual variance sigma_u^2 + sigma_e^2 / T, with T the
    harmonic mean of group sizes; a negative difference is floored at 0.
    """
    fe = fit_fixed_effects(design, groups=gi.codes, year_effects=year_effects)
    sigma_e2 = fe.rss / fe.dof
    X, names = _assemble(design, year_effects, intercept=True)
    # year-indicator means are constant across pairs in a balanced panel
    between = _LeastSquares(gi.means(X), gi.means(design.y), names, drop_dependent=True)
    if gi.n_groups <= between.rank:
        raise EstimationError(f"between regression needs more than {between.rank} pairs, got {gi.n_groups}")
    t_harm = gi.n_groups / np.sum(1.0 / gi.counts)
    sigma_u2 = between.rss / (gi.n_groups - between.rank) - sigma_e2 / t_harm
    floored = sigma_u2 < 0
    return max(sigma_u2, 0.0), sigma_e2, floored


def fit_random_effects(
    design: DesignMatrix,
    groups=None,
    years=None,
    year_effects: bool = True,
    variance_components: tuple[float, float] | None = None,
) -> FitResult:
    """Random-effects GLS by quasi-demeaning.

    Parameters
    ----------
    variance_components : (sigma_u2, sigma_e2), optional
        Use fixed components instead of the Swamy-Arora estimates.
    """
    if years is not None:
        design = replace(design, years=np.asarray(years))
    gi = _groups(design, groups)
    X, names = _assemble(design, year_effects, intercept=True)
    if design.n <= X.shape[1]:
        raise EstimationError("random effects need n > k + number of years")
    flags = []
    if variance_components is None:
        sigma_u2, sigma_e2, floored = swamy_arora_components(design, gi, year_effects)
        if floored:
            flags.append("sigma_u2_floored")
            warnings.warn("negative between-pair variance; sigma_u^2 set to 0", RuntimeWarning, stacklevel=2)
    else:
        sigma_u2, sigma_e2 = (float(v) for v in variance_components)
        if sigma_u2 < 0 or sigma_e2 <= 0:
            raise EstimationError("variance components must satisfy sigma_u2 >= 0, sigma_e2 > 0")
    theta = 1.0 - np.sqrt(sigma_e2 / (gi.counts * sigma_u2 + sigma_e2))
    Xs = gi.quasi_demean(X, theta)
    ys = gi.quasi_demean(design.y, theta)
    ls = _LeastSquares(Xs, ys, names)
    dof = design.n - len(names)
    ys_c = ys - ys.mean()
    return FitResult(
        names=names,
        coefficients=ls.beta,
        covariance=sigma_e2 * ls.xtx_inv,
        residuals=ls.resid,
        fitted=ls.fitted,
        dof=dof,
        rss=ls.rss,
        tss=float(ys_c @ ys_c),
        estimator="random-effects",
        n=design.n,
        substantive=design.names,
        regressors=Xs,
        clusters=design.cluster_labels,
        variance_components={"sigma_u2": float(sigma_u2), "sigma_e2": float(sigma_e2),
                             "theta_min": float(theta.min()), "theta_max": float(theta.max())},
        flags=tuple(flags),
    )


def fit(design: DesignMatrix, effects: str = "fixed", **kwargs) -> FitResult:
    effects = {"fe": "fixed", "re": "random"}.get(effects, effects)
    if effects == "fixed":
        return fit_fixed_effects(design, **kwargs)
    if effects == "random":
        return fit_random_effects(design, **kwargs)
    if effects == "pooled":
        return fit_pooled_ols(design, **kwargs)
    raise EstimationError(f"unknown effects structure {effects!r}")
