"""Conditional marginal effects of a policy count across moderator values."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .estimators import FitResult
from .exceptions import EstimationError, InvalidInputError

DEFAULT_POINTS = 101
DEFAULT_QUANTILES = (0.01, 0.99)
CURVE_COLUMNS = ("moderator", "effect", "se", "lo90", "hi90", "lo95", "hi95")


def _terms(fit: FitResult, policy: str, order: str | None) -> tuple[list[str], str]:
    if order is None:
        order = "quadratic" if f"{policy}_x_mod2" in fit.names else "linear"
    if order not in ("linear", "quadratic"):
        raise InvalidInputError(f"order must be 'linear' or 'quadratic', got {order!r}")
    names = [policy, f"{policy}_x_mod"]
    if order == "quadratic":
        names.append(f"{policy}_x_mod2")
    missing = [n for n in names if n not in fit.names]
    if missing:
        raise EstimationError(f"fit lacks coefficient(s) {missing} needed for the marginal effect of {policy}")
    return names, order


def marginal_effect(fit: FitResult, policy: str, moderator_value, order: str | None = None):
    """Effect of one more ``policy`` count on the log outcome at moderator M.

    effect = b + c M (+ d M^2); the standard error is sqrt(g' V g) with
    g = (1, M, M^2) over the matching covariance block.  ``moderator_value``
    may be a scalar or an array; the return values match its shape.
    """
    names, order = _terms(fit, policy, order)
    idx = [fit.index(n) for n in names]
    beta = fit.coefficients[idx]
    V = fit.covariance[np.ix_(idx, idx)]
    m = np.asarray(moderator_value, dtype=float)
    G = np.stack([m**p for p in range(len(idx))], axis=-1)
    effect = G @ beta
    var = np.einsum("...i,ij,...j->...", G, V, G)
    se = np.sqrt(np.clip(var, 0.0, None))
    if m.ndim == 0:
        return float(effect), float(se)
    return effect, se


@dataclass(frozen=True)
class MarginalEffectCurve:
    policy: str
    moderator: str
    order: str
    grid: np.ndarray
    effect: np.ndarray
    se: np.ndarray
    ci90: np.ndarray
    ci95: np.ndarray
    dof: float
    coefficients: tuple[float, ...]
    vertex: float | None = None
    shape: str = "linear"
    sign_changes: tuple[float, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "moderator": self.grid, "effect": self.effect, "se": self.se,
            "lo90": self.ci90[:, 0], "hi90": self.ci90[:, 1],
            "lo95": self.ci95[:, 0], "hi95": self.ci95[:, 1],
        })

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def vertex_of(linear: float, quadratic: float) -> float | None:
    """Stationary point -c / (2 d) of b + c M + d M^2, or None when d == 0."""
    if quadratic == 0:
        return None
    return -linear / (2.0 * quadratic)


def make_grid(grid=None, values=None, points: int = DEFAULT_POINTS, quantiles=DEFAULT_QUANTILES) -> np.ndarray:
    """Resolve a grid spec.

    ``grid`` may be an explicit array or a ``(min, max, points)`` triple;
    otherwise ``points`` values span the given quantiles of ``values``.
    """
    if grid is not None:
        if isinstance(grid, tuple) and len(grid) == 3 and float(grid[2]).is_integer():
            lo, hi, npts = grid
            out = np.linspace(float(lo), float(hi), int(npts))
        else:
            out = np.asarray(grid, dtype=float).ravel()
    elif values is not None:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise InvalidInputError("no observed moderator values for the grid")
        lo, hi = np.quantile(values, quantiles, method="linear")
        out = np.linspace(lo, hi, points)
    else:
        raise InvalidInputError("grid spec needs explicit points or observed values")
    if out.size == 0:
        raise InvalidInputError("empty moderator grid")
    return out


def _sign_changes(grid: np.ndarray, effect: np.ndarray) -> tuple[float, ...]:
    roots = []
    for i in range(len(grid) - 1):
        a, b = effect[i], effect[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(float(grid[i] - a * (grid[i + 1] - grid[i]) / (b - a)))
    if len(effect) and effect[-1] == 0.0:
        roots.append(float(grid[-1]))
    return tuple(roots)


def effect_curve(
    fit: FitResult,
    policy: str,
    moderator: str,
    grid=None,
    values=None,
    points: int = DEFAULT_POINTS,
    order: str | None = None,
    dof: float | None = None,
) -> MarginalEffectCurve:
    """Evaluate :func:`marginal_effect` on a moderator grid with 90/95% bands.

    Bands use Student-t with G - 1 dof for clustered fits.  The vertex is
    reported only when it falls inside the grid.
    """
    names, order = _terms(fit, policy, order)
    m = make_grid(grid, values, points)
    effect, se = marginal_effect(fit, policy, m, order)
    effect, se = np.atleast_1d(effect), np.atleast_1d(se)
    if dof is None:
        dof = fit.n_clusters - 1 if fit.n_clusters else fit.dof
    q90 = stats.t.ppf(0.95, dof) if math.isfinite(dof) else stats.norm.ppf(0.95)
    q95 = stats.t.ppf(0.975, dof) if math.isfinite(dof) else stats.norm.ppf(0.975)
    coefs = tuple(fit.coef(n) for n in names)
    vertex, shape = None, "linear"
    if order == "quadratic" and coefs[2] != 0:
        shape = "inverted-U" if coefs[2] < 0 else "U"
        v = vertex_of(coefs[1], coefs[2])
        if m.min() <= v <= m.max():
            vertex = v
        else:
            shape = "monotone"
    return MarginalEffectCurve(
        policy=policy,
        moderator=moderator,
        order=order,
        grid=m,
        effect=effect,
        se=se,
        ci90=np.column_stack([effect - q90 * se, effect + q90 * se]),
        ci95=np.column_stack([effect - q95 * se, effect + q95 * se]),
        dof=float(dof),
        coefficients=coefs,
        vertex=vertex,
        shape=shape,
        sign_changes=_sign_changes(m, effect),
    )
