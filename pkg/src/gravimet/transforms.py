"""Panel surgery: pair demeaning, lags and the robustness-sample transforms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .data import PanelDataset, policy_columns
from .exceptions import InvalidInputError

PRNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class GroupIndex:
    """Row partition by pair.

    ``codes[i]`` is the dense group of row ``i``; ``counts[g]`` is T_g.
    """

    codes: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "GroupIndex":
        _, codes = np.unique(np.asarray(labels), return_inverse=True)
        codes = codes.ravel()
        return cls(codes, np.bincount(codes))

    @property
    def n_groups(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return len(self.codes)

    def rows(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.codes == g)

    def means(self, values: np.ndarray) -> np.ndarray:
        """Group means, shape (G,) or (G, k)."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return np.bincount(self.codes, weights=values, minlength=self.n_groups) / self.counts
        sums = np.zeros((self.n_groups, values.shape[1]))
        np.add.at(sums, self.codes, values)
        return sums / self.counts[:, None]

    def demean(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = values - self.means(values)[self.codes]
        # second sweep removes the rounding left by the first
        return out - self.means(out)[self.codes]

    def quasi_demean(self, values: np.ndarray, theta) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (self.n_groups,))
        if np.any(~np.isfinite(theta)) or np.any((theta < 0) | (theta > 1)):
            raise InvalidInputError("theta must lie in [0, 1] for every group")
        if np.all(theta == 1.0):
            return self.demean(values)
        shift = theta[self.codes]
        means = self.means(values)[self.codes]
        return values - (shift * means if values.ndim == 1 else shift[:, None] * means)


class WithinResult(NamedTuple):
    values: np.ndarray
    groups: GroupIndex
    means: np.ndarray


def within_transform(panel: PanelDataset, columns: Sequence[str]) -> WithinResult:
    """Subtract pair means from ``columns``; means are returned for back-transformation."""
    groups = GroupIndex.from_labels(panel.pair_codes)
    values = np.column_stack([panel.column(c) for c in columns])
    return WithinResult(groups.demean(values), groups, groups.means(values))


def quasi_demean(panel: PanelDataset, columns: Sequence[str], theta_per_group) -> np.ndarray:
    groups = GroupIndex.from_labels(panel.pair_codes)
    values = np.column_stack([panel.column(c) for c in columns])
    return groups.quasi_demean(values, theta_per_group)


def lag_regressors(panel: PanelDataset, k: int, columns: Sequence[str] | None = None) -> PanelDataset:
    """Replace regressors at (pair, t) with their values at (pair, t - k).

    Rows without an exact (pair, t - k) observation are dropped; the outcome
    stays at t.
    """
    if int(k) != k or k <= 0:
        raise InvalidInputError(f"lag must be a positive integer, got {k!r}")
    k = int(k)
    if columns is None:
        columns = [c for c in policy_columns("origin") + policy_columns("dest") if c in panel.frame.columns]
        columns += [c for c in ("ap_total_origin", "mp_total_origin", "ap_total_dest", "mp_total_dest") if c in panel.frame.columns]
    frame = panel.frame
    key = ["origin", "destination", "year"]
    prior = frame[["origin", "destination", "year", *columns]].copy()
    prior["year"] = prior["year"] + k
    merged = frame.drop(columns=list(columns)).merge(prior, on=key, how="inner", validate="one_to_one")
    merged = merged[list(frame.columns)]
    return panel.derive(merged, {"op": "lag_regressors", "k": k, "columns": list(columns)})


def quantile_bounds(values: np.ndarray, pct: float) -> tuple[float, float]:
    """Inclusive linear-interpolation quantiles at ``pct`` and ``1 - pct``.

    ``pct = 0`` gives the sample min and max.
    """
    if not 0.0 <= pct < 0.5:
        raise InvalidInputError(f"tail fraction must be in [0, 0.5), got {pct}")
    lo, hi = np.quantile(np.asarray(values, dtype=float), [pct, 1.0 - pct], method="linear")
    return float(lo), float(hi)


def _sync_outcome(frame, column):
    if column == "outflow_rate":
        frame["ln_outflow"] = np.log(frame["outflow_rate"].to_numpy(dtype=float))
    elif column == "ln_outflow" and "outflow_rate" in frame.columns:
        frame["outflow_rate"] = np.exp(frame["ln_outflow"].to_numpy(dtype=float))


def winsorize(panel: PanelDataset, column: str = "outflow_rate", pct: float = 0.01, bounds=None) -> PanelDataset:
    """Cap ``column`` at its ``pct`` and ``1 - pct`` quantiles.

    Winsorizing the raw rate also refreshes ``ln_outflow``.
    """
    lo, hi = quantile_bounds(panel.column(column), pct) if bounds is None else bounds
    frame = panel.frame.copy()
    frame[column] = np.clip(frame[column].to_numpy(dtype=float), lo, hi)
    _sync_outcome(frame, column)
    return panel.derive(frame, {"op": "winsorize", "column": column, "pct": pct, "bounds": [lo, hi]})


def trim(panel: PanelDataset, column: str = "outflow_rate", pct: float = 0.05, bounds=None) -> PanelDataset:
    """Drop rows strictly outside the ``pct`` / ``1 - pct`` quantiles of ``column``."""
    values = panel.column(column)
    lo, hi = quantile_bounds(values, pct) if bounds is None else bounds
    keep = (values >= lo) & (values <= hi)
    return panel.derive(panel.frame.loc[keep], {"op": "trim", "column": column, "pct": pct, "bounds": [lo, hi]})


def subsample(panel: PanelDataset, fraction: float, seed: int) -> PanelDataset:
    """Uniform draw of round(fraction * n) rows without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
    if seed is None:
        raise InvalidInputError("subsample needs an explicit seed")
    n = panel.n
    size = int(np.floor(fraction * n + 0.5))
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = np.sort(rng.choice(n, size=size, replace=False))
    return panel.derive(
        panel.frame.iloc[rows],
        {"op": "subsample", "fraction": fraction, "seed": int(seed), "prng": PRNG_NAME},
    )


def exclude_year(panel: PanelDataset, year: int | Iterable[int]) -> PanelDataset:
    years = [int(year)] if np.isscalar(year) else [int(y) for y in year]
    keep = ~panel.frame["year"].isin(years)
    return panel.derive(panel.frame.loc[keep], {"op": "exclude_year", "years": years})
