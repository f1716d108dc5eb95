"""Shared fixture builders for the test suite."""
import numpy as np
import pandas as pd

from gravimet.data import PanelDataset
from gravimet.estimators import DesignMatrix


def random_design(rng, n_pairs, n_years, k, drop=0.0, effect_sd=1.0):
    """Random unbalanced panel design with pair/year structure."""
    g = np.repeat(np.arange(n_pairs), n_years)
    t = np.tile(2017 + np.arange(n_years), n_pairs)
    keep = rng.random(g.size) >= drop
    # every pair keeps at least two rows so the within design stays identified
    for p in range(n_pairs):
        rows = np.flatnonzero(g == p)
        if keep[rows].sum() < 2:
            keep[rows[:2]] = True
    g, t = g[keep], t[keep]
    X = rng.standard_normal((g.size, k)) + effect_sd * rng.standard_normal((n_pairs, k))[g]
    beta = rng.standard_normal(k)
    y = X @ beta + effect_sd * rng.standard_normal(n_pairs)[g] + 0.3 * rng.standard_normal(g.size)
    names = tuple(f"x{i}" for i in range(k))
    return DesignMatrix(y, X, names, groups=g, years=t, clusters=g, outcome="y")


def dummy_ols(design, pair=True, year=True):
    """Slopes from OLS on the explicit dummy-variable expansion."""
    cols = [design.X]
    if pair:
        cols.append(pd.get_dummies(design.groups).to_numpy(dtype=float))
    else:
        cols.append(np.ones((design.n, 1)))
    if year:
        yd = pd.get_dummies(design.years).to_numpy(dtype=float)
        cols.append(yd[:, 1:])
    Z = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(Z, design.y, rcond=None)
    return coef[: design.k]


def toy_panel(values, column="x", years=None):
    """Panel with one row per (pair, year) from a dict pair -> list of values."""
    rows = []
    for p, vals in values.items():
        ys = years[p] if years else range(2017, 2017 + len(vals))
        for year, v in zip(ys, vals):
            rows.append({"origin": "06001", "destination": f"06{p + 2:03d}", "year": year,
                         "ln_outflow": 0.0, column: float(v)})
    return PanelDataset(pd.DataFrame(rows))
