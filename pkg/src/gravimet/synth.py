"""
Synthetic gravity panels with known parameters.

ln y_ijt = intercept + sum_r slope_r x_r,ijt + u_ij + v_t + e_ijt

Policy counts are drawn per county-year (Poisson or negative binomial around
a county-specific intensity), so origin and destination regressors vary both
across and within pairs.  Moderators follow a county level plus a small
yearly perturbation.  All randomness comes from one PCG64 stream.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .data import (
    CATEGORIES,
    ENDPOINTS,
    MODERATORS,
    POLICY_TYPES,
    PanelDataset,
    moderator_column,
)
from .exceptions import ConfigError
from .specs import endpoint_of
from .transforms import PRNG_NAME

# per county-year means, roughly the origin block of the descriptive tables
DEFAULT_POLICY_MEANS = {
    "ap_tech": 1.8, "ap_inst": 0.7, "ap_behav": 1.1, "ap_nature": 0.5,
    "mp_tech": 5.6, "mp_inst": 3.2, "mp_behav": 1.9, "mp_nature": 0.5,
}
# (level mean, level sd, yearly sd, lower, upper)
DEFAULT_MODERATOR_LAWS = {
    "ln_income": (11.3, 0.23, 0.02, -math.inf, math.inf),
    "ageing_rate": (0.14, 0.028, 0.004, 0.0, 1.0),
    "racial_diversity": (0.45, 0.15, 0.01, 0.0, 0.999),
    "educational_attainment": (0.40, 0.10, 0.008, 0.0, 1.0),
}
BASELINE_TRUTH = {
    "ap_total_origin": 0.002,
    "mp_total_origin": -0.0015,
    "ap_total_dest": 0.02,
    "mp_total_dest": 0.0,
}
N_RACE_GROUPS = 4


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the simulated process.

    ``slopes`` keys are panel columns (``ap_total_origin``), moderator
    columns (``ln_income_origin``) or interaction names built from
    ``moderator`` (``mp_inst_origin_x_mod``, ``..._x_mod2``).
    """

    n_pairs: int = 300
    years: tuple[int, ...] = (2017, 2018, 2019, 2020)
    slopes: Mapping[str, float] = field(default_factory=lambda: dict(BASELINE_TRUTH))
    intercept: float = math.log(0.013)
    sigma_u: float = 0.2
    sigma_year: float = 0.05
    sigma_e: float = 0.15
    policy_means: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_POLICY_MEANS))
    county_sd: float = 0.5
    count_law: str = "poisson"
    negbin_dispersion: float = 2.0
    moderator: str | None = None
    moderator_laws: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_MODERATOR_LAWS))
    fe_correlation: float = 0.0
    missing_year_prob: float = 0.0
    n_counties: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        for name in ("sigma_u", "sigma_year", "sigma_e", "county_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.n_pairs < 1 or not self.years:
            raise ConfigError("need at least one pair and one year")
        if self.count_law not in ("poisson", "negbin"):
            raise ConfigError(f"unknown count law {self.count_law!r}")
        if not 0.0 <= self.missing_year_prob < 1.0:
            raise ConfigError("missing_year_prob must be in [0, 1)")
        if self.seed is None:
            raise ConfigError("seed must be explicit")
        if self.moderator is not None and self.moderator not in MODERATORS:
            raise ConfigError(f"unknown moderator {self.moderator!r}")
        if self.counties_needed() * (self.counties_needed() - 1) < self.n_pairs:
            raise ConfigError("too few counties for the requested number of pairs")

    def counties_needed(self) -> int:
        if self.n_counties is not None:
            return int(self.n_counties)
        return max(8, 2 * math.ceil(math.sqrt(self.n_pairs)))

    @classmethod
    def from_dict(cls, data: Mapping) -> "DgpConfig":
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown synth fields {sorted(extra)}")
        data = dict(data)
        if "moderator_laws" in data:
            data["moderator_laws"] = {**DEFAULT_MODERATOR_LAWS, **{k: tuple(v) for k, v in data["moderator_laws"].items()}}
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["years"] = list(self.years)
        out["slopes"] = dict(self.slopes)
        out["policy_means"] = dict(self.policy_means)
        out["moderator_laws"] = {k: list(v) for k, v in self.moderator_laws.items()}
        return out


@dataclass(frozen=True)
class SynthResult:
    panel: PanelDataset
    truth: dict
    flows: pd.DataFrame
    policies: pd.DataFrame
    moderators: pd.DataFrame
    race_proportions: np.ndarray = field(repr=False)

    def write(self, directory) -> None:
        """Write flows/policies/moderators CSVs plus ``truth.json``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        fmt = dict(index=False, float_format="%.17g", lineterminator="\n")
        self.flows.rename(columns={"origin": "origin_fips", "destination": "dest_fips"}).to_csv(out / "flows.csv", **fmt)
        self.policies.rename(columns={"county": "fips"}).to_csv(out / "policies.csv", **fmt)
        mods = pd.DataFrame({
            "fips": self.moderators["county"],
            "year": self.moderators["year"],
            "median_income": np.exp(self.moderators["ln_income"].to_numpy()),
            "ageing_rate": self.moderators["ageing_rate"],
        })
        for j in range(self.race_proportions.shape[1]):
            mods[f"race_prop_{j + 1}"] = self.race_proportions[:, j]
        mods["educational_attainment"] = self.moderators["educational_attainment"]
        mods.to_csv(out / "moderators.csv", **fmt)
        (out / "truth.json").write_text(json.dumps(self.truth, indent=2, sort_keys=True) + "\n")


def _draw_counts(rng, mean: np.ndarray, config: DgpConfig) -> np.ndarray:
    if config.count_law == "poisson":
        return rng.poisson(mean)
    r = config.negbin_dispersion
    return rng.negative_binomial(r, r / (r + mean))


def _race_proportions(rng, diversity: np.ndarray) -> np.ndarray:
    """Group shares whose 1 - sum p^2 equals ``diversity``.

    One dominant group of share a >= 1/k plus k - 1 equal minorities.
    """
    k = N_RACE_GROUPS
    d = np.clip(diversity, 0.0, 1.0 - 1.0 / k)
    # 1 - a^2 - (1-a)^2/(k-1) = d  ->  k a^2 - 2a - (k-2) + (k-1)d = 0
    a = (2 + np.sqrt(4 - 4 * k * (1 - (k - 1) * (1 - d)))) / (2 * k)
    rest = (1 - a) / (k - 1)
    return np.column_stack([a] + [rest] * (k - 1))


def generate(config: DgpConfig) -> SynthResult:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    years = np.asarray(config.years)
    T = len(years)
    C = config.counties_needed()
    counties = np.array([f"{6:02d}{i + 1:03d}" for i in range(C)])

    # counties and pairs
    all_pairs = np.array([(o, d) for o in range(C) for d in range(C) if o != d])
    chosen = np.sort(rng.choice(len(all_pairs), size=config.n_pairs, replace=False))
    pairs = all_pairs[chosen]

    # policy counts per county-year
    intensity = np.exp(config.county_sd * rng.standard_normal(C) - config.county_sd**2 / 2)
    pol = {"county": np.repeat(counties, T), "year": np.tile(years, C)}
    for c in CATEGORIES:
        for t in POLICY_TYPES:
            mean = config.policy_means[f"{c}_{t}"] * np.repeat(intensity, T)
            pol[f"{c}_{t}"] = _draw_counts(rng, mean, config)
    policies = pd.DataFrame(pol)

    # moderators per county-year
    mods = {"county": np.repeat(counties, T), "year": np.tile(years, C)}
    for name in MODERATORS:
        mu, level_sd, year_sd, lo, hi = config.moderator_laws[name]
        level = mu + level_sd * rng.standard_normal(C)
        values = np.repeat(level, T) + year_sd * rng.standard_normal(C * T)
        mods[name] = np.clip(values, lo, hi)
    moderators = pd.DataFrame(mods)
    race = _race_proportions(rng, moderators["racial_diversity"].to_numpy())
    moderators["racial_diversity"] = 1.0 - np.sum(race**2, axis=1)

    # pair-year skeleton with optional missing years
    P = config.n_pairs
    rows_pair = np.repeat(np.arange(P), T)
    rows_year = np.tile(np.arange(T), P)
    keep = rng.random(P * T) >= config.missing_year_prob
    rows_pair, rows_year = rows_pair[keep], rows_year[keep]

    u = config.sigma_u * rng.standard_normal(P)
    v = config.sigma_year * rng.standard_normal(T)
    eps = config.sigma_e * rng.standard_normal(len(rows_pair))

    frame = pd.DataFrame({
        "origin": counties[pairs[rows_pair, 0]],
        "destination": counties[pairs[rows_pair, 1]],
        "year": years[rows_year],
    })
    pol_idx = policies.set_index(["county", "year"])
    mod_idx = moderators.set_index(["county", "year"])
    for endpoint, key in (("origin", "origin"), ("dest", "destination")):
        idx = pd.MultiIndex.from_arrays([frame[key], frame["year"]])
        block = pol_idx.loc[idx]
        for col in block.columns:
            frame[f"{col}_{endpoint}"] = block[col].to_numpy()
        for c in CATEGORIES:
            frame[f"{c}_total_{endpoint}"] = sum(frame[f"{c}_{t}_{endpoint}"] for t in POLICY_TYPES)
        mblock = mod_idx.loc[idx]
        for name in MODERATORS:
            frame[moderator_column(name, endpoint)] = mblock[name].to_numpy()

    if config.fe_correlation:
        hp = (frame["ap_total_origin"] + frame["mp_total_origin"]).to_numpy(dtype=float)
        pair_mean = np.bincount(rows_pair, weights=hp, minlength=P) / np.maximum(np.bincount(rows_pair, minlength=P), 1)
        sd = pair_mean.std() or 1.0
        u = u + config.fe_correlation * config.sigma_u * (pair_mean - pair_mean.mean()) / sd

    systematic = np.full(len(frame), config.intercept) + u[rows_pair] + v[rows_year]
    for name, slope in config.slopes.items():
        systematic = systematic + slope * _regressor(frame, name, config.moderator)
    ln_y = systematic + eps
    frame["ln_outflow"] = ln_y
    frame["outflow_rate"] = np.exp(ln_y)
    # stored so that ln_outflow - systematic == noise holds bit for bit
    frame["noise"] = ln_y - systematic
    frame["systematic"] = systematic

    hp_o = frame["ap_total_origin"] + frame["mp_total_origin"]
    hp_d = frame["ap_total_dest"] + frame["mp_total_dest"]
    nonzero = ((hp_o > 0) & (hp_d > 0)).to_numpy()
    n_before = len(frame)
    frame = frame.loc[nonzero]

    lead = ["origin", "destination", "year", "outflow_rate", "ln_outflow"]
    frame = frame[lead + [c for c in frame.columns if c not in lead]]
    panel = PanelDataset(frame.reset_index(drop=True), ({
        "op": "synth.generate",
        "rows_before": n_before,
        "rows_after": int(nonzero.sum()),
        "dropped_zero_hp": int((~nonzero).sum()),
        "seed": int(config.seed),
        "prng": PRNG_NAME,
    },))

    pair_labels = [f"{counties[o]}-{counties[d]}" for o, d in pairs]
    truth = {
        "config": config.to_dict(),
        "prng": PRNG_NAME,
        "slopes": dict(config.slopes),
        "intercept": config.intercept,
        "pair_effects": dict(zip(pair_labels, u.tolist())),
        "year_effects": {str(y): float(e) for y, e in zip(years, v)},
        "rows_generated": n_before,
        "rows_kept": int(nonzero.sum()),
    }
    flows = frame[["origin", "destination", "year", "outflow_rate"]].reset_index(drop=True)
    return SynthResult(panel, truth, flows, policies, moderators, race)


def _regressor(frame: pd.DataFrame, name: str, moderator: str | None) -> np.ndarray:
    if name in frame.columns:
        return frame[name].to_numpy(dtype=float)
    for suffix, power in (("_x_mod2", 2), ("_x_mod", 1)):
        if name.endswith(suffix):
            if moderator is None:
                raise ConfigError(f"slope {name!r} needs config.moderator")
            base = name[: -len(suffix)]
            m = frame[moderator_column(moderator, endpoint_of(base))].to_numpy(dtype=float)
            return frame[base].to_numpy(dtype=float) * m**power
    if name.endswith("_sq") and name[:-3] in frame.columns:
        return frame[name[:-3]].to_numpy(dtype=float) ** 2
    raise ConfigError(f"unknown regressor {name!r} in synth slopes")
