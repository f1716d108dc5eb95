"""
Core records, CSV ingestion and panel assembly.

The estimation sample is a long table with one row per
(origin, destination, year).  Records such as :class:`FlowRecord` validate
single rows; bulk work goes through pandas frames whose columns follow the
naming convention below.

Column naming
-------------
``{category}_{type}_{endpoint}``
    category in ``ap`` (adaptation) / ``mp`` (mitigation), type in
    ``tech``, ``inst``, ``behav``, ``nature`` or ``total``, endpoint in
    ``origin`` / ``dest``.  Example: ``mp_behav_origin``.
``{moderator}_{endpoint}``
    moderator in ``ln_income``, ``ageing_rate``, ``racial_diversity``,
    ``educational_attainment``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, InvalidInputError, JoinError

CATEGORIES = ("ap", "mp")
POLICY_TYPES = ("tech", "inst", "behav", "nature")
ENDPOINTS = ("origin", "dest")
MODERATORS = ("ln_income", "ageing_rate", "racial_diversity", "educational_attainment")

POLICY_TYPE_LABELS = {
    "tech": "Technological/Infrastructural",
    "inst": "Institutional",
    "behav": "Behavioral/Cultural",
    "nature": "Nature-based",
    "total": "Total",
}

FLOW_COLUMNS = ("origin_fips", "dest_fips", "year", "outflow_rate")
POLICY_CSV_COLUMNS = ("fips", "year") + tuple(
    f"{c}_{t}" for c in CATEGORIES for t in POLICY_TYPES
)

DEFAULT_AP_KEYWORDS = ("heat", "high temperature", "drought")
_PROPORTION_TOL = 1e-6


def policy_column(category: str, ptype: str, endpoint: str) -> str:
    return f"{category}_{ptype}_{endpoint}"


def policy_columns(endpoint: str | None = None, by_type: bool = True) -> list[str]:
    """Panel policy-count columns, origin block first."""
    ends = ENDPOINTS if endpoint is None else (endpoint,)
    types = POLICY_TYPES if by_type else ("total",)
    return [policy_column(c, t, e) for e in ends for c in CATEGORIES for t in types]


def moderator_column(moderator: str, endpoint: str) -> str:
    return f"{moderator}_{endpoint}"


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class CountyId:
    """Five-digit county FIPS code, kept as a zero-padded string."""

    fips: str

    def __post_init__(self):
        object.__setattr__(self, "fips", normalize_fips(self.fips))

    def __str__(self):
        return self.fips


def normalize_fips(value) -> str:
    if isinstance(value, CountyId):
        return value.fips
    if isinstance(value, (int, np.integer)):
        text = str(int(value))
    else:
        text = str(value).strip()
        if text.endswith(".0"):
            text = text[:-2]
    if not text.isdigit() or len(text) > 5:
        raise InvalidInputError(f"invalid FIPS code {value!r}")
    text = text.zfill(5)
    if not 1 <= int(text[:2]) <= 56:
        raise InvalidInputError(f"FIPS {text!r} has state prefix outside 01-56")
    return text


@dataclass(frozen=True)
class FlowRecord:
    origin: CountyId
    destination: CountyId
    year: int
    outflow_rate: float

    def __post_init__(self):
        object.__setattr__(self, "origin", CountyId(self.origin))
        object.__setattr__(self, "destination", CountyId(self.destination))
        if self.origin == self.destination:
            raise InvalidInputError(f"flow from {self.origin} to itself")
        rate = float(self.outflow_rate)
        if not (math.isfinite(rate) and 0.0 < rate < 1.0):
            raise InvalidInputError(f"outflow_rate {self.outflow_rate!r} outside (0, 1)")


@dataclass(frozen=True)
class PolicyCounts:
    """Policy counts of one county-year; slots ordered tech, inst, behav, nature."""

    county: CountyId
    year: int
    ap_by_type: tuple[int, int, int, int]
    mp_by_type: tuple[int, int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "county", CountyId(self.county))
        for name in ("ap_by_type", "mp_by_type"):
            counts = tuple(int(v) for v in getattr(self, name))
            if len(counts) != len(POLICY_TYPES) or min(counts) < 0:
                raise InvalidInputError(f"{name} must hold 4 non-negative counts, got {counts}")
            object.__setattr__(self, name, counts)

    @property
    def ap_total(self) -> int:
        return sum(self.ap_by_type)

    @property
    def mp_total(self) -> int:
        return sum(self.mp_by_type)


@dataclass(frozen=True)
class ModeratorRecord:
    county: CountyId
    year: int
    ln_income: float
    ageing_rate: float
    racial_diversity: float
    educational_attainment: float

    def __post_init__(self):
        object.__setattr__(self, "county", CountyId(self.county))
        if not math.isfinite(self.ln_income):
            raise InvalidInputError("ln_income must be finite")
        for name in ("ageing_rate", "educational_attainment"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name}={getattr(self, name)} outside [0, 1]")
        if not 0.0 <= self.racial_diversity < 1.0:
            raise InvalidInputError(f"racial_diversity={self.racial_diversity} outside [0, 1)")


@dataclass(frozen=True)
class PanelObservation:
    pair_key: tuple[str, str]
    year: int
    ln_outflow: float
    regressors: Mapping[str, float]
    moderators_origin: ModeratorRecord | None = None
    moderators_destination: ModeratorRecord | None = None


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

_KEY = ["origin", "destination", "year"]


@dataclass(frozen=True)
class PanelDataset:
    """Immutable pair-year panel.

    ``frame`` is sorted by (origin, destination, year) and must not be
    mutated in place; every transform returns a new dataset and appends a
    step to ``provenance``.
    """

    frame: pd.DataFrame
    provenance: tuple = field(default=())

    def __post_init__(self):
        missing = [c for c in _KEY + ["ln_outflow"] if c not in self.frame.columns]
        if missing:
            raise DataError(f"panel frame lacks columns {missing}")
        if self.frame.duplicated(_KEY).any():
            dup = self.frame.loc[self.frame.duplicated(_KEY, keep=False), _KEY].iloc[0]
            raise DataError(f"duplicate pair-year {tuple(dup)}")
        frame = self.frame.sort_values(_KEY, kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "provenance", tuple(MappingProxyType(dict(p)) for p in self.provenance))

    def __len__(self):
        return len(self.frame)

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def column(self, name: str) -> np.ndarray:
        if name not in self.frame.columns:
            raise DataError(f"panel has no column {name!r}")
        return self.frame[name].to_numpy(dtype=float)

    @property
    def pair_labels(self) -> np.ndarray:
        """One string label per row, ``"origin-destination"``."""
        return (self.frame["origin"].astype(str) + "-" + self.frame["destination"].astype(str)).to_numpy()

    @property
    def pair_codes(self) -> np.ndarray:
        """Dense integer pair codes in canonical order."""
        return self.frame.groupby(["origin", "destination"], sort=True).ngroup().to_numpy()

    @property
    def years(self) -> np.ndarray:
        return self.frame["year"].to_numpy(dtype=int)

    @property
    def n_pairs(self) -> int:
        return int(self.frame.groupby(["origin", "destination"]).ngroups)

    @property
    def share_multi_year(self) -> float:
        """Share of pairs observed in at least two years."""
        if self.n == 0:
            return float("nan")
        counts = self.frame.groupby(["origin", "destination"]).size()
        return float((counts >= 2).mean())

    def derive(self, frame: pd.DataFrame, step: Mapping) -> "PanelDataset":
        record = {"op": step.get("op"), "rows_before": self.n, "rows_after": len(frame)}
        record.update(step)
        return PanelDataset(frame, self.provenance + (record,))

    def observations(self) -> Iterator[PanelObservation]:
        regressor_cols = [c for c in self.frame.columns if _is_policy_col(c)]
        mod_cols = {e: [moderator_column(m, e) for m in MODERATORS] for e in ENDPOINTS}
        has_mods = all(c in self.frame.columns for cols in mod_cols.values() for c in cols)
        for row in self.frame.itertuples(index=False):
            values = row._asdict()
            mods = {}
            if has_mods:
                for e, county in (("origin", values["origin"]), ("dest", values["destination"])):
                    mods[e] = ModeratorRecord(
                        county, int(values["year"]), *(float(values[c]) for c in mod_cols[e])
                    )
            yield PanelObservation(
                pair_key=(values["origin"], values["destination"]),
                year=int(values["year"]),
                ln_outflow=float(values["ln_outflow"]),
                regressors=MappingProxyType({c: float(values[c]) for c in regressor_cols}),
                moderators_origin=mods.get("origin"),
                moderators_destination=mods.get("dest"),
            )

    def provenance_dict(self) -> dict:
        return {
            "rows": self.n,
            "pairs": self.n_pairs,
            "share_pairs_multi_year": self.share_multi_year,
            "steps": [dict(p) for p in self.provenance],
        }

    def save(self, path) -> None:
        """Write the panel as CSV and its provenance as ``<stem>.provenance.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        prov = path.with_name(path.stem + ".provenance.json")
        prov.write_text(json.dumps(self.provenance_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")


def _is_policy_col(name: str) -> bool:
    parts = name.split("_")
    return (
        len(parts) == 3
        and parts[0] in CATEGORIES
        and parts[1] in POLICY_TYPES + ("total",)
        and parts[2] in ENDPOINTS
    )


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (MappingProxyType,)):
        return dict(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def keyword_filter_adaptation(actions: Sequence, keywords: Sequence[str] = DEFAULT_AP_KEYWORDS) -> np.ndarray:
    """Flag actions whose text mentions any keyword.

    Each entry of ``actions`` is either a string or an ``(action,
    description)`` pair; pairs are joined with a space before matching.
    Matching is a case-insensitive substring test, so ``"heat"`` also hits
    ``"heatwave"`` and ``"wheat"``.
    """
    if not keywords:
        raise InvalidInputError("at least one keyword is required")
    needles = [k.casefold() for k in keywords]
    mask = np.zeros(len(actions), dtype=bool)
    for i, entry in enumerate(actions):
        if entry is None:
            continue
        if not isinstance(entry, str):
            entry = " ".join("" if part is None else str(part) for part in entry)
        text = entry.casefold()
        mask[i] = any(k in text for k in needles)
    return mask


def compute_racial_diversity(proportions: Iterable[float]) -> float:
    """Probability that two random residents belong to different groups: 1 - sum(p**2)."""
    p = np.asarray(list(proportions), dtype=float)
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("proportions must be finite and non-negative")
    total = p.sum()
    if total == 0:
        raise InvalidInputError("all racial-group proportions are zero")
    if abs(total - 1.0) > _PROPORTION_TOL:
        raise InvalidInputError(f"proportions sum to {total}, not 1")
    # 1 - sum(q^2) / sum(q)^2 with q = p / max(p): scale-free, and exactly
    # 1 - 1/k for k equal groups since every q is then 1.0
    q = p / p.max()
    s1 = math.fsum(q)
    s2 = math.fsum(q * q)
    return float(max(0.0, 1.0 - (s2 / s1) / s1))


@dataclass(frozen=True)
class SampleFilter:
    """Sample rules applied by :func:`assemble_panel`."""

    nonzero_hp: bool = True
    require_moderators: bool = True


def _records_frame(table, kind: str) -> pd.DataFrame:
    if isinstance(table, pd.DataFrame):
        return table.copy()
    rows = list(table)
    if kind == "flows":
        return pd.DataFrame(
            [(r.origin.fips, r.destination.fips, r.year, r.outflow_rate) for r in rows],
            columns=["origin", "destination", "year", "outflow_rate"],
        )
    if kind == "policies":
        data = []
        for r in rows:
            data.append((r.county.fips, r.year, *r.ap_by_type, *r.mp_by_type))
        cols = ["county", "year"] + [f"{c}_{t}" for c in CATEGORIES for t in POLICY_TYPES]
        return pd.DataFrame(data, columns=cols)
    if kind == "moderators":
        return pd.DataFrame(
            [(r.county.fips, r.year, r.ln_income, r.ageing_rate, r.racial_diversity, r.educational_attainment) for r in rows],
            columns=["county", "year", *MODERATORS],
        )
    raise ValueError(kind)


def _require(frame: pd.DataFrame, columns: Iterable[str], table: str) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{table} table is missing columns {missing}")


def _unique_keys(frame: pd.DataFrame, key: list[str], table: str) -> None:
    dup = frame.duplicated(key, keep=False)
    if dup.any():
        raise DataError(f"duplicate {table} key {tuple(frame.loc[dup, key].iloc[0])}")


def assemble_panel(flows, policies, moderators=None, rule: SampleFilter = SampleFilter()) -> PanelDataset:
    """Join flows to endpoint policy counts and moderators.

    Parameters
    ----------
    flows : DataFrame or iterable of FlowRecord
        Columns ``origin, destination, year, outflow_rate``.
    policies : DataFrame or iterable of PolicyCounts
        Columns ``county, year`` and ``{ap,mp}_{tech,inst,behav,nature}``.
    moderators : DataFrame or iterable of ModeratorRecord, optional
        Columns ``county, year`` plus the four moderators.
    rule : SampleFilter

    Returns
    -------
    PanelDataset
        Flows without a policy record at either endpoint are dropped (inner
        join).  With ``rule.nonzero_hp`` pair-years where either endpoint
        has zero policies in total are dropped.  A retained county-year
        without a moderator row raises :class:`JoinError`.
    """
    flows = _records_frame(flows, "flows")
    policies = _records_frame(policies, "policies")
    _require(flows, ["origin", "destination", "year", "outflow_rate"], "flows")
    type_cols = [f"{c}_{t}" for c in CATEGORIES for t in POLICY_TYPES]
    _require(policies, ["county", "year", *type_cols], "policies")

    flows = flows[["origin", "destination", "year", "outflow_rate"]].copy()
    flows["origin"] = flows["origin"].map(normalize_fips)
    flows["destination"] = flows["destination"].map(normalize_fips)
    flows["year"] = flows["year"].astype(int)
    flows["outflow_rate"] = flows["outflow_rate"].astype(float)
    _unique_keys(flows, _KEY, "flows")
    n_input = len(flows)

    rate = flows["outflow_rate"].to_numpy()
    bad_rate = ~(np.isfinite(rate) & (rate > 0))
    self_loop = (flows["origin"] == flows["destination"]).to_numpy()
    rejected = []
    for idx in np.flatnonzero(bad_rate | self_loop):
        row = flows.iloc[idx]
        reason = "origin equals destination" if self_loop[idx] else "non-positive or non-finite outflow_rate"
        rejected.append({"key": [row["origin"], row["destination"], int(row["year"])], "reason": reason})
    flows = flows.loc[~(bad_rate | self_loop)]

    pol = policies[["county", "year", *type_cols]].copy()
    pol["county"] = pol["county"].map(normalize_fips)
    pol["year"] = pol["year"].astype(int)
    _unique_keys(pol, ["county", "year"], "policies")
    if (pol[type_cols].to_numpy() < 0).any():
        raise InvalidInputError("policy counts must be non-negative")
    for c in CATEGORIES:
        pol[f"{c}_total"] = pol[[f"{c}_{t}" for t in POLICY_TYPES]].sum(axis=1)
    pol_cols = type_cols + [f"{c}_total" for c in CATEGORIES]

    panel = flows
    for endpoint, key in (("origin", "origin"), ("dest", "destination")):
        renamed = pol.rename(columns={c: f"{c}_{endpoint}" for c in pol_cols}).rename(columns={"county": key})
        panel = panel.merge(renamed, on=[key, "year"], how="inner", validate="many_to_one")
    n_no_policy = len(flows) - len(panel)

    n_zero_hp = 0
    if rule.nonzero_hp:
        hp_o = panel["ap_total_origin"] + panel["mp_total_origin"]
        hp_d = panel["ap_total_dest"] + panel["mp_total_dest"]
        keep = (hp_o > 0) & (hp_d > 0)
        n_zero_hp = int((~keep).sum())
        panel = panel.loc[keep]

    if moderators is not None:
        mods = _records_frame(moderators, "moderators")
        _require(mods, ["county", "year", *MODERATORS], "moderators")
        mods = mods[["county", "year", *MODERATORS]].copy()
        mods["county"] = mods["county"].map(normalize_fips)
        mods["year"] = mods["year"].astype(int)
        _unique_keys(mods, ["county", "year"], "moderators")
        known = set(zip(mods["county"], mods["year"]))
        for key in ("origin", "destination"):
            for county, year in zip(panel[key], panel["year"]):
                if (county, int(year)) not in known:
                    raise JoinError("moderator", (county, int(year)))
        for endpoint, key in (("origin", "origin"), ("dest", "destination")):
            renamed = mods.rename(columns={m: f"{m}_{endpoint}" for m in MODERATORS}).rename(columns={"county": key})
            panel = panel.merge(renamed, on=[key, "year"], how="left", validate="many_to_one")
    elif rule.require_moderators:
        raise DataError("moderator table required by the sample rule but not supplied")

    panel = panel.copy()
    panel["ln_outflow"] = np.log(panel["outflow_rate"].to_numpy(dtype=float))
    ordered = ["origin", "destination", "year", "outflow_rate", "ln_outflow"]
    ordered += policy_columns("origin") + [f"{c}_total_origin" for c in CATEGORIES]
    ordered += policy_columns("dest") + [f"{c}_total_dest" for c in CATEGORIES]
    ordered += [c for c in panel.columns if c not in ordered]
    panel = panel[ordered]

    step = {
        "op": "assemble_panel",
        "rows_before": n_input,
        "rows_after": len(panel),
        "rejected_rows": rejected,
        "dropped_no_policy_record": int(n_no_policy),
        "dropped_zero_hp": n_zero_hp,
        "nonzero_hp_filter": rule.nonzero_hp,
    }
    return PanelDataset(panel, (step,))


def apply_nonzero_hp_filter(panel: PanelDataset) -> PanelDataset:
    f = panel.frame
    keep = ((f["ap_total_origin"] + f["mp_total_origin"]) > 0) & ((f["ap_total_dest"] + f["mp_total_dest"]) > 0)
    return panel.derive(f.loc[keep], {"op": "nonzero_hp_filter", "dropped_zero_hp": int((~keep).sum())})


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------


def _chunk_moments(x: np.ndarray):
    n = np.sum(~np.isnan(x), axis=0)
    mean = np.nanmean(x, axis=0) if x.size else np.zeros(x.shape[1])
    m2 = np.nansum((x - mean) ** 2, axis=0)
    return n, mean, m2, np.nanmin(x, axis=0), np.nanmax(x, axis=0)


def summarize(panel: PanelDataset | pd.DataFrame, columns: Sequence[str] | None = None, chunk: int = 4096) -> pd.DataFrame:
    """Mean, sample sd, min and max per numeric column.

    Moments are accumulated in a single pass over row chunks and merged
    with the pairwise update of Chan, Golub and LeVeque.
    """
    frame = panel.frame if isinstance(panel, PanelDataset) else panel
    if len(frame) == 0:
        raise InvalidInputError("cannot summarize an empty panel")
    if columns is None:
        columns = [c for c in frame.columns if c not in _KEY and pd.api.types.is_numeric_dtype(frame[c])]
    values = frame[list(columns)].to_numpy(dtype=float)
    n = np.zeros(values.shape[1])
    mean = np.zeros(values.shape[1])
    m2 = np.zeros(values.shape[1])
    lo = np.full(values.shape[1], np.inf)
    hi = np.full(values.shape[1], -np.inf)
    for start in range(0, len(values), chunk):
        nb, mb, m2b, lob, hib = _chunk_moments(values[start:start + chunk])
        tot = n + nb
        delta = mb - mean
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(tot > 0, mean + delta * nb / tot, 0.0)
            m2 = m2 + m2b + np.where(tot > 0, delta**2 * n * nb / tot, 0.0)
        n = tot
        lo = np.minimum(lo, lob)
        hi = np.maximum(hi, hib)
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.sqrt(np.where(n > 1, m2 / (n - 1), np.nan))
    # rounding in the merge must not give a constant column a tiny sd
    sd = np.where((n > 1) & (lo == hi), 0.0, sd)
    return pd.DataFrame(
        {"n": n.astype(int), "mean": mean, "sd": sd, "min": lo, "max": hi},
        index=pd.Index(list(columns), name="variable"),
    )


# ---------------------------------------------------------------------------
# CSV adapters
# ---------------------------------------------------------------------------


def _read_csv(path, required: Sequence[str], table: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{table} file not found: {path}")
    frame = pd.read_csv(path, dtype={"fips": str, "origin_fips": str, "dest_fips": str}, encoding="utf-8")
    frame.columns = [c.strip() for c in frame.columns]
    _require(frame, required, table)
    return frame


def read_flows_csv(path) -> pd.DataFrame:
    """``origin_fips,dest_fips,year,outflow_rate`` -> flows frame."""
    raw = _read_csv(path, FLOW_COLUMNS, "flows")
    return pd.DataFrame({
        "origin": raw["origin_fips"].map(normalize_fips),
        "destination": raw["dest_fips"].map(normalize_fips),
        "year": raw["year"].astype(int),
        "outflow_rate": raw["outflow_rate"].astype(float),
    })


def read_policies_csv(path) -> pd.DataFrame:
    raw = _read_csv(path, POLICY_CSV_COLUMNS, "policies")
    out = raw[list(POLICY_CSV_COLUMNS)].rename(columns={"fips": "county"})
    out["county"] = out["county"].map(normalize_fips)
    counts = out.columns[2:]
    if (out[counts] < 0).to_numpy().any() or (out[counts] % 1 != 0).to_numpy().any():
        raise InvalidInputError("policy counts must be non-negative integers")
    out[counts] = out[counts].astype(int)
    return out


def read_moderators_csv(path) -> pd.DataFrame:
    """Raw ACS-style moderator table -> moderators frame.

    Median income is logged; racial diversity is computed from the
    ``race_prop_*`` columns.
    """
    raw = _read_csv(path, ("fips", "year", "median_income", "ageing_rate", "educational_attainment"), "moderators")
    race_cols = sorted((c for c in raw.columns if c.startswith("race_prop_")), key=lambda c: int(c.rsplit("_", 1)[1]))
    if not race_cols:
        raise DataError("moderators table has no race_prop_* columns")
    income = raw["median_income"].astype(float).to_numpy()
    if np.any(~np.isfinite(income) | (income <= 0)):
        raise InvalidInputError("median_income must be positive")
    out = pd.DataFrame({
        "county": raw["fips"].map(normalize_fips),
        "year": raw["year"].astype(int),
        "ln_income": np.log(income),
        "ageing_rate": raw["ageing_rate"].astype(float),
        "racial_diversity": [compute_racial_diversity(row) for row in raw[race_cols].to_numpy(dtype=float)],
        "educational_attainment": raw["educational_attainment"].astype(float),
    })
    for name in ("ageing_rate", "educational_attainment"):
        v = out[name].to_numpy()
        if np.any((v < 0) | (v > 1)):
            raise InvalidInputError(f"{name} outside [0, 1]")
    return out


def load_panel(flows_path, policies_path, moderators_path=None, rule: SampleFilter = SampleFilter()) -> PanelDataset:
    flows = read_flows_csv(flows_path)
    policies = read_policies_csv(policies_path)
    moderators = read_moderators_csv(moderators_path) if moderators_path is not None else None
    if moderators is None:
        rule = SampleFilter(nonzero_hp=rule.nonzero_hp, require_moderators=False)
    return assemble_panel(flows, policies, moderators, rule)
