"""
Design builders for the three estimation equations.

* baseline: AP/MP totals at origin and destination (4 columns)
* heterogeneity: the 4 policy types of each total (16 columns)
* interaction: selected policy types interacted with an endpoint-matched
  moderator, linearly or with squared terms

Interaction naming: ``mp_behav_origin_x_mod`` is the policy times its
endpoint's moderator, ``mp_behav_origin_x_mod2`` the policy times the
squared moderator, ``ln_income_origin_sq`` the squared moderator itself.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import ENDPOINTS, MODERATORS, PanelDataset, moderator_column, policy_columns
from .estimators import DesignMatrix
from .exceptions import ConfigError, DataError
from .transforms import lag_regressors

BASELINE_COLUMNS = ("ap_total_origin", "mp_total_origin", "ap_total_dest", "mp_total_dest")
HETEROGENEITY_COLUMNS = tuple(policy_columns("origin") + policy_columns("dest"))
SIGNIFICANT_SIX = (
    "mp_inst_origin",
    "mp_behav_origin",
    "ap_behav_dest",
    "mp_tech_dest",
    "mp_behav_dest",
    "mp_nature_dest",
)
ORDERS = ("none", "linear", "quadratic")
KINDS = ("baseline", "heterogeneity", "interaction")
EFFECTS = ("fixed", "random", "pooled")


def endpoint_of(column: str) -> str:
    end = column.rsplit("_", 1)[-1]
    if end not in ENDPOINTS:
        raise DataError(f"cannot tell the endpoint of column {column!r}")
    return end


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one estimation.

    ``interacted=None`` means the six policy types kept for the moderation
    models; ``"all"`` interacts all sixteen.
    """

    name: str = "baseline"
    kind: str = "baseline"
    moderator: str | None = None
    order: str = "none"
    effects: str = "fixed"
    cluster: str = "pair"
    lag: int = 0
    interacted: tuple[str, ...] | str | None = None
    center: bool | float = False
    outcome: str = "ln_outflow"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"model {self.name!r}: unknown kind {self.kind!r}; choose from {KINDS}")
        if self.order not in ORDERS:
            raise ConfigError(f"model {self.name!r}: unknown interaction order {self.order!r}")
        if self.effects not in EFFECTS:
            raise ConfigError(f"model {self.name!r}: unknown effects {self.effects!r}")
        if self.lag not in (0, 1, 2):
            raise ConfigError(f"model {self.name!r}: lag must be 0, 1 or 2")
        if self.cluster != "pair":
            raise ConfigError(f"model {self.name!r}: only pair-level clustering is supported")
        if self.kind == "interaction":
            if self.moderator is None or self.order == "none":
                raise ConfigError(f"model {self.name!r}: interaction models need a moderator and an order")
            _check_moderator(self.moderator)
        elif self.moderator is not None:
            raise ConfigError(f"model {self.name!r}: moderator set on a {self.kind} model")
        if isinstance(self.interacted, list):
            object.__setattr__(self, "interacted", tuple(self.interacted))

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown model fields {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if v is not None}
        if isinstance(out.get("interacted"), tuple):
            out["interacted"] = list(out["interacted"])
        return out


def _check_moderator(moderator: str) -> None:
    if moderator not in MODERATORS:
        raise ConfigError(f"unknown moderator {moderator!r}; valid: {', '.join(MODERATORS)}")


def _design(panel: PanelDataset, columns: dict[str, np.ndarray], outcome: str = "ln_outflow") -> DesignMatrix:
    pairs = panel.pair_labels
    return DesignMatrix(
        y=panel.column(outcome),
        X=np.column_stack(list(columns.values())) if columns else np.empty((panel.n, 0)),
        names=tuple(columns),
        groups=pairs,
        years=panel.years,
        clusters=pairs,
        outcome=outcome,
    )


def _take(panel: PanelDataset, names: Sequence[str]) -> dict[str, np.ndarray]:
    missing = [c for c in names if c not in panel.frame.columns]
    if missing:
        raise DataError(f"panel is missing regressor columns {missing}")
    return {c: panel.column(c) for c in names}


def build_baseline(panel: PanelDataset) -> DesignMatrix:
    return _design(panel, _take(panel, BASELINE_COLUMNS))


def build_heterogeneity(panel: PanelDataset) -> DesignMatrix:
    return _design(panel, _take(panel, HETEROGENEITY_COLUMNS))


def moderator_values(panel: PanelDataset, moderator: str, endpoint: str, center: bool | float = False) -> np.ndarray:
    m = panel.column(moderator_column(moderator, endpoint))
    if center is True:
        return m - m.mean()
    if center is not False:
        return m - float(center)
    return m


def build_interaction(
    panel: PanelDataset,
    moderator: str,
    order: str = "quadratic",
    interacted: Sequence[str] | str | None = None,
    center: bool | float = False,
) -> DesignMatrix:
    """Policy types, endpoint-matched moderator terms and their products.

    Column order: policies, then per policy its linear (and squared)
    interaction, then the origin/destination moderator and, for the
    quadratic order, their squares.
    """
    _check_moderator(moderator)
    if order not in ("linear", "quadratic"):
        raise ConfigError(f"interaction order must be 'linear' or 'quadratic', got {order!r}")
    if interacted is None:
        interacted = SIGNIFICANT_SIX
    elif interacted == "all":
        interacted = HETEROGENEITY_COLUMNS
    cols = _take(panel, interacted)
    mods = {e: moderator_values(panel, moderator, e, center) for e in ENDPOINTS}
    inter = {}
    for p in interacted:
        m = mods[endpoint_of(p)]
        inter[f"{p}_x_mod"] = cols[p] * m
        if order == "quadratic":
            inter[f"{p}_x_mod2"] = cols[p] * m**2
    cols.update(inter)
    for e in ENDPOINTS:
        cols[moderator_column(moderator, e)] = mods[e]
    if order == "quadratic":
        for e in ENDPOINTS:
            cols[moderator_column(moderator, e) + "_sq"] = mods[e] ** 2
    return _design(panel, cols)


def build_design(panel: PanelDataset, spec: ModelSpec) -> DesignMatrix:
    if spec.lag:
        panel = lag_regressors(panel, spec.lag)
    if spec.kind == "baseline":
        design = build_baseline(panel)
    elif spec.kind == "heterogeneity":
        design = build_heterogeneity(panel)
    else:
        design = build_interaction(panel, spec.moderator, spec.order, spec.interacted, spec.center)
    if spec.outcome != "ln_outflow":
        design = _design(panel, dict(zip(design.names, design.X.T)), spec.outcome)
    return design
