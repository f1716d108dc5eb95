"""Report tables and their markdown / CSV / JSON renderings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .data import MODERATORS, POLICY_TYPE_LABELS
from .inference import coef_tests, stars

DISPLAY_DECIMALS = 4
FORMATS = ("md", "csv", "json")

_MODERATOR_LABELS = {
    "ln_income": "Ln (median income)",
    "ageing_rate": "Ageing rate",
    "racial_diversity": "Racial diversity",
    "educational_attainment": "Educational attainment rate",
}


def label(name: str) -> str:
    """Human-readable row label for a design column."""
    end_word = {"origin": "origin", "dest": "destination"}
    if name.startswith("year_"):
        return f"Year {name[5:]}"
    if name == "const":
        return "Intercept"
    for suffix, text in (("_x_mod2", " × moderator variable²"), ("_x_mod", " × moderator variable")):
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            head, _, end = base.rpartition("_")
            return f"{_policy_label(head)}{text} ({end_word[end]})"
    for m in MODERATORS:
        for end in ("origin", "dest"):
            col = f"{m}_{end}"
            if name == col:
                return f"{_MODERATOR_LABELS[m]} ({end_word[end]})"
            if name == col + "_sq":
                return f"{_MODERATOR_LABELS[m]}² ({end_word[end]})"
    head, _, end = name.rpartition("_")
    if end in end_word:
        try:
            return f"{_policy_label(head)} ({end_word[end]})"
        except KeyError:
            pass
    return name


def _policy_label(head: str) -> str:
    cat, ptype = head.split("_", 1)
    return f"{POLICY_TYPE_LABELS[ptype]} {cat.upper()}"


def fmt(value, decimals: int = DISPLAY_DECIMALS) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return f"{int(value):,}"
    value = float(value)
    if math.isnan(value):
        return "NA"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    out = f"{value:.{decimals}f}"
    return "0.0000" if out == "-0.0000" else out


def _clean(obj):
    """Make ``obj`` JSON-serializable with NaN/inf mapped to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class ReportTable:
    """Coefficient table: rows are regressors, footer carries tests and fit metrics."""

    title: str
    rows: list[dict]
    footer: list[tuple[str, object]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_fit(cls, title: str, fit, names: Sequence[str] | None = None, **kwargs) -> "ReportTable":
        names = list(fit.substantive if names is None else names)
        rows = []
        for c in coef_tests(fit):
            if c.name in names:
                rows.append({
                    "name": c.name, "label": label(c.name), "estimate": c.estimate, "se": c.se,
                    "t": c.t, "p_value": c.p_value, "stars": stars(c.p_value),
                    "lo90": c.ci90[0], "hi90": c.ci90[1], "lo95": c.ci95[0], "hi95": c.ci95[1],
                })
        return cls(title, rows, **kwargs)

    def to_markdown(self) -> str:
        lines = [f"## {self.title}", "", "| Variable | Estimate |", "|---|---|"]
        for r in self.rows:
            lines.append(f"| {r['label']} | {fmt(r['estimate'])}{r['stars']} ({fmt(r['se'])}) |")
        for key, value in self.footer:
            lines.append(f"| {key} | {fmt(value)} |")
        lines.append("")
        lines.append("Standard errors in parentheses. *P < 0.1, **P < 0.05, ***P < 0.01.")
        lines.extend(self.notes)
        return "\n".join(lines) + "\n"

    def to_frame(self) -> pd.DataFrame:
        cols = ["name", "label", "estimate", "se", "t", "p_value", "stars", "lo90", "hi90", "lo95", "hi95"]
        return pd.DataFrame(self.rows, columns=cols)

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")

    def to_dict(self) -> dict:
        return {"title": self.title, "rows": self.rows, "footer": dict(self.footer), "notes": self.notes}


def frame_csv(frame: pd.DataFrame, index: bool = False) -> str:
    return frame.to_csv(index=index, float_format="%.17g", lineterminator="\n")


def frame_markdown(frame: pd.DataFrame, title: str | None = None, index: bool = True) -> str:
    frame = frame.reset_index() if index else frame
    header = "| " + " | ".join(str(c) for c in frame.columns) + " |"
    lines = ([f"## {title}", ""] if title else []) + [header, "|" + "---|" * len(frame.columns)]
    for row in frame.itertuples(index=False):
        lines.append("| " + " | ".join(fmt(v) if isinstance(v, (float, int, np.number)) and not isinstance(v, bool) else ("" if v is None else str(v)) for v in row) + " |")
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_outputs(base: Path, formats: Iterable[str], md=None, csv=None, js=None) -> list[Path]:
    """Write ``base.md`` / ``base.csv`` / ``base.json`` for the requested formats."""
    written = []
    for f, payload in (("md", md), ("csv", csv), ("json", js)):
        if f in formats and payload is not None:
            path = base.with_suffix(f".{f}")
            write_text(path, payload)
            written.append(path)
    return written
