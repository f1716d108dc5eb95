"""
Command-line entry point and run configuration.

    gravimet synth|describe|fit|robustness|margins --config run.toml
             [--out DIR] [--format md|csv|json] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import descriptives, inference, margins, transforms
from .data import CATEGORIES, POLICY_TYPES, PanelDataset, load_panel, moderator_column, summarize
from .estimators import fit_fixed_effects, fit_pooled_ols, fit_random_effects
from .exceptions import ConfigError, DataError, EstimationError, GravimetError
from .report import FORMATS, ReportTable, dumps, frame_csv, frame_markdown, write_outputs, write_text
from .specs import BASELINE_COLUMNS, SIGNIFICANT_SIX, ModelSpec, build_design, endpoint_of
from .synth import DgpConfig, generate

log = logging.getLogger("gravimet")

COMMANDS = ("synth", "describe", "fit", "robustness", "margins")


@dataclass(frozen=True)
class RobustnessConfig:
    winsorize_pct: float = 0.01
    trim_pct: float = 0.05
    subsample_fraction: float = 0.8
    subsample_seed: int = 20240601
    exclude_years: tuple[int, ...] = (2020,)
    lag_k: tuple[int, ...] = (1, 2)
    column: str = "outflow_rate"

    def __post_init__(self):
        object.__setattr__(self, "exclude_years", tuple(int(y) for y in self.exclude_years))
        lags = (self.lag_k,) if isinstance(self.lag_k, int) else self.lag_k
        object.__setattr__(self, "lag_k", tuple(int(k) for k in lags))


@dataclass(frozen=True)
class MarginsRequest:
    moderators: tuple[str, ...]
    policies: tuple[str, ...] = SIGNIFICANT_SIX
    order: str = "quadratic"
    points: int = margins.DEFAULT_POINTS
    grid: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "moderators", tuple(self.moderators))
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.order not in ("linear", "quadratic"):
            raise ConfigError(f"margins order must be linear or quadratic, got {self.order!r}")


@dataclass(frozen=True)
class RunConfig:
    models: tuple[ModelSpec, ...]
    data: dict | None = None
    synth: DgpConfig | None = None
    robustness: RobustnessConfig = RobustnessConfig()
    margins: tuple[MarginsRequest, ...] = ()
    out: Path = Path("gravimet-out")
    formats: tuple[str, ...] = FORMATS

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "synth": self.synth.to_dict() if self.synth else None,
            "models": [m.to_dict() for m in self.models],
            "robustness": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.robustness.__dict__.items()},
            "margins": [{k: (list(v) if isinstance(v, tuple) else v) for k, v in m.__dict__.items()} for m in self.margins],
            "output": {"dir": str(self.out), "formats": list(self.formats)},
        }


def _section(doc: dict, key: str, cls):
    raw = doc.get(key)
    if raw is None:
        return None
    extra = set(raw) - set(cls.__dataclass_fields__)
    if extra:
        raise ConfigError(f"[{key}] has unknown fields {sorted(extra)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"[{key}]: {exc}") from None


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    known = {"data", "synth", "models", "robustness", "margins", "output"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config sections {sorted(extra)}")
    models = tuple(ModelSpec.from_dict(m) for m in doc.get("models", []))
    if not models:
        models = (ModelSpec(),)
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError(f"model names must be unique: {names}")
    data = doc.get("data")
    if data is not None:
        missing = {"flows", "policies"} - set(data)
        if missing:
            raise ConfigError(f"[data] needs {sorted(missing)}")
        data = {k: str((base_dir / v).resolve()) if k in ("flows", "policies", "moderators") else v for k, v in data.items()}
    synth = DgpConfig.from_dict(doc["synth"]) if "synth" in doc else None
    if data is None and synth is None:
        raise ConfigError("config needs a [data] or a [synth] section")
    rob = _section(doc, "robustness", RobustnessConfig) or RobustnessConfig()
    reqs = []
    for m in doc.get("margins", []):
        extra = set(m) - set(MarginsRequest.__dataclass_fields__)
        if extra:
            raise ConfigError(f"[[margins]] has unknown fields {sorted(extra)}")
        reqs.append(MarginsRequest(**m))
    output = doc.get("output", {})
    formats = tuple(output.get("formats", FORMATS))
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    out = Path(output.get("dir", "gravimet-out"))
    if not out.is_absolute():
        out = base_dir / out
    return RunConfig(models, data, synth, rob, tuple(reqs), out, formats)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, path.parent)


def load_run_panel(config: RunConfig) -> PanelDataset:
    if config.data is not None:
        for key in ("flows", "policies", "moderators"):
            if key in config.data and not Path(config.data[key]).exists():
                raise DataError(f"{key} file not found: {config.data[key]}")
        return load_panel(config.data["flows"], config.data["policies"], config.data.get("moderators"))
    return generate(config.synth).panel


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRAVIMET_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    workers = min(_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


@dataclass
class SpecOutcome:
    spec: ModelSpec
    main: object = None
    fe: object = None
    pooled: object = None
    re: object = None
    f_test: object = None
    hausman: object = None
    metrics: object = None
    error: str | None = None
    error_type: type | None = None


def estimate_spec(panel: PanelDataset, spec: ModelSpec, with_tests: bool = True) -> SpecOutcome:
    """Fit FE, pooled and RE versions of one spec and run the specification tests.

    Coefficient inference is clustered by pair (CR1); the Hausman contrast
    uses the classical covariances, under which V_FE - V_RE is PSD in
    expectation.
    """
    out = SpecOutcome(spec)
    design = build_design(panel, spec)
    fe_raw = fit_fixed_effects(design)
    out.fe = inference.with_cluster_covariance(fe_raw)
    if with_tests or spec.effects != "fixed":
        pooled = fit_pooled_ols(design, year_effects=True)
        re_raw = fit_random_effects(design)
        out.pooled = inference.with_cluster_covariance(pooled)
        out.re = inference.with_cluster_covariance(re_raw)
        out.f_test = inference.f_test_fe_vs_pooled(fe_raw, pooled)
        out.hausman = inference.hausman_test(fe_raw, re_raw)
    out.main = {"fixed": out.fe, "random": out.re, "pooled": out.pooled}[spec.effects]
    out.metrics = inference.fit_metrics(out.main)
    return out


def _safe_estimate(panel, spec, with_tests=True) -> SpecOutcome:
    try:
        return estimate_spec(panel, spec, with_tests)
    except GravimetError as exc:
        return SpecOutcome(spec, error=str(exc), error_type=type(exc))


def _fit_table(o: SpecOutcome) -> ReportTable:
    fe_label = {"fixed": "pair and year fixed effects", "random": "random effects", "pooled": "pooled OLS"}
    footer = []
    if o.f_test is not None:
        footer += [("F-test statistic", o.f_test.statistic), ("F-test p-value", o.f_test.p_value)]
    if o.hausman is not None:
        footer += [("Hausman test statistic", o.hausman.statistic), ("Hausman test p-value", o.hausman.p_value)]
    m = o.metrics
    footer += [("Observations", o.main.n), ("Adjusted R²", m.adj_r2), ("RMSE", m.rmse), ("AIC", m.aic), ("BIC", m.bic)]
    notes = [f"Outcome: {o.spec.outcome}; {fe_label[o.spec.effects]}; cluster-robust (CR1) standard errors by pair.",
             f"Fit metrics: {m.convention}."]
    if o.hausman is not None and o.hausman.flags:
        notes.append(f"Hausman flags: {', '.join(o.hausman.flags)}.")
    return ReportTable.from_fit(f"Model {o.spec.name}", o.main, footer=footer, notes=notes)


def _fit_json(o: SpecOutcome, table: ReportTable) -> dict:
    return {
        "spec": o.spec.to_dict(),
        "table": table.to_dict(),
        "fits": {k: getattr(o, k).to_dict() for k in ("fe", "pooled", "re") if getattr(o, k) is not None},
        "f_test": o.f_test.to_dict() if o.f_test else None,
        "hausman": o.hausman.to_dict() if o.hausman else None,
        "metrics": {k: v for k, v in o.metrics.__dict__.items()},
    }


def cmd_fit(config: RunConfig, panel: PanelDataset | None = None) -> dict:
    panel = load_run_panel(config) if panel is None else panel
    outdir = config.out / "fit"
    outcomes = _pmap(lambda s: _safe_estimate(panel, s), config.models)
    errors = []
    for o in outcomes:
        base = outdir / o.spec.name
        if o.error:
            log.error("model %s failed: %s", o.spec.name, o.error)
            errors.append(o)
            write_outputs(base, config.formats, md=f"## Model {o.spec.name}\n\nestimation failed: {o.error}\n",
                          js=dumps({"spec": o.spec.to_dict(), "error": o.error}))
            continue
        table = _fit_table(o)
        write_outputs(base, config.formats, md=table.to_markdown(), csv=table.to_csv(), js=dumps(_fit_json(o, table)))
    return {"outcomes": outcomes, "errors": errors}


# ---------------------------------------------------------------------------
# robustness
# ---------------------------------------------------------------------------


def robustness_variants(config: RunConfig) -> list[tuple[str, str, object, int]]:
    """(name, effects, panel transform, lag) for the eight-row battery."""
    rc = config.robustness
    col = rc.column
    variants = [
        ("main", "fixed", None, 0),
        ("random_effects", "random", None, 0),
        (f"winsorize_{rc.winsorize_pct:g}", "fixed", lambda p: transforms.winsorize(p, col, rc.winsorize_pct), 0),
        (f"trim_{rc.trim_pct:g}", "fixed", lambda p: transforms.trim(p, col, rc.trim_pct), 0),
        (f"subsample_{rc.subsample_fraction:g}", "fixed",
         lambda p: transforms.subsample(p, rc.subsample_fraction, rc.subsample_seed), 0),
        ("exclude_" + "_".join(str(y) for y in rc.exclude_years), "fixed",
         lambda p: transforms.exclude_year(p, rc.exclude_years), 0),
    ]
    variants += [(f"lag_{k}", "fixed", None, k) for k in rc.lag_k]
    return variants


def _baseline_spec(config: RunConfig) -> ModelSpec:
    for m in config.models:
        if m.kind == "baseline" and m.lag == 0:
            return replace(m, effects="fixed")
    raise ConfigError("robustness needs a baseline model (kind = 'baseline', lag = 0)")


def cmd_robustness(config: RunConfig, panel: PanelDataset | None = None) -> dict:
    panel = load_run_panel(config) if panel is None else panel
    base = _baseline_spec(config)
    variants = robustness_variants(config)

    def run(variant):
        name, effects, transform, lag = variant
        try:
            sample = transform(panel) if transform else panel
            spec = replace(base, name=name, effects=effects, lag=lag)
            return name, estimate_spec(sample, spec), None
        except GravimetError as exc:
            return name, None, str(exc)

    results = _pmap(run, variants)
    rows, summary = [], []
    for name, o, err in results:
        if err:
            log.error("robustness variant %s failed: %s", name, err)
            for reg in base_regressors(base):
                rows.append({"variant": name, "regressor": reg, "error": err})
            summary.append({"variant": name, "error": err})
            continue
        for c in inference.coef_tests(o.main):
            if c.name in o.main.substantive:
                rows.append({
                    "variant": name, "regressor": c.name, "estimate": c.estimate, "se": c.se,
                    "lo90": c.ci90[0], "hi90": c.ci90[1], "lo95": c.ci95[0], "hi95": c.ci95[1],
                    "p_value": c.p_value, "stars": inference.stars(c.p_value), "n": o.main.n, "error": "",
                })
        summary.append({
            "variant": name, "estimator": o.main.estimator, "n": o.main.n,
            "f_statistic": o.f_test.statistic, "f_p_value": o.f_test.p_value,
            "hausman_statistic": o.hausman.statistic, "hausman_p_value": o.hausman.p_value,
            "adj_r2": o.metrics.adj_r2, "rmse": o.metrics.rmse, "aic": o.metrics.aic, "bic": o.metrics.bic,
            "error": "",
        })
    long = pd.DataFrame(rows, columns=["variant", "regressor", "estimate", "se", "lo90", "hi90", "lo95", "hi95",
                                       "p_value", "stars", "n", "error"])
    summ = pd.DataFrame(summary, columns=["variant", "estimator", "n", "f_statistic", "f_p_value",
                                          "hausman_statistic", "hausman_p_value", "adj_r2", "rmse", "aic", "bic",
                                          "error"])
    outdir = config.out / "robustness"
    write_outputs(outdir / "robustness", config.formats,
                  md=frame_markdown(long.set_index(["variant", "regressor"]), "Robustness battery")
                  + "\n" + frame_markdown(summ.set_index("variant"), "Variant summary"),
                  csv=frame_csv(long),
                  js=dumps({"rows": long.to_dict(orient="records"), "summary": summ.to_dict(orient="records")}))
    if "csv" in config.formats:
        write_text(outdir / "robustness_summary.csv", frame_csv(summ))
    return {"table": long, "summary": summ}


def base_regressors(spec: ModelSpec) -> Sequence[str]:
    return BASELINE_COLUMNS if spec.kind == "baseline" else ()


# ---------------------------------------------------------------------------
# margins
# ---------------------------------------------------------------------------


def cmd_margins(config: RunConfig, panel: PanelDataset | None = None) -> dict:
    panel = load_run_panel(config) if panel is None else panel
    if not config.margins:
        raise ConfigError("no [[margins]] requests in the config")
    outdir = config.out / "margins"
    curves, summary, errors = [], [], []
    jobs = [(req, mod) for req in config.margins for mod in req.moderators]

    def run(job):
        req, mod = job
        spec = ModelSpec(name=f"interaction_{mod}_{req.order}", kind="interaction", moderator=mod,
                         order=req.order, interacted=tuple(req.policies))
        try:
            o = estimate_spec(panel, spec, with_tests=False)
        except GravimetError as exc:
            return req, mod, None, str(exc)
        return req, mod, o, None

    for req, mod, o, err in _pmap(run, jobs):
        if err:
            errors.append({"moderator": mod, "error": err})
            continue
        for policy in req.policies:
            values = panel.column(moderator_column(mod, endpoint_of(policy)))
            grid = (req.grid[0], req.grid[1], req.points) if req.grid else None
            curve = margins.effect_curve(o.fe, policy, mod, grid=grid, values=values, points=req.points, order=req.order)
            path = outdir / f"{mod}__{policy}.csv"
            write_text(path, frame_csv(curve.to_frame()))
            curves.append(curve)
            summary.append({
                "moderator": mod, "policy": policy, "order": curve.order, "shape": curve.shape,
                "vertex": curve.vertex, "sign_changes": list(curve.sign_changes),
                "coefficients": list(curve.coefficients), "dof": curve.dof, "file": path.name,
            })
    write_text(outdir / "summary.json", dumps({"curves": summary, "errors": errors}))
    if errors:
        raise EstimationError("; ".join(f"{e['moderator']}: {e['error']}" for e in errors))
    return {"curves": curves, "summary": summary}


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------


def cmd_describe(config: RunConfig, panel: PanelDataset | None = None) -> dict:
    panel = load_run_panel(config) if panel is None else panel
    summary = summarize(panel)
    summary["constant"] = summary["sd"].fillna(0.0) == 0.0

    corr_rows = []
    y = panel.column("outflow_rate")
    for end in ("origin", "dest"):
        for col in [f"{c}_total_{end}" for c in CATEGORIES]:
            try:
                rep = descriptives.correlation_report(panel.column(col), y, col, "outflow_rate")
                corr_rows.append({**rep.as_row(), "error": ""})
            except GravimetError as exc:
                corr_rows.append({"x": col, "y": "outflow_rate", "error": str(exc)})
    corr = pd.DataFrame(corr_rows, columns=["x", "y", "n", "pearson_r", "pearson_p", "spearman_rho", "spearman_p",
                                            "ols_slope", "ols_intercept", "ols_p", "error"])

    ttest_rows = []
    for c in CATEGORIES:
        for t in ("total",) + POLICY_TYPES:
            a, b = f"{c}_{t}_dest", f"{c}_{t}_origin"
            try:
                res = descriptives.paired_t_test(panel.column(a), panel.column(b))
                diff = float(np.mean(panel.column(a) - panel.column(b)))
                ttest_rows.append({"variable": f"{c}_{t}", "mean_difference_dest_minus_origin": diff,
                                   "t": res.statistic, "dof": res.dof, "p_value": res.p_value, "error": ""})
            except GravimetError as exc:
                ttest_rows.append({"variable": f"{c}_{t}", "error": str(exc)})
    ttests = pd.DataFrame(ttest_rows, columns=["variable", "mean_difference_dest_minus_origin", "t", "dof",
                                               "p_value", "error"])

    wv = inference.within_variation_report(panel, list(BASELINE_COLUMNS))

    outdir = config.out / "describe"
    md = (frame_markdown(summary, "Summary statistics")
          + "\n" + frame_markdown(corr, "Correlations with outflow rate", index=False)
          + "\n" + frame_markdown(ttests, "Paired t-tests, destination vs origin", index=False)
          + "\n" + frame_markdown(wv.table, "Within-pair variation")
          + f"\nShare of pairs with two or more years: {wv.share_multi_year:.4f}\n")
    if "md" in config.formats:
        write_text(outdir / "describe.md", md)
    if "csv" in config.formats:
        write_text(outdir / "summary.csv", frame_csv(summary, index=True))
        write_text(outdir / "correlations.csv", frame_csv(corr))
        write_text(outdir / "paired_ttests.csv", frame_csv(ttests))
        write_text(outdir / "within_variation.csv", frame_csv(wv.table, index=True))
    if "json" in config.formats:
        write_text(outdir / "describe.json", dumps({
            "summary": summary.reset_index().to_dict(orient="records"),
            "correlations": corr.to_dict(orient="records"),
            "paired_ttests": ttests.to_dict(orient="records"),
            "within_variation": wv.table.reset_index().to_dict(orient="records"),
            "share_pairs_multi_year": wv.share_multi_year,
            "provenance": panel.provenance_dict(),
        }))
    return {"summary": summary, "correlations": corr, "paired_ttests": ttests, "within_variation": wv}


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(config: RunConfig) -> dict:
    if config.synth is None:
        raise ConfigError("synth command needs a [synth] section")
    result = generate(config.synth)
    outdir = config.out / "synth"
    result.write(outdir)
    result.panel.save(outdir / "panel.csv")
    return {"result": result}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def apply_overrides(config: RunConfig, out=None, fmt=None, seed=None) -> RunConfig:
    if out is not None:
        config = replace(config, out=Path(out))
    if fmt is not None:
        config = replace(config, formats=(fmt,))
    if seed is not None:
        if config.synth is not None:
            config = replace(config, synth=replace(config.synth, seed=seed))
        config = replace(config, robustness=replace(config.robustness, subsample_seed=seed))
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravimet", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", help="output directory (overrides [output].dir)")
    parser.add_argument("--format", choices=FORMATS, help="emit only this format")
    parser.add_argument("--seed", type=int, help="seed for synthesis and subsampling")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        config = apply_overrides(load_config(args.config), args.out, args.format, args.seed)
        config.out.mkdir(parents=True, exist_ok=True)
        write_text(config.out / "config.effective.json", dumps(config.to_dict()))
        if args.command == "synth":
            cmd_synth(config)
            return 0
        panel = load_run_panel(config)
        if args.command == "fit":
            res = cmd_fit(config, panel)
            if res["errors"]:
                first = res["errors"][0]
                print(f"gravimet: model {first.spec.name} failed: {first.error}", file=sys.stderr)
                return first.error_type.exit_code if first.error_type else EstimationError.exit_code
        elif args.command == "robustness":
            cmd_robustness(config, panel)
        elif args.command == "margins":
            cmd_margins(config, panel)
        elif args.command == "describe":
            cmd_describe(config, panel)
    except GravimetError as exc:
        print(f"gravimet: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
