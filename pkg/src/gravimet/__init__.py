"""Gravity-type panel regressions of county-to-county migration on heat-policy counts."""

from .data import (
    CountyId,
    FlowRecord,
    ModeratorRecord,
    PanelDataset,
    PanelObservation,
    PolicyCounts,
    SampleFilter,
    assemble_panel,
    compute_racial_diversity,
    keyword_filter_adaptation,
    load_panel,
    summarize,
)
from .estimators import DesignMatrix, FitResult, fit_fixed_effects, fit_pooled_ols, fit_random_effects
from .inference import (
    coef_tests,
    cluster_robust_cov,
    f_test_fe_vs_pooled,
    fit_metrics,
    hausman_test,
    with_cluster_covariance,
    within_variation_report,
)
from .margins import MarginalEffectCurve, effect_curve, marginal_effect
from .specs import ModelSpec, build_baseline, build_design, build_heterogeneity, build_interaction
from .synth import DgpConfig, generate

__version__ = "0.1.0"
