from .analysis import StepAnalysis, analyze_trajectories
from .guide import (
    FIELDS_SPACE,
    BaselineMode,
    GuidedRunConfig,
    RunReport,
    SpaceMode,
    agent_policy,
    field_balanced,
    fixed_policy,
    guide_training,
    naive_distribution,
    run_baseline,
    running_standardized,
)
from .regmix import RegMixFit, fit_linear, fit_regmix_mixture, grid_argmax, maximize_on_simplex, regmix_fit, regmix_samples
from .report import read_report, write_report

__all__ = [
    "StepAnalysis", "analyze_trajectories", "FIELDS_SPACE", "BaselineMode", "GuidedRunConfig", "RunReport",
    "SpaceMode", "agent_policy", "field_balanced", "fixed_policy", "guide_training", "naive_distribution",
    "run_baseline", "running_standardized", "RegMixFit", "fit_linear", "fit_regmix_mixture", "grid_argmax",
    "maximize_on_simplex", "regmix_fit", "regmix_samples", "read_report", "write_report",
]
