"""Interactive subgroup selection with a hard error budget.

A session wraps a dataset whose outcomes start masked.  The analyst shrinks
the candidate region by chiseling at fitted scores (revealing the rows that
fall out), spends test budget on the rows still masked, and stops at the
first rejection; the budget accounting makes the final claim about the
selected region hold at the configured level no matter how the shrinking
reacted to what was revealed.
"""

from .core import (ChiselSession, Constraint, Dataset, Interval, RegionTrace,
                   StepResult, analyst_view, chisel_step, load_dataset,
                   region_contains, reveal_random)
from .scorers import (ScorerSpec, StepFn, fit_on_session, fit_scorer,
                      fit_unimodal_1d, score, scorer_from_dict)
from .strategies import (PRESETS, Report, StrategyConfig, bonferroni_aggregate,
                         chisel_to_boundary, data_splitting, global_mean_test,
                         proportional_alpha_run, report_from_session,
                         run_preset, simultaneous_data_splitting)
from .testing import (AlphaLedger, BudgetError, ConstraintViolation,
                      EmptySupportError, ModeConfig, TestRecord,
                      binary_critical_value, binomial_cdf, default_alpha_min,
                      gaussian_critical_value, propose_alpha,
                      randomized_truncated_binomial_quantile, run_test,
                      truncated_normal_quantile, truncation_level)
from .transforms import (CausalRow, aipw_transform, apply_transform_config,
                         ipw_scores, ipw_transform, shift_by_cutoff)
from .simbench import (DgpSpec, ExperimentConfig, ExperimentResult,
                       MethodSpec, MetricsRow, Oracle, run_experiment,
                       sample_dgp, true_utility)
from .service import SessionStore, create_app

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # sessions and regions
    "ChiselSession", "Dataset", "load_dataset", "chisel_step", "reveal_random",
    "analyst_view", "RegionTrace", "Constraint", "Interval", "StepResult",
    "region_contains",
    # budget and tests
    "AlphaLedger", "ModeConfig", "TestRecord", "propose_alpha", "run_test",
    "binary_critical_value", "gaussian_critical_value", "binomial_cdf",
    "randomized_truncated_binomial_quantile", "truncated_normal_quantile",
    "truncation_level", "default_alpha_min",
    "BudgetError", "EmptySupportError", "ConstraintViolation",
    # scorers
    "ScorerSpec", "StepFn", "fit_scorer", "fit_on_session", "fit_unimodal_1d",
    "score", "scorer_from_dict",
    # outcome transforms
    "CausalRow", "ipw_scores", "ipw_transform", "aipw_transform",
    "shift_by_cutoff", "apply_transform_config",
    # strategies
    "StrategyConfig", "Report", "proportional_alpha_run", "chisel_to_boundary",
    "report_from_session", "data_splitting", "simultaneous_data_splitting",
    "global_mean_test", "bonferroni_aggregate", "run_preset", "PRESETS",
    # simulation bench
    "DgpSpec", "Oracle", "sample_dgp", "true_utility", "MethodSpec",
    "ExperimentConfig", "MetricsRow", "ExperimentResult", "run_experiment",
    # service
    "create_app", "SessionStore",
]
