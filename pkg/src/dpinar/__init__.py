"""Dirichlet-process INAR(1) models for forecasting count time series."""

__version__ = "0.1.0"

from .core import (ClusterView, CountSeries, DomainError, GibbsState, PriorConfig,
                   augmented_log_density, joint_log_likelihood, simulate,
                   transition_log_pmf)
from .elicitation import (ConvergenceError, ElicitationTargets, elicit_base_measure,
                          elicit_priors, elicit_tau_prior, log_stirling_table,
                          marginal_cluster_pmf)
from .evaluation import (EvalPlan, EvalReport, compare, compare_batch, evaluate,
                         fit_baseline_inar1, make_plan)
from .forecast import (ForecastDistribution, RateExtension, extend_rates,
                       generalized_median, hstep_transition_pmf, predictive_pmf)
from .gibbs import PosteriorDraws, SamplerConfig, fit, run_inar1_sampler, run_sampler

__all__ = [
    "ClusterView", "ConvergenceError", "CountSeries", "DomainError", "ElicitationTargets",
    "EvalPlan", "EvalReport", "ForecastDistribution", "GibbsState", "PosteriorDraws",
    "PriorConfig", "RateExtension", "SamplerConfig", "augmented_log_density", "compare",
    "compare_batch", "elicit_base_measure", "elicit_priors", "elicit_tau_prior",
    "evaluate", "extend_rates", "fit", "fit_baseline_inar1", "generalized_median",
    "hstep_transition_pmf", "joint_log_likelihood", "log_stirling_table", "make_plan",
    "marginal_cluster_pmf", "predictive_pmf", "run_inar1_sampler", "run_sampler",
    "simulate", "transition_log_pmf",
]
