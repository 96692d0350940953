"""Rolling-origin evaluation of point forecasts.

For a holdout of ``L`` epochs and horizon ``h`` the targets are the last L
epochs ``s = T-L+1..T``; the forecast for target s is made from a model
trained on ``y_1..y_{s-h}`` only.  Each fold is refitted from scratch.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import CountSeries, DomainError, PriorConfig
from .forecast import ForecastDistribution, predictive_pmf
from .gibbs import MODELS, SamplerConfig, fit

log = logging.getLogger(__name__)

MODEL_CODES = {"dp": 0, "inar1": 1}


def default_holdout(h: int) -> int:
    """Holdout length giving 42, 43 and 44 predictions for h = 1, 2, 3."""
    return 41 + h


@dataclass(frozen=True)
class EvalPlan:
    T: int
    holdout_len: int
    horizon: int

    def __post_init__(self):
        if self.holdout_len < 1:
            raise DomainError("holdout_len must be at least 1")
        if self.horizon < 1:
            raise DomainError("horizon must be at least 1")
        if self.T - self.holdout_len - self.horizon < 2:
            raise DomainError(
                f"infeasible plan: T - holdout_len - h = "
                f"{self.T - self.holdout_len - self.horizon} < 2")

    @property
    def holdout_start(self) -> int:
        return self.T - self.holdout_len + 1

    @property
    def targets(self) -> List[int]:
        return list(range(self.holdout_start, self.T + 1))

    def train_end(self, target: int) -> int:
        return target - self.horizon

    def folds(self) -> List[Tuple[int, int]]:
        """``(target, train_end)`` pairs with 1-based epochs."""
        return [(s, self.train_end(s)) for s in self.targets]


def make_plan(T: int, holdout_len: int, h: int) -> EvalPlan:
    return EvalPlan(T, holdout_len, h)


@dataclass(frozen=True)
class FoldRecord:
    target: int
    truth: int
    forecast: int

    @property
    def deviation(self) -> int:
        return abs(self.forecast - self.truth)


@dataclass(frozen=True)
class EvalReport:
    model: str
    plan: EvalPlan
    records: Tuple[FoldRecord, ...]
    series_id: str = ""
    mad: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise DomainError("an evaluation report needs at least one record")
        object.__setattr__(self, "mad",
                           float(np.mean([r.deviation for r in self.records])))


def fold_seed(master_seed: int, target: int, model: str) -> np.random.SeedSequence:
    """Independent seed stream for one (target, model) fold."""
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=(int(target), MODEL_CODES.get(model, 99)))


Forecaster = Callable[[CountSeries, int, np.random.SeedSequence], Union[ForecastDistribution, int]]


def model_forecaster(model: str, priors: PriorConfig, config: SamplerConfig,
                     tau_mode: str = "per-draw") -> Forecaster:
    if model not in MODELS:
        raise DomainError(f"unknown model {model!r}")
    return _ModelForecaster(model, priors, config, tau_mode)


@dataclass(frozen=True)
class _ModelForecaster:
    # a picklable callable so folds can run in worker processes
    model: str
    priors: PriorConfig
    config: SamplerConfig
    tau_mode: str = "per-draw"

    def __call__(self, train: CountSeries, h: int, seed: np.random.SeedSequence):
        fit_seed, forecast_seed = seed.spawn(2)
        cfg = SamplerConfig(self.config.n_iterations, self.config.burn_in,
                            self.config.thinning,
                            seed=int(fit_seed.generate_state(1)[0]),
                            fixed_tau=self.config.fixed_tau)
        draws = fit(train, self.priors, cfg, self.model)
        return predictive_pmf(draws, train, h, self.priors,
                              np.random.default_rng(forecast_seed), self.tau_mode)


def _run_fold(args):
    forecaster, train, h, seed, target, truth = args
    result = forecaster(train, h, seed)
    point = result.point_forecast if isinstance(result, ForecastDistribution) else int(result)
    return FoldRecord(target, truth, int(point))


def evaluate(series: CountSeries, plan: EvalPlan, model: Union[str, Forecaster],
             priors: Optional[PriorConfig] = None,
             config: SamplerConfig = SamplerConfig(), master_seed: Optional[int] = None,
             series_id: str = "", n_jobs: int = 1, label: Optional[str] = None,
             tau_mode: str = "per-draw") -> EvalReport:
    """Score a model's generalized-median forecasts over the plan's holdout.

    ``model`` is ``"dp"``, ``"inar1"`` or any callable
    ``(train_series, h, seed_sequence) -> ForecastDistribution | int``.
    """
    if plan.T != series.T:
        raise DomainError(f"plan is for T={plan.T}, series has T={series.T}")
    if isinstance(model, str):
        if priors is None:
            raise DomainError("priors are required to fit a model")
        forecaster = model_forecaster(model, priors, config, tau_mode)
        label = label or model
    else:
        forecaster = model
        label = label or getattr(model, "__name__", "custom")
    master_seed = config.seed if master_seed is None else master_seed
    y = series.counts
    jobs = [(forecaster, series.head(end), plan.horizon, fold_seed(master_seed, s, label),
             s, int(y[s - 1])) for s, end in plan.folds()]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_fold, jobs))
    else:
        records = [_run_fold(job) for job in jobs]
    report = EvalReport(label, plan, tuple(records), series_id)
    log.info("%s %s h=%d MAD=%.4f", series_id, label, plan.horizon, report.mad)
    return report


def fit_baseline_inar1(series: CountSeries, priors: PriorConfig,
                       config: SamplerConfig = SamplerConfig()):
    """Posterior draws of the homogeneous INAR(1) model."""
    return fit(series, priors, config, "inar1")


@dataclass(frozen=True)
class Comparison:
    series_id: str
    mad_first: float
    mad_second: float
    first: str
    second: str

    @property
    def winner(self) -> str:
        if self.mad_first < self.mad_second:
            return self.first
        if self.mad_second < self.mad_first:
            return self.second
        return "tie"


def compare(first: EvalReport, second: EvalReport) -> Comparison:
    if first.plan != second.plan:
        raise DomainError("reports were produced under different plans")
    if first.series_id != second.series_id:
        raise DomainError("reports refer to different series")
    return Comparison(first.series_id, first.mad, second.mad, first.model, second.model)


def compare_batch(pairs: Sequence[Tuple[EvalReport, EvalReport]]):
    """Per-series comparisons and the fraction of series the first model wins.

    Ties count as neither a win nor a loss.
    """
    rows = [compare(a, b) for a, b in pairs]
    if not rows:
        raise DomainError("nothing to compare")
    wins = sum(r.winner == r.first for r in rows)
    return rows, wins / len(rows)
