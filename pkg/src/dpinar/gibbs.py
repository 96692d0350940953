"""Gibbs sampler for the DP-INAR(1) model.

One sweep visits, for each epoch in turn, the maturation m_t and then the
rate lambda_t (Polya urn full conditional), then alpha, then the pair
(u, tau) by West's auxiliary-variable scheme, and finally redraws every
cluster's shared rate.  The random measure itself is integrated out.

The single-update functions (``update_lambda`` and friends) apply one
transition to a :class:`~dpinar.core.GibbsState` and exist for testing and
experimentation; :func:`run_sampler` runs the same compiled updates in a
tight loop.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .core import CountSeries, DomainError, GibbsState, PriorConfig

MODELS = ("dp", "inar1")


@dataclass(frozen=True)
class SamplerConfig:
    n_iterations: int = 12000
    burn_in: int = 2000
    thinning: int = 2
    seed: int = 0
    initial_state: Optional[GibbsState] = None
    fixed_tau: Optional[float] = None
    check_invariants: bool = False

    def __post_init__(self):
        if self.n_iterations < 1:
            raise DomainError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise DomainError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thinning < 1:
            raise DomainError("thinning must be positive")
        if self.fixed_tau is not None and not self.fixed_tau > 0:
            raise DomainError("fixed_tau must be positive")
        if self.n_draws < 1:
            raise DomainError("(n_iterations - burn_in) // thinning must be at least 1")

    @property
    def n_draws(self) -> int:
        # every thinning-th sweep after burn-in is kept
        return (self.n_iterations - self.burn_in) // self.thinning


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained sampler output, one row per draw.

    For the homogeneous baseline (``model == "inar1"``) the single rate is
    replicated across columns of ``lambdas`` and ``tau``/``u`` are NaN.
    Draws read back from a file carry no maturations; those are filled with -1.
    """

    alpha: np.ndarray
    tau: np.ndarray
    lambdas: np.ndarray
    maturations: Optional[np.ndarray]
    cluster_counts: np.ndarray
    iterations: np.ndarray
    u: np.ndarray = field(default=None)
    model: str = "dp"

    def __post_init__(self):
        n = self.alpha.shape[0]
        if self.u is None:
            object.__setattr__(self, "u", np.full(n, np.nan))
        if self.maturations is None:
            object.__setattr__(self, "maturations",
                               np.full(self.lambdas.shape, -1, dtype=np.int64))
        for name in ("alpha", "tau", "lambdas", "maturations", "cluster_counts",
                     "iterations", "u"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise DomainError(f"{name} has {arr.shape[0]} rows, expected {n}")
            arr.setflags(write=False)
        if self.model not in MODELS:
            raise DomainError(f"unknown model label {self.model!r}")

    def __len__(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def N(self) -> int:
        return len(self)

    @property
    def has_maturations(self) -> bool:
        return bool(self.maturations.size == 0 or self.maturations.min() >= 0)

    def state(self, n: int) -> GibbsState:
        if not self.has_maturations:
            raise DomainError("these draws were stored without maturations")
        return GibbsState(self.alpha[n], self.lambdas[n], self.maturations[n],
                          self.tau[n], self.u[n])

    def __iter__(self) -> Iterator[GibbsState]:
        for n in range(len(self)):
            yield self.state(n)

    def k_histogram(self) -> dict:
        values, counts = np.unique(self.cluster_counts, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def k_mode(self) -> int:
        values, counts = np.unique(self.cluster_counts, return_counts=True)
        return int(values[np.argmax(counts)])


# ---------------------------------------------------------------------------
# state <-> kernel arrays
# ---------------------------------------------------------------------------

class _ChainArrays:
    """Slot-labelled cluster representation of a GibbsState."""

    def __init__(self, state: GibbsState):
        n = state.lambdas.size
        view = state.clusters()
        k = view.k
        self.z = view.assignment.astype(np.int64)
        self.phi = np.zeros(n)
        self.phi[:k] = view.unique_rates
        self.nj = np.zeros(n, dtype=np.int64)
        self.nj[:k] = view.occupancy
        self.active = np.zeros(n, dtype=np.int64)
        self.active[:k] = np.arange(k)
        self.pos = np.zeros(n, dtype=np.int64)
        self.pos[:k] = np.arange(k)
        self.k = k

    def lambdas(self) -> np.ndarray:
        return self.phi[self.z].copy()


def initial_state(series: CountSeries, priors: PriorConfig,
                  fixed_tau: Optional[float] = None) -> GibbsState:
    """Feasible default starting point."""
    y = series.counts
    m = np.minimum(y[:-1], y[1:]) // 2
    lam = np.maximum(y[1:] - m, 0.5).astype(float)
    tau = fixed_tau if fixed_tau is not None else priors.a_tau / priors.b_tau
    return GibbsState(0.5, lam, m, tau, 0.5)


def _epoch_index(t: int, series: CountSeries) -> int:
    if not 2 <= t <= series.T:
        raise DomainError(f"epoch t must lie in 2..{series.T}, got {t}")
    return t - 2


# ---------------------------------------------------------------------------
# full-conditional laws (normalized, for inspection and testing)
# ---------------------------------------------------------------------------

def _normalize_log(logw):
    w = np.exp(logw - np.max(logw))
    return w / w.sum()


def lambda_conditional(t: int, state: GibbsState, series: CountSeries,
                       priors: PriorConfig):
    """Mixture weights of the urn full conditional of lambda_t.

    Returns
    -------
    fresh_weight : float
        Probability of a fresh draw from
        ``Gamma(y_t - m_t + a_g0, b_g0 + 1)``.
    atoms : ndarray
        The other epochs' rates (one entry per epoch ``r != t``).
    atom_weights : ndarray
        Probability of copying each entry of ``atoms``.
    """
    i = _epoch_index(t, series)
    c = int(series.counts[i + 1] - state.maturations[i])
    atoms = np.delete(state.lambdas, i)
    out = np.empty(atoms.size + 1)
    K.lambda_log_weights(c, np.log(state.tau), K.fresh_log_weight(c, priors.a_g0, priors.b_g0),
                         atoms, np.ones(atoms.size, dtype=np.int64), atoms.size, out)
    w = _normalize_log(out)
    return float(w[0]), atoms, w[1:]


def maturation_conditional(t: int, state: GibbsState, series: CountSeries) -> np.ndarray:
    """Probabilities of m_t = 0..min(y_{t-1}, y_t) given everything else."""
    i = _epoch_index(t, series)
    y_prev, y_cur = int(series.counts[i]), int(series.counts[i + 1])
    upper = min(y_prev, y_cur)
    alpha = state.alpha
    if upper == 0 or alpha == 0.0:
        p = np.zeros(upper + 1)
        p[0] = 1.0
        return p
    if alpha == 1.0:
        p = np.zeros(upper + 1)
        p[-1] = 1.0
        return p
    out = np.empty(upper + 1)
    K.maturation_log_weights(y_prev, y_cur, alpha, state.lambdas[i],
                             K.log_factorials(max(y_prev, y_cur)), out)
    return _normalize_log(out)


def alpha_conditional(state: GibbsState, series: CountSeries, priors: PriorConfig):
    """Parameters of the Beta full conditional of alpha."""
    y = series.counts
    m = state.maturations
    return (priors.a_alpha + float(m.sum()),
            priors.b_alpha + float(np.sum(y[:-1] - m)))


def tau_conditional(k: int, T: int, u: float, priors: PriorConfig):
    """The two-component Gamma mixture for tau given (k, u).

    Returns ``(weights, shapes, rate)``: component weights summing to one,
    their shapes, and the common rate ``b_tau - log u``.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    if not 0.0 < u < 1.0:
        raise DomainError("u must lie in (0, 1)")
    out = np.empty(2)
    rate = K.tau_mixture_log_weights(k, T - 1, u, priors.a_tau, priors.b_tau, out)
    shapes = np.array([priors.a_tau + k, priors.a_tau + k - 1.0])
    if shapes[1] <= 0:
        warnings.warn(f"tau mixture: second component shape {shapes[1]} <= 0, "
                      "using the first component only", RuntimeWarning)
    return _normalize_log(out), shapes, float(rate)


def cluster_posterior(state: GibbsState, series: CountSeries, priors: PriorConfig):
    """Gamma (shape, rate) of each cluster's shared rate, ordered as ``state.clusters()``."""
    view = state.clusters()
    innov = series.counts[1:] - state.maturations
    sums = np.bincount(view.assignment, weights=innov, minlength=view.k)
    return priors.a_g0 + sums, priors.b_g0 + view.occupancy.astype(float)


# ---------------------------------------------------------------------------
# single updates
# ---------------------------------------------------------------------------

def update_lambda(t: int, state: GibbsState, series: CountSeries,
                  priors: PriorConfig, rng: np.random.Generator) -> GibbsState:
    i = _epoch_index(t, series)
    arr = _ChainArrays(state)
    n = state.lambdas.size
    c = int(series.counts[i + 1] - state.maturations[i])
    arr.k = K.draw_lambda(i, c, state.tau, arr.z, arr.phi, arr.nj, arr.active, arr.pos,
                          arr.k, priors.a_g0, priors.b_g0,
                          K.fresh_log_weight(c, priors.a_g0, priors.b_g0), np.empty(n + 1),
                          np.empty(n), np.empty(n, dtype=np.int64), rng)
    new = state.copy()
    new.lambdas = arr.lambdas()
    return new


def update_alpha(state: GibbsState, series: CountSeries, priors: PriorConfig,
                 rng: np.random.Generator) -> GibbsState:
    new = state.copy()
    new.alpha = K.draw_alpha(series.counts, state.maturations,
                             priors.a_alpha, priors.b_alpha, rng)
    return new


def update_maturation(t: int, state: GibbsState, series: CountSeries,
                      rng: np.random.Generator) -> GibbsState:
    i = _epoch_index(t, series)
    y = series.counts
    top = int(y.max())
    new = state.copy()
    new.maturations[i] = K.draw_maturation(int(y[i]), int(y[i + 1]), state.alpha,
                                           state.lambdas[i], K.log_factorials(top),
                                           np.empty(top + 1), rng)
    return new


def update_tau(state: GibbsState, k: int, T: int, priors: PriorConfig,
               rng: np.random.Generator) -> GibbsState:
    if k < 1:
        raise DomainError("k must be at least 1")
    new = state.copy()
    new.u, new.tau = K.draw_tau(state.tau, k, T - 1, priors.a_tau, priors.b_tau,
                                np.empty(2), rng)
    return new


def resample_cluster_values(state: GibbsState, series: CountSeries,
                            priors: PriorConfig, rng: np.random.Generator) -> GibbsState:
    arr = _ChainArrays(state)
    K.resample_clusters(series.counts, state.maturations, arr.z, arr.phi, arr.nj,
                        arr.active, arr.k, priors.a_g0, priors.b_g0,
                        np.zeros(state.lambdas.size, dtype=np.int64), rng)
    new = state.copy()
    new.lambdas = arr.lambdas()
    return new


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

def _check_draws(draws: PosteriorDraws, series: CountSeries) -> None:
    for state, k in zip(draws, draws.cluster_counts):
        if draws.model == "dp":
            state.validate(series)
        if state.k != k:
            raise AssertionError(f"recorded k={k} but state has {state.k} distinct rates")


def run_sampler(series: CountSeries, priors: PriorConfig,
                config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Run the DP-INAR(1) Gibbs sampler.

    Output is a deterministic function of ``(series, priors, config)``.
    """
    state = config.initial_state
    if state is None:
        state = initial_state(series, priors, config.fixed_tau)
    else:
        state = state.copy()
        if config.fixed_tau is not None:
            state.tau = config.fixed_tau
    state.validate(series)
    rng = np.random.default_rng(config.seed)
    arr = _ChainArrays(state)
    N, n = config.n_draws, series.T - 1
    out_alpha, out_tau, out_u = np.empty(N), np.empty(N), np.empty(N)
    out_k = np.empty(N, dtype=np.int64)
    out_iter = np.empty(N, dtype=np.int64)
    out_lam = np.empty((N, n))
    out_m = np.empty((N, n), dtype=np.int64)
    K.dp_chain(series.counts, state.maturations.copy(), arr.z, arr.phi, arr.nj,
               arr.active, arr.pos, arr.k, state.alpha, state.tau, state.u,
               priors.a_alpha, priors.b_alpha, priors.a_tau, priors.b_tau,
               priors.a_g0, priors.b_g0, config.fixed_tau is not None,
               config.n_iterations, config.burn_in, config.thinning, rng,
               out_alpha, out_tau, out_u, out_k, out_lam, out_m, out_iter)
    draws = PosteriorDraws(out_alpha, out_tau, out_lam, out_m, out_k, out_iter,
                           u=out_u, model="dp")
    if config.check_invariants:
        _check_draws(draws, series)
    return draws


def run_inar1_sampler(series: CountSeries, priors: PriorConfig,
                      config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Gibbs sampler for the homogeneous INAR(1) model.

    The common rate has a ``Gamma(a_g0, b_g0)`` prior and is updated by
    Poisson-Gamma conjugacy; alpha and the maturations are updated exactly
    as in the DP sampler.
    """
    state = config.initial_state
    if state is None:
        state = initial_state(series, priors)
        lam0 = float(state.lambdas.mean())
    else:
        lam0 = float(np.mean(state.lambdas))
    rng = np.random.default_rng(config.seed)
    N, n = config.n_draws, series.T - 1
    out_alpha, out_lam = np.empty(N), np.empty(N)
    out_m = np.empty((N, n), dtype=np.int64)
    out_iter = np.empty(N, dtype=np.int64)
    K.inar1_chain(series.counts, state.maturations.copy(), lam0, state.alpha,
                  priors.a_alpha, priors.b_alpha, priors.a_g0, priors.b_g0,
                  config.n_iterations, config.burn_in, config.thinning, rng,
                  out_alpha, out_lam, out_m, out_iter)
    draws = PosteriorDraws(out_alpha, np.full(N, np.nan),
                           np.repeat(out_lam[:, None], n, axis=1), out_m,
                           np.ones(N, dtype=np.int64), out_iter, model="inar1")
    if config.check_invariants:
        _check_draws(draws, series)
    return draws


def fit(series: CountSeries, priors: PriorConfig, config: SamplerConfig,
        model: str = "dp") -> PosteriorDraws:
    if model == "dp":
        return run_sampler(series, priors, config)
    if model == "inar1":
        return run_inar1_sampler(series, priors, config)
    raise DomainError(f"unknown model {model!r}; expected one of {MODELS}")


def posterior_summary(draws: PosteriorDraws) -> dict:
    """Posterior means and the cluster-count histogram."""
    summary = {
        "model": draws.model,
        "N": len(draws),
        "alpha_mean": float(np.mean(draws.alpha)),
        "alpha_sd": float(np.std(draws.alpha, ddof=1)) if len(draws) > 1 else 0.0,
        "mean_rate_mean": float(np.mean(draws.lambdas)),
        "lambda_mean": np.mean(draws.lambdas, axis=0),
        "k_histogram": draws.k_histogram(),
        "k_mode": draws.k_mode(),
    }
    if draws.model == "dp":
        summary["tau_mean"] = float(np.mean(draws.tau))
    else:
        summary["tau_mean"] = math.nan
    return summary
