"""h-steps-ahead posterior predictive distributions.

Given ``y_t``, alpha and future rates, ``Y_{t+h}`` is the convolution of
``Binomial(y_t, alpha^h)`` with ``Poisson(mu_h)``, where
``mu_h = sum_i alpha^(h-i) lambda_{t+i}``.  Future rates are drawn per
posterior draw from the Polya urn, and the per-draw pmfs are averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import logsumexp, xlog1py, xlogy

from .core import CountSeries, DomainError, GibbsState, PriorConfig, log_factorial
from .gibbs import PosteriorDraws

TAIL_TOL = 1e-8
TAU_MODES = ("per-draw", "posterior-mean")


@dataclass(frozen=True)
class ForecastDistribution:
    """Predictive pmf over ``0..y_cap`` plus the mass left beyond ``y_cap``."""

    horizon: int
    pmf: np.ndarray
    tail_mass: float
    point_forecast: int
    n_draws: int = 1

    @property
    def y_cap(self) -> int:
        return int(self.pmf.size - 1)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))


@dataclass(frozen=True)
class RateExtension:
    future_rates: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.future_rates, dtype=float)
        if rates.ndim != 1 or rates.size < 1:
            raise DomainError("need at least one future rate")
        if not np.all(rates > 0):
            raise DomainError("future rates must be positive")
        object.__setattr__(self, "future_rates", rates)

    @property
    def h(self) -> int:
        return int(self.future_rates.size)


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def poisson_tail_bound(x: int, mu: float) -> float:
    """Chernoff bound on ``Pr{Poisson(mu) >= x}`` (1 when ``x <= mu``)."""
    if x <= mu:
        return 1.0
    if mu <= 0:
        return 0.0
    return math.exp(-mu + x * (1.0 + math.log(mu) - math.log(x)))


def _certified_cap(y_t: int, mu_max: float, initial: int) -> int:
    # binomial part is at most y_t, so Y > cap needs Poisson >= cap + 1 - y_t
    cap = max(initial, y_t + 1)
    while poisson_tail_bound(cap + 1 - y_t, mu_max) >= TAIL_TOL:
        cap *= 2
    return cap


def default_cap(y_t: int, alpha: float, max_rate: float) -> int:
    return int(y_t + math.ceil(10.0 * (max_rate + y_t * alpha)))


def cumulative_rates(alpha: float, rates: np.ndarray) -> float:
    """``mu_h`` by the recursion ``mu_{i+1} = alpha mu_i + lambda_{t+i+1}``."""
    mu = 0.0
    for lam in rates:
        mu = alpha * mu + lam
    return mu


# ---------------------------------------------------------------------------
# h-step transition
# ---------------------------------------------------------------------------

def _convolution_log_pmf(y_t: int, p, mu, cap: int) -> np.ndarray:
    """Rows of ``log Pr{Y = y}``, ``y = 0..cap``, for arrays of (p, mu)."""
    p = np.atleast_1d(np.asarray(p, float))[:, None, None]
    mu = np.atleast_1d(np.asarray(mu, float))[:, None, None]
    m = np.arange(y_t + 1)[None, None, :]
    y = np.arange(cap + 1)[None, :, None]
    log_binom = (log_factorial(y_t) - log_factorial(m) - log_factorial(y_t - m)
                 + xlogy(m, p) + xlog1py(y_t - m, -p))
    x = y - m
    valid = x >= 0
    xs = np.where(valid, x, 0)
    log_pois = np.where(valid, xlogy(xs, mu) - mu - log_factorial(xs), -np.inf)
    return logsumexp(log_binom + log_pois, axis=2)


def _convolution_tail(y_t: int, p, mu, cap: int) -> np.ndarray:
    """Exact ``Pr{Y > cap}`` for each (p, mu) pair."""
    p = np.atleast_1d(np.asarray(p, float))[:, None]
    mu = np.atleast_1d(np.asarray(mu, float))[:, None]
    m = np.arange(y_t + 1)[None, :]
    # log-space binomial weights; scipy's binom.pmf overflows for subnormal p
    log_binom = (log_factorial(y_t) - log_factorial(m) - log_factorial(y_t - m)
                 + xlogy(m, p) + xlog1py(y_t - m, -p))
    return np.sum(np.exp(log_binom) * stats.poisson.sf(cap - m, mu), axis=1)


def hstep_transition_pmf(y_t: int, alpha: float, future_rates, y_cap: Optional[int] = None):
    """Distribution of ``Y_{t+h}`` given ``Y_t = y_t``, alpha and ``lambda_{t+1..t+h}``.

    Parameters
    ----------
    y_t : int
        Current count.
    alpha : float
        Thinning probability.
    future_rates : RateExtension or sequence of float
        ``lambda_{t+1}, ..., lambda_{t+h}``.
    y_cap : int, optional
        Largest count to tabulate.  Raised automatically until the mass
        beyond it is certified below 1e-8.

    Returns
    -------
    ForecastDistribution
        pmf over ``0..cap`` for the cap actually used, with
        ``tail_mass = Pr{Y_{t+h} > cap}``.
    """
    if not isinstance(future_rates, RateExtension):
        future_rates = RateExtension(future_rates)
    if y_t < 0:
        raise DomainError("y_t must be nonnegative")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    rates = future_rates.future_rates
    h = rates.size
    mu = cumulative_rates(alpha, rates)
    initial = y_cap if y_cap is not None else default_cap(y_t, alpha, rates.max())
    cap = _certified_cap(int(y_t), mu, initial)
    p = alpha ** h
    pmf = np.exp(_convolution_log_pmf(int(y_t), p, mu, cap)[0])
    tail = float(_convolution_tail(int(y_t), p, mu, cap)[0])
    return ForecastDistribution(h, pmf, tail, generalized_median(pmf), 1)


# ---------------------------------------------------------------------------
# urn extension
# ---------------------------------------------------------------------------

def _extend(lambdas: np.ndarray, tau: np.ndarray, h: int, priors: PriorConfig,
            rng: np.random.Generator) -> np.ndarray:
    """Vectorized sequential urn draws: rows of ``lambdas`` extended by h rates."""
    N, n = lambdas.shape
    ext = np.empty((N, n + h))
    ext[:, :n] = lambdas
    for i in range(h):
        size = n + i
        fresh = rng.random(N) < tau / (tau + size)
        copy_index = rng.integers(0, size, N)
        new_values = rng.gamma(priors.a_g0, 1.0 / priors.b_g0, N)
        ext[:, size] = np.where(fresh, new_values, ext[np.arange(N), copy_index])
    return ext[:, n:]


def extend_rates(draw: GibbsState, h: int, priors: PriorConfig,
                 rng: np.random.Generator) -> RateExtension:
    """Draw ``lambda_{T+1..T+h}`` from the urn seeded with ``draw.lambdas``.

    Step i picks a fresh ``G0`` value with probability
    ``tau / (tau + T + i - 2)``, otherwise copies one of the ``T + i - 2``
    rates already in the urn (extended ones included) uniformly.
    """
    if h < 1:
        raise DomainError("horizon must be at least 1")
    ext = _extend(draw.lambdas[None, :], np.array([draw.tau]), h, priors, rng)
    return RateExtension(ext[0])


# ---------------------------------------------------------------------------
# predictive
# ---------------------------------------------------------------------------

def generalized_median(dist) -> int:
    """Smallest count with positive mass minimizing ``|0.5 - CDF(y)|``.

    Counts with zero mass are skipped; otherwise a point mass at c would tie
    with every y < c at distance 0.5.
    """
    pmf = dist.pmf if isinstance(dist, ForecastDistribution) else np.asarray(dist, float)
    dev = np.abs(0.5 - np.cumsum(pmf))
    dev[pmf <= 0] = np.inf
    return int(np.argmin(dev))


def future_rate_paths(draws: PosteriorDraws, h: int, priors: PriorConfig,
                      rng: np.random.Generator, tau_mode: str = "per-draw") -> np.ndarray:
    """One ``(N, h)`` array of future rates, one row per posterior draw.

    The homogeneous baseline keeps its single rate for every future epoch.
    """
    if h < 1:
        raise DomainError("horizon must be at least 1")
    if draws.model == "inar1":
        return np.repeat(draws.lambdas[:, :1], h, axis=1)
    if tau_mode == "per-draw":
        tau = np.asarray(draws.tau, float)
    elif tau_mode == "posterior-mean":
        tau = np.full(len(draws), float(np.mean(draws.tau)))
    else:
        raise DomainError(f"tau_mode must be one of {TAU_MODES}")
    return _extend(np.asarray(draws.lambdas), tau, h, priors, rng)


def mixture_pmf(y_t: int, alphas: np.ndarray, rate_paths: np.ndarray, h: int,
                chunk: int = 256) -> ForecastDistribution:
    """Equal-weight average of the per-draw h-step pmfs."""
    alphas = np.asarray(alphas, float)
    rate_paths = np.asarray(rate_paths, float)
    N = alphas.size
    if N < 1:
        raise DomainError("need at least one posterior draw")
    mu = np.zeros(N)
    for i in range(h):
        mu = alphas * mu + rate_paths[:, i]
    p = alphas ** h
    initial = default_cap(int(y_t), float(alphas.max()), float(rate_paths.max()))
    cap = _certified_cap(int(y_t), float(mu.max()), initial)
    total = np.zeros(cap + 1)
    tail = 0.0
    # fixed chunk order keeps the summation deterministic
    for start in range(0, N, chunk):
        sl = slice(start, start + chunk)
        total += np.exp(_convolution_log_pmf(int(y_t), p[sl], mu[sl], cap)).sum(axis=0)
        tail += float(_convolution_tail(int(y_t), p[sl], mu[sl], cap).sum())
    pmf = total / N
    return ForecastDistribution(h, pmf, tail / N, generalized_median(pmf), N)


def predictive_pmf(draws: PosteriorDraws, series: CountSeries, h: int,
                   priors: PriorConfig, rng: np.random.Generator,
                   tau_mode: str = "per-draw") -> ForecastDistribution:
    """Monte Carlo posterior predictive of ``Y_{T+h}`` given the series."""
    if len(draws) < 1:
        raise DomainError("need at least one posterior draw")
    if draws.lambdas.shape[1] != series.T - 1:
        raise DomainError("draws do not match the series length")
    paths = future_rate_paths(draws, h, priors, rng, tau_mode)
    return mixture_pmf(int(series.counts[-1]), draws.alpha, paths, h)

