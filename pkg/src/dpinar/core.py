"""Domain types and the generalized INAR(1) transition law.

The generalized INAR(1) process is

    Y_t = alpha o Y_{t-1} + Z_t,    Z_t ~ Poisson(lambda_t),

where ``o`` is binomial thinning.  The first count is conditioned on, so a
series of length T carries T - 1 innovation rates lambda_2..lambda_T and
T - 1 latent maturations m_2..m_T.  Arrays in this package index those
quantities from 0, i.e. ``lambdas[i]`` is lambda_{i+2}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, xlog1py, xlogy


class DomainError(ValueError):
    """Raised when an argument lies outside the model's parameter space."""


# ---------------------------------------------------------------------------
# log-factorials
# ---------------------------------------------------------------------------

_LOG_FACTORIAL = gammaln(np.arange(512) + 1.0)


def log_factorial(n):
    """Return ``log(n!)`` for a nonnegative integer or integer array.

    Values below the table size are looked up, larger ones fall back to
    ``gammaln``.
    """
    global _LOG_FACTORIAL
    n = np.asarray(n)
    top = int(n.max()) if n.size else 0
    if top >= _LOG_FACTORIAL.size:
        size = max(2 * _LOG_FACTORIAL.size, top + 64)
        if size <= 1 << 16:
            _LOG_FACTORIAL = gammaln(np.arange(size) + 1.0)
        else:
            return gammaln(n + 1.0)
    return _LOG_FACTORIAL[n]


def _binom_logpmf(m, n, p):
    # xlogy/xlog1py keep 0*log(0) = 0 at p in {0, 1}
    return (log_factorial(n) - log_factorial(m) - log_factorial(n - m)
            + xlogy(m, p) + xlog1py(n - m, -p))


def _poisson_logpmf(x, mu):
    return xlogy(x, mu) - mu - log_factorial(x)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountSeries:
    """Observed counts ``y_1..y_T`` with optional epoch labels."""

    counts: np.ndarray
    epoch_labels: Optional[tuple] = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise DomainError("counts must be one-dimensional")
        if counts.size < 2:
            raise DomainError(f"a count series needs T >= 2 epochs, got {counts.size}")
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise DomainError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise DomainError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.epoch_labels is not None:
            labels = tuple(str(x) for x in self.epoch_labels)
            if len(labels) != counts.size:
                raise DomainError("epoch_labels must match counts in length")
            object.__setattr__(self, "epoch_labels", labels)

    @property
    def T(self) -> int:
        return int(self.counts.size)

    def __len__(self) -> int:
        return self.T

    def head(self, length: int) -> "CountSeries":
        """The first ``length`` epochs, y_1..y_length."""
        labels = None if self.epoch_labels is None else self.epoch_labels[:length]
        return CountSeries(self.counts[:length], labels)

    def __eq__(self, other):
        if not isinstance(other, CountSeries):
            return NotImplemented
        return (np.array_equal(self.counts, other.counts)
                and self.epoch_labels == other.epoch_labels)

    def __hash__(self):
        return hash((self.counts.tobytes(), self.epoch_labels))


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the DP-INAR(1) model.

    ``alpha ~ Beta(a_alpha, b_alpha)``, ``tau ~ Gamma(a_tau, b_tau)`` and the
    base measure is ``Gamma(a_g0, b_g0)``; every Gamma is in shape/rate form.
    """

    a_alpha: float = 1.0
    b_alpha: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0
    a_g0: float = 1.0
    b_g0: float = 1.0

    def __post_init__(self):
        for name in ("a_alpha", "b_alpha", "a_tau", "b_tau", "a_g0", "b_g0"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"prior hyperparameter {name} must be positive, got {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class ClusterView:
    """Distinct innovation rates and which epoch uses which."""

    unique_rates: np.ndarray
    assignment: np.ndarray
    occupancy: np.ndarray

    @property
    def k(self) -> int:
        return int(self.unique_rates.size)


@dataclass
class GibbsState:
    """One configuration of the sampler's unknowns."""

    alpha: float
    lambdas: np.ndarray
    maturations: np.ndarray
    tau: float
    u: float = 0.5

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.tau = float(self.tau)
        self.u = float(self.u)
        self.lambdas = np.array(self.lambdas, dtype=np.float64)
        self.maturations = np.array(self.maturations, dtype=np.int64)

    def clusters(self) -> ClusterView:
        unique, inverse, counts = np.unique(self.lambdas, return_inverse=True,
                                            return_counts=True)
        return ClusterView(unique, inverse.astype(np.int64), counts.astype(np.int64))

    @property
    def k(self) -> int:
        return int(np.unique(self.lambdas).size)

    def copy(self) -> "GibbsState":
        return GibbsState(self.alpha, self.lambdas.copy(), self.maturations.copy(),
                          self.tau, self.u)

    def validate(self, series: CountSeries) -> None:
        """Raise ``DomainError`` unless the state is feasible for ``series``."""
        y = series.counts
        n = series.T - 1
        if self.lambdas.shape != (n,) or self.maturations.shape != (n,):
            raise DomainError(f"state must carry {n} rates and maturations")
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not np.all(self.lambdas > 0):
            raise DomainError("innovation rates must be strictly positive")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        upper = np.minimum(y[:-1], y[1:])
        if np.any(self.maturations < 0) or np.any(self.maturations > upper):
            raise DomainError("maturations violate 0 <= m_t <= min(y_{t-1}, y_t)")


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------

def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")


def transition_log_pmf(y_prev: int, y_cur: int, alpha: float, lam: float) -> float:
    """Log of ``Pr{Y_t = y_cur | Y_{t-1} = y_prev, alpha, lambda}``.

    The binomial survivors and the Poisson innovations are convolved over
    ``m = 0..min(y_prev, y_cur)`` in log space.
    """
    if y_prev < 0 or y_cur < 0 or int(y_prev) != y_prev or int(y_cur) != y_cur:
        raise DomainError("counts must be nonnegative integers")
    _check_alpha(alpha)
    if not lam > 0:
        raise DomainError(f"innovation rate must be positive, got {lam}")
    y_prev, y_cur = int(y_prev), int(y_cur)
    m = np.arange(min(y_prev, y_cur) + 1)
    terms = _binom_logpmf(m, y_prev, alpha) + _poisson_logpmf(y_cur - m, lam)
    return float(min(logsumexp(terms), 0.0))


def joint_log_likelihood(series: CountSeries, alpha: float, lambdas) -> float:
    """Sum of transition log-probabilities over t = 2..T, given y_1."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (series.T - 1,):
        raise DomainError(f"expected {series.T - 1} innovation rates, got {lambdas.size}")
    y = series.counts
    return float(sum(transition_log_pmf(y[i], y[i + 1], alpha, lambdas[i])
                     for i in range(series.T - 1)))


def augmented_log_density(series: CountSeries, state: GibbsState,
                          priors: PriorConfig) -> float:
    """Log of ``p(y, m | alpha, lambda) * pi(alpha)``.

    The exchangeable prior on the rates is not included; the sampler handles
    it through the urn.  Infeasible maturations give ``-inf``.
    """
    y = series.counts
    m = state.maturations
    if m.shape != (series.T - 1,) or state.lambdas.shape != (series.T - 1,):
        raise DomainError("state does not match series length")
    if np.any(m < 0) or np.any(m > y[1:]) or np.any(m > y[:-1]):
        return -np.inf
    alpha = state.alpha
    _check_alpha(alpha)
    lp = np.sum(_poisson_logpmf(y[1:] - m, state.lambdas))
    lp += np.sum(_binom_logpmf(m, y[:-1], alpha))
    lp += (xlogy(priors.a_alpha - 1, alpha) + xlog1py(priors.b_alpha - 1, -alpha)
           - betaln(priors.a_alpha, priors.b_alpha))
    return float(lp)


def log_prior_alpha(alpha: float, priors: PriorConfig) -> float:
    return float(xlogy(priors.a_alpha - 1, alpha) + xlog1py(priors.b_alpha - 1, -alpha)
                 - betaln(priors.a_alpha, priors.b_alpha))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate(T: int, alpha: float, rate_schedule: Sequence[float], seed: int,
             y1: Optional[int] = None) -> CountSeries:
    """Forward-simulate a generalized INAR(1) series.

    Parameters
    ----------
    T : int
        Series length, at least 2.
    alpha : float
        Survival probability of the thinning operator.
    rate_schedule : sequence of float
        Innovation rates lambda_2..lambda_T (length ``T - 1``).  Zero rates
        are allowed here, unlike in inference.
    seed : int
        Seed for a private ``numpy.random.Generator``.
    y1 : int, optional
        Initial count.  Drawn from Poisson(first rate) when omitted.
    """
    if T < 2:
        raise DomainError(f"T must be at least 2, got {T}")
    _check_alpha(alpha)
    rates = np.asarray(rate_schedule, dtype=float)
    if rates.shape != (T - 1,):
        raise DomainError(f"rate_schedule must have length T - 1 = {T - 1}")
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise DomainError("rates must be finite and nonnegative")
    rng = np.random.default_rng(seed)
    y = np.empty(T, dtype=np.int64)
    if y1 is None:
        y[0] = rng.poisson(rates[0])
    else:
        if y1 < 0:
            raise DomainError("y1 must be nonnegative")
        y[0] = int(y1)
    for i in range(1, T):
        y[i] = rng.binomial(y[i - 1], alpha) + rng.poisson(rates[i - 1])
    return CountSeries(y)
