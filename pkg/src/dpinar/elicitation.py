"""Hyperparameter elicitation by Kullback-Leibler matching.

Two independent problems:

* ``(a_tau, b_tau)``: make the prior law of the number of clusters K among
  ``n = T - 1`` rates, after integrating tau against its Gamma prior, as
  close as possible to a discrete uniform on ``k_min..k_max``.
* ``(a_g0, b_g0)``: make the Gamma base density close to a uniform density
  on ``[0, lambda_max]``.  This one has a closed-form objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.special import digamma, gammaln, logsumexp

from .core import DomainError

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Numerical integration or optimization failed; ``trace`` holds diagnostics."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


# ---------------------------------------------------------------------------
# Stirling numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StirlingTable:
    """``log_values[m, k] = log S(m, k)`` for ``0 <= k <= m <= n``; ``-inf`` elsewhere.

    ``S`` is the unsigned Stirling number of the first kind.
    """

    n: int
    log_values: np.ndarray

    def log(self, m: int, k: int) -> float:
        if not (0 <= m <= self.n):
            raise DomainError(f"table covers m <= {self.n}, got {m}")
        if not 0 <= k <= m:
            return -np.inf
        return float(self.log_values[m, k])

    def row(self, m: Optional[int] = None) -> np.ndarray:
        """``log S(m, k)`` for ``k = 1..m`` (default ``m = n``)."""
        m = self.n if m is None else m
        return self.log_values[m, 1:m + 1]


def log_stirling_table(n: int) -> StirlingTable:
    """Build ``log S(m, k)`` for all ``m <= n`` by the row recurrence

    ``S(m, k) = S(m-1, k-1) + (m-1) S(m-1, k)``.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return _stirling(int(n))


@lru_cache(maxsize=8)
def _stirling(n):
    table = np.full((n + 1, n + 1), -np.inf)
    table[0, 0] = 0.0
    for m in range(1, n + 1):
        prev = table[m - 1]
        scaled = prev[1:m + 1] + np.log(m - 1) if m > 1 else np.full(m, -np.inf)
        with np.errstate(divide="ignore"):
            table[m, 1:m + 1] = np.logaddexp(prev[0:m], scaled)
    table.setflags(write=False)
    return StirlingTable(n, table)


# ---------------------------------------------------------------------------
# cluster-count laws
# ---------------------------------------------------------------------------

def cluster_count_log_prior_given_tau(tau: float, n: int, table: StirlingTable) -> np.ndarray:
    """``log Pr{K = k | tau}`` for ``k = 1..n`` (Antoniak's law)."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    k = np.arange(1, n + 1)
    return table.row(n) + k * np.log(tau) + gammaln(tau) - gammaln(tau + n)


def cluster_count_prior_given_tau(k: int, tau: float, n: int, table: StirlingTable) -> float:
    """``Pr{K = k | tau}`` among n draws from a DP with concentration tau."""
    if not 1 <= k <= n:
        return 0.0
    return float(np.exp(cluster_count_log_prior_given_tau(tau, n, table)[k - 1]))


def log_integrals(a: float, b: float, n: int, rtol: float = 1e-8,
                  max_refinements: int = 12) -> np.ndarray:
    """``log I(a, b; k)`` for ``k = 1..n``, where

    ``I(a, b; k) = int_0^inf tau^(k+a-1) exp(-b tau) Gamma(tau) / Gamma(tau+n) dtau``.

    After substituting ``tau = exp(s)`` the integrands are smooth and decay
    exponentially in both directions, so the trapezoid rule on a truncated
    window converges geometrically.  The step is halved until every
    ``log I`` changes by less than ``rtol``.
    """
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be positive")
    k = np.arange(1, n + 1)
    # log integrand: (k + a - 1) s + g(s) where g collects the k-free part
    def g(s):
        tau = np.exp(s)
        return -b * tau + gammaln(tau + 1.0) - gammaln(tau + n)

    # left tail decays like exp(a s) at k = 1, right tail like exp(-b e^s)
    lo = -60.0 / a - 10.0
    hi = np.log((60.0 + n + a) / b) + 2.0
    for _ in range(30):
        widen_lo, widen_hi = _edges_significant(lo, hi, a, k, g)
        if not (widen_lo or widen_hi):
            break
        lo -= 20.0 if widen_lo else 0.0
        hi += 2.0 if widen_hi else 0.0
    else:
        raise ConvergenceError(f"could not bracket the integrand for a={a}, b={b}")

    h = 0.1
    previous = None
    trace = []
    for _ in range(max_refinements):
        s = np.arange(lo, hi + h / 2, h)
        v = (k[:, None] + a - 1.0) * s[None, :] + g(s)[None, :]
        # trapezoid weights: half at both ends
        v[:, 0] -= np.log(2.0)
        v[:, -1] -= np.log(2.0)
        current = logsumexp(v, axis=1) + np.log(h)
        if previous is not None:
            change = np.max(np.abs(current - previous))
            trace.append((h, change))
            if change < rtol:
                return current
        previous = current
        h /= 2.0
    raise ConvergenceError(f"quadrature did not reach rtol={rtol} for a={a}, b={b}", trace)


def _edges_significant(lo, hi, a, k, g):
    """Whether the integrand at either window edge is within e^-45 of its peak."""
    s = np.linspace(lo, hi, 2001)
    v = (k[:, None] + a - 1.0) * s[None, :] + g(s)[None, :]
    top = v.max(axis=1)
    return bool(np.any(v[:, 0] > top - 45.0)), bool(np.any(v[:, -1] > top - 45.0))


def marginal_cluster_log_pmf(a_tau: float, b_tau: float, n: int,
                             table: Optional[StirlingTable] = None) -> np.ndarray:
    """``log pi(k)`` for ``k = 1..n`` with tau integrated against Gamma(a_tau, b_tau).

    ``pi(k) = b^a / Gamma(a) * S(n, k) * I(a, b; k)``.
    """
    table = table if table is not None else log_stirling_table(n)
    return (a_tau * np.log(b_tau) - gammaln(a_tau) + table.row(n)
            + log_integrals(a_tau, b_tau, n))


def marginal_cluster_pmf(k: int, a_tau: float, b_tau: float, n: int,
                         table: Optional[StirlingTable] = None) -> float:
    if not 1 <= k <= n:
        return 0.0
    return float(np.exp(marginal_cluster_log_pmf(a_tau, b_tau, n, table)[k - 1]))


# ---------------------------------------------------------------------------
# elicitation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElicitationTargets:
    """Reference ranges: K uniform on ``k_min..k_max``, base uniform on ``[0, lambda_max]``."""

    k_min: int
    k_max: int
    lambda_max: float
    T: int

    def __post_init__(self):
        if self.T < 2:
            raise DomainError("T must be at least 2")
        if not 1 <= self.k_min <= self.k_max <= self.T - 1:
            raise DomainError(f"need 1 <= k_min <= k_max <= T - 1 = {self.T - 1}, "
                              f"got k_min={self.k_min}, k_max={self.k_max}")
        if not self.lambda_max > 0:
            raise DomainError("lambda_max must be positive")

    @classmethod
    def default_for(cls, counts) -> "ElicitationTargets":
        """k over 1..T-1 and lambda_max the largest observed count."""
        counts = np.asarray(counts)
        return cls(1, counts.size - 1, float(max(counts.max(), 1)), counts.size)


# search box for the tau prior, (lower, upper) on each of a and b
A_BOUNDS = (1e-4, 1e4)
B_BOUNDS = (1e-10, 1e4)


def tau_objective(a: float, b: float, targets: ElicitationTargets,
                  table: Optional[StirlingTable] = None, rtol: float = 1e-8) -> float:
    """KL between the uniform reference and pi, up to an additive constant.

    ``log Gamma(a) - a log b - mean_k log I(a, b; k)`` over ``k_min..k_max``.
    """
    n = targets.T - 1
    logI = log_integrals(a, b, n, rtol=rtol)
    return float(gammaln(a) - a * np.log(b)
                 - np.mean(logI[targets.k_min - 1:targets.k_max]))


def elicit_tau_prior(targets: ElicitationTargets, restarts: int = 3, seed: int = 0,
                     xatol: float = 1e-7, fatol: float = 1e-11, maxiter: int = 4000,
                     quad_rtol: float = 1e-8):
    """Minimize :func:`tau_objective` over ``(a, b) > 0``.

    Nelder-Mead runs in ``(log a, log b)`` from a fixed start plus
    ``restarts`` random ones; the best converged run wins, ties going to
    the lexicographically smaller ``(a, b)``.  The search is confined to
    ``A_BOUNDS x B_BOUNDS``.  A degenerate target (``k_min == k_max``) has
    its infimum on the boundary, where the returned point then sits.

    Returns
    -------
    (a_tau, b_tau) : tuple of float
    """
    n = targets.T - 1

    def f(x):
        a, b = np.exp(x)
        if not (np.isfinite(a) and np.isfinite(b)):
            return np.inf
        try:
            return tau_objective(a, b, targets, rtol=quad_rtol)
        except ConvergenceError:
            return np.inf

    rng = np.random.default_rng(seed)
    # tau ~ n / log n puts the prior mean of K mid-range
    start = np.array([0.0, np.log(np.log(n + 1.0) / max(n, 1))])
    bounds = np.log([A_BOUNDS, B_BOUNDS])
    starts = [start] + [start + rng.normal(0.0, 1.0, 2) for _ in range(restarts)]
    starts = [np.clip(x0, bounds[:, 0], bounds[:, 1]) for x0 in starts]
    trace = []
    best = None
    for x0 in starts:
        res = optimize.minimize(f, x0, method="Nelder-Mead", bounds=bounds,
                                options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter})
        a, b = np.exp(res.x)
        trace.append({"start": np.exp(x0).tolist(), "a": a, "b": b, "fun": res.fun,
                      "success": bool(res.success), "message": res.message})
        if not (res.success and np.isfinite(res.fun)):
            continue
        key = (res.fun, a, b)
        if best is None or key < best:
            best = key
    if best is None:
        raise ConvergenceError("tau prior elicitation did not converge", trace)
    log.debug("tau elicitation trace: %s", trace)
    return float(best[1]), float(best[2])


def base_measure_objective(a: float, b: float, lambda_max: float) -> float:
    """KL from the uniform density on [0, lambda_max] to the Gamma(a, b) density."""
    L = lambda_max
    return float(-np.log(L) - a * np.log(b) + gammaln(a) - (a - 1.0) * (np.log(L) - 1.0)
                 + b * L / 2.0)


def base_measure_gradient(a: float, b: float, lambda_max: float) -> np.ndarray:
    L = lambda_max
    return np.array([-np.log(b) + digamma(a) - (np.log(L) - 1.0), -a / b + L / 2.0])


def elicit_base_measure(targets: ElicitationTargets, tol: float = 1e-6):
    """Minimize :func:`base_measure_objective`; returns ``(a_g0, b_g0)``.

    The optimum is checked against the first-order conditions and a
    ``ConvergenceError`` raised if either partial derivative exceeds ``tol``.
    """
    L = targets.lambda_max

    def f(x):
        a, b = np.exp(x)
        return base_measure_objective(a, b, L)

    def grad(x):
        a, b = np.exp(x)
        return base_measure_gradient(a, b, L) * np.array([a, b])

    res = optimize.minimize(f, np.array([0.5, np.log(1.0 / L)]), jac=grad, method="BFGS",
                            options={"gtol": 1e-12, "maxiter": 1000})
    a, b = np.exp(res.x)
    g = base_measure_gradient(a, b, L)
    if not np.all(np.abs(g) < tol):
        raise ConvergenceError(f"base measure optimum fails stationarity: grad={g}",
                               [res])
    return float(a), float(b)


def elicit_priors(targets: ElicitationTargets, a_alpha: float = 1.0, b_alpha: float = 1.0,
                  seed: int = 0):
    """All six hyperparameters, with a uniform prior on alpha by default."""
    from .core import PriorConfig

    a_tau, b_tau = _cached_tau(targets.k_min, targets.k_max, targets.T, seed)
    a_g0, b_g0 = elicit_base_measure(targets)
    return PriorConfig(a_alpha, b_alpha, a_tau, b_tau, a_g0, b_g0)


@lru_cache(maxsize=64)
def _cached_tau(k_min, k_max, T, seed):
    # the tau problem depends on the series only through T
    return elicit_tau_prior(ElicitationTargets(k_min, k_max, 1.0, T), seed=seed)
