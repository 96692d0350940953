import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats
from scipy.special import betaln

from dpinar.core import CountSeries, DomainError, GibbsState, PriorConfig
from dpinar.gibbs import (SamplerConfig, alpha_conditional, cluster_posterior, fit,
                          lambda_conditional, maturation_conditional, posterior_summary,
                          resample_cluster_values, run_inar1_sampler, run_sampler,
                          tau_conditional, update_alpha, update_lambda, update_maturation,
                          update_tau)

from . import oracles


def _state(lambdas, maturations, alpha=0.4, tau=1.0, u=0.5):
    return GibbsState(alpha, np.asarray(lambdas, float), np.asarray(maturations), tau, u)


# --- lambda ------------------------------------------------------------------

def test_lambda_T2_only_fresh_component():
    s = CountSeries([3, 5])
    fresh, atoms, w = lambda_conditional(2, _state([2.0], [1]), s, PriorConfig())
    assert fresh == 1.0 and atoms.size == 0


def test_lambda_T2_draw_is_gamma():
    s = CountSeries([3, 5])
    priors = PriorConfig(a_g0=2.0, b_g0=0.5)
    rng = np.random.default_rng(0)
    state = _state([2.0], [1])
    draws = [update_lambda(2, state, s, priors, rng).lambdas[0] for _ in range(4000)]
    # Gamma(y - m + a_g0, b_g0 + 1) = Gamma(6, 1.5)
    assert stats.kstest(draws, stats.gamma(6.0, scale=1 / 1.5).cdf).pvalue > 0.01


def test_lambda_zero_innovation_weights():
    s = CountSeries([2, 2, 1, 4])
    state = _state([0.5, 1.5, 3.0], [2, 0, 0], tau=0.8)
    fresh, atoms, w = lambda_conditional(2, state, s, PriorConfig())
    raw = np.array([0.8 * 0.5, math.exp(-1.5), math.exp(-3.0)])
    np.testing.assert_allclose(np.r_[fresh, w], raw / raw.sum(), rtol=1e-13)


def test_lambda_weights_match_rational_oracle():
    s = CountSeries([1, 4, 2])
    state = _state([1.25, 3.5], [1, 1], tau=0.75)
    priors = PriorConfig(a_g0=2.0, b_g0=1.5)
    fresh, atoms, w = lambda_conditional(3, state, s, priors)
    expected = oracles.lambda_weights_rational(1, Fraction(3, 4), [Fraction(5, 4)],
                                               2, Fraction(3, 2))
    np.testing.assert_allclose(np.r_[fresh, w], expected, rtol=1e-12)


def test_lambda_conditional_handles_repeated_atoms():
    s = CountSeries([1, 2, 3, 1])
    state = _state([2.0, 2.0, 5.0], [0, 1, 0])
    fresh, atoms, w = lambda_conditional(4, state, s, PriorConfig())
    assert w[0] == pytest.approx(w[1])
    assert fresh + w.sum() == pytest.approx(1.0, abs=1e-12)


# --- alpha -------------------------------------------------------------------

def test_alpha_conditional_formula():
    s = CountSeries([3, 4, 1])
    # sum m = 3, sum (y_prev - m) = (3 - 2) + (4 - 1) = 4
    a, b = alpha_conditional(_state([1, 1], [2, 1]), s, PriorConfig(1, 1))
    assert (a, b) == (4.0, 5.0)
    s2 = CountSeries([3, 3, 4])
    assert alpha_conditional(_state([1, 1], [2, 1]), s2, PriorConfig(1, 1)) == (4.0, 4.0)


def test_alpha_conditional_prior_when_no_survivors():
    s = CountSeries([0, 0, 0])
    assert alpha_conditional(_state([1, 1], [0, 0]), s, PriorConfig(2.5, 0.5)) == (2.5, 0.5)


def test_alpha_draws_follow_beta():
    s = CountSeries([5, 4, 6])
    state = _state([1, 1], [2, 1])
    rng = np.random.default_rng(1)
    draws = [update_alpha(state, s, PriorConfig(1, 1), rng).alpha for _ in range(4000)]
    assert stats.kstest(draws, stats.beta(4, 7).cdf).pvalue > 0.01


def test_alpha_maturation_alternation_matches_enumeration():
    """Alternate m | alpha and alpha | m with rates fixed; compare the m marginal."""
    y = np.array([3, 2, 3])
    lam = np.array([1.3, 0.6])
    priors = PriorConfig(1.5, 2.0)
    s = CountSeries(y)
    exact = {}
    for m in oracles.maturation_vectors(y):
        logp = betaln(priors.a_alpha + sum(m), priors.b_alpha + sum(y[:-1] - np.array(m)))
        for t in range(2):
            logp += math.log(math.comb(y[t], m[t])) + stats.poisson.logpmf(y[t + 1] - m[t], lam[t])
        exact[m] = math.exp(logp)
    z = sum(exact.values())
    rng = np.random.default_rng(2)
    state = _state(lam, [0, 0], alpha=0.5)
    counts = {}
    n = 20000
    for _ in range(n):
        for t in (2, 3):
            state = update_maturation(t, state, s, rng)
        state = update_alpha(state, s, priors, rng)
        key = tuple(int(v) for v in state.maturations)
        counts[key] = counts.get(key, 0) + 1
    tv = 0.5 * sum(abs(counts.get(m, 0) / n - p / z) for m, p in exact.items())
    assert tv < 0.02


# --- maturation --------------------------------------------------------------

def test_maturation_singleton_support():
    s = CountSeries([0, 5])
    np.testing.assert_array_equal(maturation_conditional(2, _state([1.0], [0]), s), [1.0])


def test_maturation_alpha_zero_and_one():
    s = CountSeries([3, 2])
    np.testing.assert_array_equal(maturation_conditional(2, _state([1.0], [0], alpha=0.0), s),
                                  [1, 0, 0])
    np.testing.assert_array_equal(maturation_conditional(2, _state([1.0], [0], alpha=1.0), s),
                                  [0, 0, 1])
    rng = np.random.default_rng(0)
    assert update_maturation(2, _state([1.0], [0], alpha=1.0), s, rng).maturations[0] == 2
    assert update_maturation(2, _state([1.0], [2], alpha=0.0), s, rng).maturations[0] == 0


def test_maturation_three_point_support_exact():
    s = CountSeries([2, 2])
    p = maturation_conditional(2, _state([1.0], [0], alpha=0.5), s)
    expected = oracles.maturation_weights_exact(2, 2, Fraction(1, 2), Fraction(1))
    assert [float(v) for v in expected] == pytest.approx([1 / 7, 4 / 7, 2 / 7])
    np.testing.assert_allclose(p, [float(v) for v in expected], rtol=1e-13)


@pytest.mark.parametrize("y_prev,y_cur,alpha,lam", [(5, 3, Fraction(1, 3), Fraction(5, 2)),
                                                    (7, 9, Fraction(9, 10), Fraction(1, 4)),
                                                    (4, 4, Fraction(1, 20), Fraction(7))])
def test_maturation_rational_oracle(y_prev, y_cur, alpha, lam):
    s = CountSeries([y_prev, y_cur])
    p = maturation_conditional(2, _state([float(lam)], [0], alpha=float(alpha)), s)
    expected = [float(v) for v in oracles.maturation_weights_exact(y_prev, y_cur, alpha, lam)]
    np.testing.assert_allclose(p, expected, rtol=1e-12)


# --- tau ---------------------------------------------------------------------

def test_tau_mixture_example():
    priors = PriorConfig(a_tau=1.0, b_tau=1.0)
    w, shapes, rate = tau_conditional(2, 5, math.exp(-1), priors)
    np.testing.assert_allclose(w, [0.2, 0.8], rtol=1e-13)
    np.testing.assert_array_equal(shapes, [3.0, 2.0])
    assert rate == pytest.approx(2.0)
    mean = float(np.dot(w, shapes / rate))
    assert mean == pytest.approx(1.1, abs=1e-13)
    assert mean == pytest.approx(oracles.tau_given_u_mean(2, 4, math.exp(-1), 1.0, 1.0), rel=1e-8)


@pytest.mark.parametrize("k,T,u,a,b", [(1, 10, 0.3, 0.4, 0.01), (5, 144, 0.9, 0.5, 0.003),
                                       (12, 50, 0.01, 2.0, 3.0), (1, 2, 0.5, 0.1, 0.1)])
def test_tau_mixture_matches_quadrature(k, T, u, a, b):
    priors = PriorConfig(a_tau=a, b_tau=b)
    w, shapes, rate = tau_conditional(k, T, u, priors)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    mean = float(np.dot(w, shapes / rate))
    assert mean == pytest.approx(oracles.tau_given_u_mean(k, T - 1, u, a, b), rel=1e-7)


def test_tau_second_shape_positive_for_small_a():
    # a + k - 1 >= a > 0 whenever k >= 1, so no fallback is ever needed
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        w, shapes, _ = tau_conditional(1, 20, 0.4, PriorConfig(a_tau=0.2))
    assert shapes[1] == pytest.approx(0.2)
    assert np.all(w > 0)


def test_tau_domain_errors():
    with pytest.raises(DomainError):
        tau_conditional(0, 10, 0.5, PriorConfig())
    with pytest.raises(DomainError):
        tau_conditional(2, 10, 1.0, PriorConfig())


def test_tau_long_run_matches_marginal_law():
    k, T = 3, 30
    priors = PriorConfig(a_tau=1.5, b_tau=0.5)
    rng = np.random.default_rng(4)
    state = _state(np.ones(T - 1), np.zeros(T - 1, dtype=int), tau=1.0)
    draws = np.empty(20000)
    for i in range(draws.size):
        state = update_tau(state, k, T, priors, rng)
        draws[i] = state.tau
    grid = np.quantile(draws, np.linspace(0.05, 0.95, 19))
    cdf = oracles.tau_given_k_cdf(grid, k, T - 1, 1.5, 0.5)
    emp = np.array([(draws <= g).mean() for g in grid])
    assert np.max(np.abs(emp - cdf)) < 0.02


# --- cluster resampling ------------------------------------------------------

def test_cluster_posterior_two_clusters():
    s = CountSeries([2, 4, 3, 6, 1])
    state = _state([1.0, 5.0, 1.0, 5.0], [1, 2, 1, 0])
    priors = PriorConfig(a_g0=2.0, b_g0=0.5)
    shapes, rates = cluster_posterior(state, s, priors)
    # value 1.0: epochs 2 and 4, innovations 3 and 5; value 5.0: epochs 3 and 5, 1 and 1
    np.testing.assert_allclose(shapes, [2 + 8, 2 + 2])
    np.testing.assert_allclose(rates, [2.5, 2.5])


def test_resample_keeps_partition_and_matches_moments():
    s = CountSeries([2, 4, 3, 6, 1])
    state = _state([1.0, 5.0, 1.0, 5.0], [1, 2, 1, 0])
    priors = PriorConfig(a_g0=2.0, b_g0=0.5)
    rng = np.random.default_rng(5)
    vals = []
    for _ in range(3000):
        new = resample_cluster_values(state, s, priors, rng)
        lam = new.lambdas
        assert lam[0] == lam[2] and lam[1] == lam[3] and lam[0] != lam[1]
        vals.append((lam[0], lam[1]))
    vals = np.array(vals)
    assert stats.kstest(vals[:, 0], stats.gamma(10.0, scale=1 / 2.5).cdf).pvalue > 0.01
    assert stats.kstest(vals[:, 1], stats.gamma(4.0, scale=1 / 2.5).cdf).pvalue > 0.01


def test_resample_singletons_and_single_cluster():
    s = CountSeries([2, 4, 3, 6])
    priors = PriorConfig(a_g0=1.5, b_g0=1.0)
    single = _state([2.0, 2.0, 2.0], [1, 2, 1])
    shapes, rates = cluster_posterior(single, s, priors)
    np.testing.assert_allclose(shapes, [1.5 + 3 + 1 + 5])
    np.testing.assert_allclose(rates, [1.0 + 3])
    sing = _state([1.0, 2.0, 3.0], [1, 2, 1])
    shapes, rates = cluster_posterior(sing, s, priors)
    np.testing.assert_allclose(shapes, 1.5 + np.array([3, 1, 5]))
    np.testing.assert_allclose(rates, [2.0, 2.0, 2.0])


# --- chains ------------------------------------------------------------------

def _small_series():
    return CountSeries([3, 4, 2, 6, 5, 1, 0, 3, 4, 7, 2, 2])


def test_run_sampler_deterministic_and_sized():
    s = _small_series()
    cfg = SamplerConfig(500, 100, 3, seed=11, check_invariants=True)
    a = run_sampler(s, PriorConfig(), cfg)
    b = run_sampler(s, PriorConfig(), cfg)
    assert len(a) == (500 - 100) // 3
    np.testing.assert_array_equal(a.lambdas, b.lambdas)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    assert np.all(a.iterations[1:] - a.iterations[:-1] == 3)
    for state, k in zip(a, a.cluster_counts):
        assert state.k == k
        assert np.all(state.maturations <= np.minimum(s.counts[:-1], s.counts[1:]))


def test_different_seeds_differ():
    s = _small_series()
    a = run_sampler(s, PriorConfig(), SamplerConfig(300, 50, 1, seed=1))
    b = run_sampler(s, PriorConfig(), SamplerConfig(300, 50, 1, seed=2))
    assert not np.array_equal(a.alpha, b.alpha)


def test_fixed_tau_stays_fixed():
    d = run_sampler(_small_series(), PriorConfig(),
                    SamplerConfig(200, 20, 1, seed=0, fixed_tau=0.7))
    assert np.all(d.tau == 0.7)


def test_config_validation():
    for kwargs in (dict(n_iterations=0), dict(n_iterations=10, burn_in=10),
                   dict(thinning=0), dict(fixed_tau=-1.0),
                   dict(n_iterations=10, burn_in=5, thinning=6)):
        with pytest.raises(DomainError):
            SamplerConfig(**kwargs)


def test_inar1_baseline_recovers_parameters():
    from dpinar.core import simulate

    s = simulate(400, 0.4, np.full(399, 3.0), seed=8)
    d = run_inar1_sampler(s, PriorConfig(), SamplerConfig(3000, 500, 1, seed=3))
    assert d.model == "inar1"
    assert np.all(np.isnan(d.tau))
    assert np.all(d.cluster_counts == 1)
    assert abs(d.alpha.mean() - 0.4) < 3 * d.alpha.std()
    assert abs(d.lambdas[:, 0].mean() - 3.0) < 3 * d.lambdas[:, 0].std()


def test_fit_dispatch_and_summary():
    s = _small_series()
    with pytest.raises(DomainError):
        fit(s, PriorConfig(), SamplerConfig(100, 10, 1), "ar2")
    d = fit(s, PriorConfig(), SamplerConfig(300, 100, 2, seed=1), "dp")
    summary = posterior_summary(d)
    assert summary["N"] == 100
    assert sum(summary["k_histogram"].values()) == 100
    assert 0 <= summary["alpha_mean"] <= 1
