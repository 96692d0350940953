"""Compiled Gibbs kernels.

Cluster bookkeeping inside a chain uses slot labels rather than value
comparison: ``z[i]`` is the slot of epoch i, ``phi[s]`` the slot's rate and
``nj[s]`` its occupancy.  Active slots are kept compactly in
``active[:k]`` with ``pos[s]`` the inverse index, so removal is O(1).
"""

import math

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE)
def categorical_from_log(logw, size, rng):
    top = -np.inf
    for j in range(size):
        if logw[j] > top:
            top = logw[j]
    total = 0.0
    for j in range(size):
        logw[j] = math.exp(logw[j] - top)
        total += logw[j]
    target = rng.random() * total
    acc = 0.0
    for j in range(size):
        acc += logw[j]
        if target < acc:
            return j
    # roundoff: fall back to the last positive weight
    for j in range(size - 1, -1, -1):
        if logw[j] > 0.0:
            return j
    return size - 1


# ---------------------------------------------------------------------------
# full-conditional weights
# ---------------------------------------------------------------------------

@njit(cache=_CACHE)
def log_factorials(top):
    out = np.empty(top + 1)
    for i in range(top + 1):
        out[i] = math.lgamma(i + 1.0)
    return out


@njit(cache=_CACHE)
def maturation_log_weights(y_prev, y_cur, alpha, lam, lf, out):
    """Unnormalized log p(m | .) on 0..min(y_prev, y_cur); returns support size.

    ``lf`` is a log-factorial table covering max(y_prev, y_cur).
    """
    upper = min(y_prev, y_cur)
    ratio = math.log(alpha) - math.log(lam) - math.log1p(-alpha)
    for m in range(upper + 1):
        out[m] = m * ratio - lf[m] - lf[y_cur - m] - lf[y_prev - m]
    return upper + 1


@njit(cache=_CACHE)
def fresh_log_weight(c, a_g, b_g):
    """Log marginal of a Poisson count c under the Gamma(a_g, b_g) base measure, times c!."""
    return (a_g * math.log(b_g) - math.lgamma(a_g) + math.lgamma(c + a_g)
            - (c + a_g) * math.log(b_g + 1.0))


@njit(cache=_CACHE)
def fresh_log_weights(top, a_g, b_g):
    out = np.empty(top + 1)
    for c in range(top + 1):
        out[c] = fresh_log_weight(c, a_g, b_g)
    return out


@njit(cache=_CACHE)
def lambda_log_weights(c, log_tau, fresh, values, counts, k, out):
    """Log weights of the rate full conditional.

    ``out[0]`` is the fresh-draw component (``fresh`` from
    :func:`fresh_log_weight`), ``out[1 + j]`` the point mass at
    ``values[j]`` carrying multiplicity ``counts[j]``.
    """
    out[0] = log_tau + fresh
    for j in range(k):
        out[1 + j] = math.log(counts[j]) + c * math.log(values[j]) - values[j]
    return k + 1


@njit(cache=_CACHE)
def tau_mixture_log_weights(k, n, u, a_tau, b_tau, out):
    """Log weights of Gamma(a+k, beta) and Gamma(a+k-1, beta), beta = b - log u."""
    beta = b_tau - math.log(u)
    shape1 = a_tau + k
    shape2 = a_tau + k - 1.0
    out[0] = math.lgamma(shape1) - shape1 * math.log(beta)
    if shape2 > 0.0:
        out[1] = math.log(n) + math.lgamma(shape2) - shape2 * math.log(beta)
    else:
        out[1] = -np.inf
    return beta


# ---------------------------------------------------------------------------
# single updates
# ---------------------------------------------------------------------------

@njit(cache=_CACHE)
def draw_maturation(y_prev, y_cur, alpha, lam, lf, work, rng):
    upper = min(y_prev, y_cur)
    if upper == 0 or alpha == 0.0:
        return 0
    if alpha == 1.0:
        return upper
    size = maturation_log_weights(y_prev, y_cur, alpha, lam, lf, work)
    return categorical_from_log(work, size, rng)


@njit(cache=_CACHE)
def draw_alpha(y, m, a_alpha, b_alpha, rng):
    survived = 0
    died = 0
    for i in range(m.size):
        survived += m[i]
        died += y[i] - m[i]
    return rng.beta(a_alpha + survived, b_alpha + died)


@njit(cache=_CACHE)
def draw_tau(tau, k, n, a_tau, b_tau, work, rng):
    """West's auxiliary-variable update; returns (u, tau)."""
    u = rng.beta(tau + 1.0, n)
    # u can underflow to 0 for tiny tau; clip keeps -log u finite
    if u < 1e-300:
        u = 1e-300
    beta = tau_mixture_log_weights(k, n, u, a_tau, b_tau, work)
    if categorical_from_log(work, 2, rng) == 0:
        shape = a_tau + k
    else:
        shape = a_tau + k - 1.0
    new_tau = rng.gamma(shape, 1.0 / beta)
    if new_tau < 1e-300:
        new_tau = 1e-300
    return u, new_tau


@njit(cache=_CACHE)
def _remove(slot, nj, active, pos, k):
    nj[slot] -= 1
    if nj[slot] == 0:
        last = active[k - 1]
        p = pos[slot]
        active[p] = last
        pos[last] = p
        k -= 1
    return k


@njit(cache=_CACHE)
def _new_slot(nj, n):
    for s in range(n):
        if nj[s] == 0:
            return s
    return -1


@njit(cache=_CACHE)
def draw_lambda(i, c, tau, z, phi, nj, active, pos, k, a_g, b_g, fresh,
                work, values, counts, rng):
    """Resample epoch i's rate from the urn full conditional; returns new k."""
    k = _remove(z[i], nj, active, pos, k)
    for j in range(k):
        values[j] = phi[active[j]]
        counts[j] = nj[active[j]]
    size = lambda_log_weights(c, math.log(tau), fresh, values, counts, k, work)
    choice = categorical_from_log(work, size, rng)
    if choice == 0:
        slot = _new_slot(nj, z.size)
        phi[slot] = rng.gamma(c + a_g, 1.0 / (b_g + 1.0))
        active[k] = slot
        pos[slot] = k
        k += 1
    else:
        slot = active[choice - 1]
    nj[slot] += 1
    z[i] = slot
    return k


@njit(cache=_CACHE)
def resample_clusters(y, m, z, phi, nj, active, k, a_g, b_g, csum, rng):
    for j in range(k):
        csum[active[j]] = 0
    for i in range(z.size):
        csum[z[i]] += y[i + 1] - m[i]
    for j in range(k):
        s = active[j]
        phi[s] = rng.gamma(a_g + csum[s], 1.0 / (b_g + nj[s]))


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@njit(cache=_CACHE)
def dp_chain(y, m, z, phi, nj, active, pos, k, alpha, tau, u,
             a_alpha, b_alpha, a_tau, b_tau, a_g, b_g, fix_tau,
             n_iter, burn_in, thin, rng,
             out_alpha, out_tau, out_u, out_k, out_lam, out_m, out_iter):
    n = z.size
    ymax = 0
    for i in range(y.size):
        if y[i] > ymax:
            ymax = y[i]
    lf = log_factorials(ymax)
    fresh = fresh_log_weights(ymax, a_g, b_g)
    work_m = np.empty(ymax + 1)
    work_l = np.empty(n + 1)
    work_t = np.empty(2)
    values = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    csum = np.zeros(n, dtype=np.int64)
    r = 0
    for it in range(n_iter):
        for i in range(n):
            lam_i = phi[z[i]]
            m[i] = draw_maturation(y[i], y[i + 1], alpha, lam_i, lf, work_m, rng)
            c = y[i + 1] - m[i]
            k = draw_lambda(i, c, tau, z, phi, nj, active, pos, k,
                            a_g, b_g, fresh[c], work_l, values, counts, rng)
        alpha = draw_alpha(y, m, a_alpha, b_alpha, rng)
        if not fix_tau:
            u, tau = draw_tau(tau, k, n, a_tau, b_tau, work_t, rng)
        resample_clusters(y, m, z, phi, nj, active, k, a_g, b_g, csum, rng)
        if it >= burn_in and (it - burn_in + 1) % thin == 0 and r < out_alpha.size:
            out_alpha[r] = alpha
            out_tau[r] = tau
            out_u[r] = u
            out_k[r] = k
            for i in range(n):
                out_lam[r, i] = phi[z[i]]
                out_m[r, i] = m[i]
            out_iter[r] = it + 1
            r += 1
    return alpha, tau, u, k


@njit(cache=_CACHE)
def inar1_chain(y, m, lam, alpha, a_alpha, b_alpha, a_g, b_g,
                n_iter, burn_in, thin, rng,
                out_alpha, out_lam, out_m, out_iter):
    n = m.size
    ymax = 0
    for i in range(y.size):
        if y[i] > ymax:
            ymax = y[i]
    lf = log_factorials(ymax)
    work_m = np.empty(ymax + 1)
    r = 0
    for it in range(n_iter):
        total = 0
        for i in range(n):
            m[i] = draw_maturation(y[i], y[i + 1], alpha, lam, lf, work_m, rng)
            total += y[i + 1] - m[i]
        lam = rng.gamma(a_g + total, 1.0 / (b_g + n))
        alpha = draw_alpha(y, m, a_alpha, b_alpha, rng)
        if it >= burn_in and (it - burn_in + 1) % thin == 0 and r < out_alpha.size:
            out_alpha[r] = alpha
            out_lam[r] = lam
            for i in range(n):
                out_m[r, i] = m[i]
            out_iter[r] = it + 1
            r += 1
    return alpha, lam
