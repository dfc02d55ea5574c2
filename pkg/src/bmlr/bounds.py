"""Tail-probability bounds for the estimators and their inverses.

Each ``*_tail`` function returns the upper bound on the probability of the
corresponding deviation event.  ``epsilon_for_budget`` inverts a tail bound so
the Monte Carlo harness can test the event at a chosen nominal probability.
"""

import math

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError

DENSE_BOUNDS = ("B_max", "B_op", "B_frob", "A_max")
SPARSE_BOUNDS = ("B_sparse_frob", "A_sparse_frob", "B_sparse_support", "A_sparse_support")
ALL_BOUNDS = DENSE_BOUNDS + SPARSE_BOUNDS + ("gauss_max_tail",)


def b_max_tail(eps, sigma, n, m, p, q, T):
    """Bound on ``P[||B_hat - B*||_max > eps]``."""
    return (p * q * sigma / eps) * math.sqrt(2 * m / (T * n * math.pi)) * math.exp(
        -T * n * eps**2 / (2 * m * sigma**2)
    )


def b_op_tail(eps, sigma, n, m, p, q, T):
    """Bound on ``P[||B_hat - B*||_op > eps]``."""
    z = eps * math.sqrt(n * T) / (2 * sigma * math.sqrt(m)) - (math.sqrt(p) + math.sqrt(q)) / 2
    return 2 * math.exp(-z * z)


def b_frob_tail(eps, sigma, n, m, p, q, T):
    """Bound on ``P[||B_hat - B*||_F^2 > eps]``."""
    return 2 * math.exp(-T * n * eps / (3 * m * sigma**2) + 2 * p * q / 3)


def a_noise_scales(A_star, B_star, sigma):
    """``(mu, nu, sigma_tilde)`` entering the bounds for the clipped A estimator.

    The second-order scale of the first exponential is taken equal to
    ``sigma_tilde``.
    """
    n, m = A_star.shape
    q, p = B_star.shape
    beta = float(B_star.mean())
    mu = float(np.min(beta * (1 - A_star)))
    nu = float(np.min(A_star * beta))
    sigma_tilde = sigma * math.sqrt(1 + m / (n - 1))
    return mu, nu, sigma_tilde


def check_a_assumptions(A_star, B_star):
    n, m = A_star.shape
    if n < 2:
        raise ConfigError("A bounds need n >= 2 (leave-one-out denominator)")
    if not np.all((A_star > 0) & (A_star < 1)):
        raise ConfigError("assumption violated: 0 < A*_ik < 1 for every entry")
    if not B_star.mean() > 0:
        raise ConfigError("assumption violated: beta* (mean of B*) must be > 0")


def a_clip_term(A_star, B_star, sigma, T):
    """Epsilon-free part of the max-norm bound on the clipped A estimator."""
    n, m = A_star.shape
    q, p = B_star.shape
    mu, nu, st = a_noise_scales(A_star, B_star, sigma)
    tpq = T * p * q
    return n * m / math.sqrt(2 * math.pi * tpq) * (
        st * math.exp(-tpq * mu**2 / (2 * st**2)) / mu
        + sigma * math.exp(-tpq * nu**2 / (2 * sigma**2)) / nu
    )


def a_max_tail(eps, A_star, B_star, sigma, T):
    """Bound on ``P[||A_hat - A*||_max > 2 eps / |beta*|]``."""
    n, m = A_star.shape
    q, p = B_star.shape
    tpq = T * p * q
    lead = n * m * sigma * math.sqrt(2) / (eps * math.sqrt(tpq * math.pi))
    body = math.exp(-tpq * eps**2 / (2 * sigma**2)) + math.sqrt(m / (n - 1)) * math.exp(
        -tpq * (n - 1) * eps**2 / (2 * m * sigma**2)
    )
    return lead * body + a_clip_term(A_star, B_star, sigma, T)


def _invert_decreasing(f, budget, scale):
    lo, hi = 1e-8 * scale, scale
    while f(hi) > budget:
        hi *= 2
        if hi > 1e8 * scale:
            raise ConfigError("could not find epsilon meeting the requested budget")
    while f(lo) < budget:
        lo /= 2
        if lo < 1e-300:
            raise ConfigError("tail bound below budget for every epsilon")
    return brentq(lambda e: math.log(f(e)) - math.log(budget), lo, hi, xtol=1e-14, rtol=1e-13)


def epsilon_for_budget(bound, budget, sigma, n, m, p, q, T, A_star=None, B_star=None):
    """Smallest deviation level whose tail bound equals ``budget``."""
    if not 0 < budget < 1:
        raise ConfigError("budget must lie in (0, 1)")
    if bound == "B_frob":
        return 3 * m * sigma**2 / (T * n) * (2 * p * q / 3 + math.log(2 / budget))
    if bound == "B_op":
        a = math.sqrt(n * T) / (2 * sigma * math.sqrt(m))
        b = (math.sqrt(p) + math.sqrt(q)) / 2
        return (b + math.sqrt(math.log(2 / budget))) / a
    if bound == "B_max":
        scale = sigma * math.sqrt(m / (n * T))
        return _invert_decreasing(lambda e: b_max_tail(e, sigma, n, m, p, q, T), budget, scale)
    if bound == "A_max":
        check_a_assumptions(A_star, B_star)
        floor = a_clip_term(A_star, B_star, sigma, T)
        if floor >= budget:
            raise ConfigError(
                f"A_max bound cannot reach budget {budget}: epsilon-free term is {floor:.3g}"
            )
        scale = sigma / math.sqrt(T * p * q)
        return _invert_decreasing(lambda e: a_max_tail(e, A_star, B_star, sigma, T), budget, scale)
    raise ConfigError(f"no epsilon inversion for bound {bound!r}")


def gauss_max_bracket(n, delta):
    """Two-sided high-probability bracket for the max of n |N(0,1)| variables.

    The lower end is clamped at 0 when its log argument is negative.
    """
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    inner = math.log(n / 2) - math.log(math.log(2 / delta))
    lower = math.sqrt(math.pi / 2) * math.sqrt(inner) if inner > 0 else 0.0
    upper = math.sqrt(2) * (math.sqrt(math.log(2 * n)) + math.sqrt(math.log(2 / delta)))
    return lower, upper


def b_sparse_frob_bound(B_star, tau):
    """Squared Frobenius bound for the thresholded B estimator (strict)."""
    return 16 * np.count_nonzero(B_star) * tau**2


def a_sparse_frob_bound(A_star, B_star, tau, t_delta):
    beta = float(B_star.mean())
    if beta == 0:
        raise ConfigError("assumption violated: beta* must be nonzero")
    return np.count_nonzero(A_star) * (2 * t_delta + 3 * tau) ** 2 / beta**2


def binomial_slack(budget, trials):
    return math.sqrt(budget * (1 - budget) / trials)
