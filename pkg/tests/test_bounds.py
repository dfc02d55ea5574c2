import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmlr.bounds import (
    a_clip_term,
    a_max_tail,
    a_noise_scales,
    a_sparse_frob_bound,
    b_frob_tail,
    b_max_tail,
    b_op_tail,
    b_sparse_frob_bound,
    binomial_slack,
    check_a_assumptions,
    epsilon_for_budget,
    gauss_max_bracket,
)
from bmlr.errors import ConfigError

DIMS = dict(sigma=0.5, n=6, m=3, p=4, q=5, T=80)


@pytest.mark.parametrize("bound, tail", [("B_max", b_max_tail), ("B_op", b_op_tail),
                                         ("B_frob", b_frob_tail)])
@pytest.mark.parametrize("budget", [0.01, 0.05, 0.3])
def test_b_inversion_hits_budget(bound, tail, budget):
    eps = epsilon_for_budget(bound, budget, **DIMS)
    assert tail(eps, **DIMS) == pytest.approx(budget, rel=1e-9)
    # a larger budget allows a smaller deviation
    assert epsilon_for_budget(bound, budget * 1.5, **DIMS) < eps


def test_b_tails_hand_values():
    s, n, m, p, q, T = 1.0, 2, 2, 1, 1, 10
    eps = 0.5
    assert b_max_tail(eps, s, n, m, p, q, T) == pytest.approx(
        2 * math.sqrt(4 / (20 * math.pi)) * math.exp(-20 * 0.25 / 4))
    z = 0.5 * math.sqrt(20) / (2 * math.sqrt(2)) - 1
    assert b_op_tail(eps, s, n, m, p, q, T) == pytest.approx(2 * math.exp(-z * z))
    assert b_frob_tail(eps, s, n, m, p, q, T) == pytest.approx(
        2 * math.exp(-20 * 0.5 / 6 + 2 / 3))


def dense_A():
    A = np.array([[0.5, 0.3, 0.2], [0.2, 0.2, 0.6], [0.4, 0.4, 0.2], [0.1, 0.6, 0.3]])
    B = np.full((2, 3), 0.8)
    return A, B


def test_a_noise_scales():
    A, B = dense_A()
    mu, nu, st_ = a_noise_scales(A, B, 2.0)
    assert mu == pytest.approx(0.8 * 0.4)
    assert nu == pytest.approx(0.8 * 0.1)
    assert st_ == pytest.approx(2.0 * math.sqrt(1 + 3 / 3))


def test_a_max_inversion():
    A, B = dense_A()
    sigma, T = 0.05, 200
    eps = epsilon_for_budget("A_max", 0.1, sigma, 4, 3, 3, 2, T, A, B)
    assert a_max_tail(eps, A, B, sigma, T) == pytest.approx(0.1, rel=1e-9)
    assert a_clip_term(A, B, sigma, T) < 0.1


def test_a_max_unreachable_budget():
    A, B = dense_A()
    with pytest.raises(ConfigError, match="epsilon-free"):
        epsilon_for_budget("A_max", 0.05, 5.0, 4, 3, 3, 2, 10, A, B)


@pytest.mark.parametrize("A, B, needle", [
    (np.array([[0.5, 0.5]]), np.ones((1, 1)), "n >= 2"),
    (np.array([[1.0, 0.0], [0.5, 0.5]]), np.ones((1, 1)), "0 < A"),
    (np.array([[0.5, 0.5], [0.5, 0.5]]), -np.ones((1, 1)), "beta"),
])
def test_a_assumptions(A, B, needle):
    with pytest.raises(ConfigError, match=needle):
        check_a_assumptions(A, B)


def test_epsilon_for_budget_errors():
    with pytest.raises(ConfigError):
        epsilon_for_budget("B_frob", 1.5, **DIMS)
    with pytest.raises(ConfigError):
        epsilon_for_budget("nope", 0.1, **DIMS)


def test_gauss_bracket():
    lo, hi = gauss_max_bracket(100, 0.1)
    assert lo == pytest.approx(math.sqrt(math.pi / 2) * math.sqrt(math.log(50) - math.log(math.log(20))))
    assert hi == pytest.approx(math.sqrt(2) * (math.sqrt(math.log(200)) + math.sqrt(math.log(20))))
    assert gauss_max_bracket(2, 0.1)[0] == 0.0
    with pytest.raises(ConfigError):
        gauss_max_bracket(10, 0.0)


@given(st.integers(1, 10**6), st.floats(1e-6, 0.99))
@settings(max_examples=100, deadline=None)
def test_gauss_bracket_ordered(n, delta):
    lo, hi = gauss_max_bracket(n, delta)
    assert 0 <= lo < hi


def test_sparse_bounds():
    B = np.array([[0.0, 1.0], [2.0, 0.0]])
    assert b_sparse_frob_bound(B, 0.1) == pytest.approx(16 * 2 * 0.01)
    A = np.array([[1.0, 0.0], [0.5, 0.5]])
    Bs = np.full((2, 2), 2.0)
    assert a_sparse_frob_bound(A, Bs, 0.1, 0.05) == pytest.approx(3 * (0.1 + 0.3) ** 2 / 4)
    with pytest.raises(ConfigError):
        a_sparse_frob_bound(A, np.zeros((2, 2)), 0.1, 0.05)


def test_binomial_slack():
    assert binomial_slack(0.1, 2000) == pytest.approx(math.sqrt(0.09 / 2000))
    assert binomial_slack(0.0, 10) == 0.0
