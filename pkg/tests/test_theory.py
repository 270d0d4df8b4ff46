import math

import numpy as np
import pytest
from scipy import stats

from mobilitylab.errors import DomainError, ParameterError
from mobilitylab.theory import (
    B_STAR,
    alpha_of_lambda,
    alpha_star_asymptotic,
    alpha_star_exact,
    bennett_h,
    bennett_tails,
    binomial_tail_sum,
    gw_robust_exact,
    halfline_resolvent,
    lambda_of_alpha,
    phase_constants,
    rho_b,
    theta_b,
)


def test_lambda_of_alpha_values():
    assert lambda_of_alpha(2.0) == 2.0
    assert lambda_of_alpha(5.0) == 2.5
    assert np.allclose(lambda_of_alpha(np.array([2.0, 5.0, 10.0])), [2.0, 2.5, 10 / 3])


@pytest.mark.parametrize("alpha", [2.0, 2.001, 3.0, 7.5, 40.0, 1e6])
def test_alpha_of_lambda_inverts(alpha):
    assert alpha_of_lambda(lambda_of_alpha(alpha)) == pytest.approx(alpha, rel=1e-12)


@pytest.mark.parametrize("fn, arg", [(lambda_of_alpha, 1.9), (alpha_of_lambda, 1.0)])
def test_lambda_domain(fn, arg):
    with pytest.raises(DomainError):
        fn(arg)


def test_lambda_is_increasing():
    alphas = np.linspace(2, 30, 200)
    assert np.all(np.diff(lambda_of_alpha(alphas)) > 0)


def test_b_star():
    assert B_STAR == pytest.approx(1 / (2 * math.log(2) - 1))
    assert B_STAR == pytest.approx(2.5886994496, rel=1e-9)
    assert theta_b(2.0, B_STAR) == pytest.approx(0.0, abs=1e-14)


def test_phase_constants_closed_form():
    # theta_1 vanishes where a log a = a
    constants = phase_constants(1.0)
    assert constants.alpha_max == pytest.approx(math.e, abs=1e-10)
    assert constants.lambda_max == pytest.approx(math.e / math.sqrt(math.e - 1), abs=1e-10)
    assert constants.to_dict()["b_star"] == B_STAR


def test_phase_constants_edge_of_range():
    assert phase_constants(B_STAR).alpha_max == pytest.approx(2.0, abs=1e-9)
    small = phase_constants(0.05)
    assert theta_b(small.alpha_max, 0.05) == pytest.approx(0.0, abs=1e-9)
    for bad in (0.0, -1.0, B_STAR + 0.01):
        with pytest.raises(DomainError):
            phase_constants(bad)


def test_rho_b():
    assert rho_b(0.0, 1.0) == 1.0
    assert rho_b(1.99, 1.0) == 1.0
    lam_max = phase_constants(1.0).lambda_max
    assert rho_b(lam_max, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert rho_b(-lam_max - 1.0, 1.0) == 0.0
    assert rho_b(2.0, 1.0) == pytest.approx(theta_b(2.0, 1.0))
    values = rho_b(np.array([-3.0, 0.0, 2.2]), 0.5)
    assert values.shape == (3,)
    assert values[1] == 1.0


def test_theta_b_domain():
    with pytest.raises(DomainError):
        theta_b(1.5, 1.0)
    with pytest.raises(DomainError):
        theta_b(3.0, -0.1)


def test_bennett():
    assert bennett_h(0.0) == 0.0
    assert bennett_h(1.0) == pytest.approx(2 * math.log(2) - 1)
    upper, lower = bennett_tails(4.0, 100, 0.5)
    assert upper == pytest.approx(math.exp(-4.0 * (1.5 * math.log(1.5) - 0.5)))
    assert lower == pytest.approx(math.exp(-0.5))
    with pytest.raises(DomainError):
        bennett_h(-0.1)
    with pytest.raises(DomainError):
        bennett_tails(200.0, 100, 0.5)


def test_bennett_bounds_hold_for_binomial():
    n, mu, a = 2000, 5.0, 0.8
    tail = stats.binom.sf(math.ceil(mu * (1 + a)) - 1, n, mu / n)
    upper, _ = bennett_tails(mu, n, a)
    assert tail <= upper


@pytest.mark.parametrize("t", [2.5, 3.0, 6.0])
def test_halfline_resolvent_matches_truncation(t):
    size = 300
    M = np.diag(np.ones(size - 1), 1) + np.diag(np.ones(size - 1), -1)
    inverse = np.linalg.inv(np.eye(size) - M / t)
    for j in (1, 2, 5):
        assert halfline_resolvent(t, j) == pytest.approx(inverse[0, j - 1], rel=1e-10)


def test_halfline_resolvent_domain():
    with pytest.raises(DomainError):
        halfline_resolvent(2.0, 1)
    with pytest.raises(DomainError):
        halfline_resolvent(3.0, 0)


def _alpha_star_by_scan(mu, n, d, kappa):
    level = n ** (mu - 1)
    k = 0
    while stats.binom.sf(k - 1, n - 1, d / n) > level:
        k += 1
    return max(k / d, 2 + kappa)


@pytest.mark.parametrize("mu, n, d", [(0.05, 1000, 2.0), (0.3, 5000, 3.0), (0.0, 200, 1.0)])
def test_alpha_star_exact_matches_scan(mu, n, d):
    assert alpha_star_exact(mu, n, d, 0.1) == pytest.approx(_alpha_star_by_scan(mu, n, d, 0.1))


def test_alpha_star_exact_floor_and_monotone():
    assert alpha_star_exact(1.0, 1000, 5.0, 0.1) == 2.1
    values = [alpha_star_exact(mu, 10**5, 2.0) for mu in (0.0, 0.2, 0.4, 0.6)]
    assert values == sorted(values, reverse=True)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mu": -0.1, "n": 100, "d": 2.0},
        {"mu": 0.1, "n": 100, "d": 0.0},
        {"mu": 0.1, "n": 100, "d": 2.0, "kappa": 1.0},
    ],
)
def test_alpha_star_exact_parameters(kwargs):
    with pytest.raises(ParameterError):
        alpha_star_exact(**kwargs)


def test_alpha_star_asymptotic_tracks_exact():
    n, d, mu = 10**8, 1.5, 0.1
    t = math.log(n) / d
    exact = alpha_star_exact(mu, n, d)
    ratio = exact / alpha_star_asymptotic(mu, t)
    assert 0.5 < ratio < 3.0
    with pytest.raises(DomainError):
        alpha_star_asymptotic(mu, 2.0)


def test_binomial_tail_sum_matches_logsf():
    for k in (0, 3, 10, 30):
        expected = stats.binom.logsf(k - 1, 999, 0.002) if k > 0 else 0.0
        assert binomial_tail_sum(k, 999, 0.002) == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert binomial_tail_sum(1000, 999, 0.002) == -math.inf


def test_gw_robust_exact():
    assert gw_robust_exact(3.0, 0) == 1.0
    assert gw_robust_exact(1.0, 1) == pytest.approx(1 - math.exp(-1))
    p1 = 1 - math.exp(-1)
    assert gw_robust_exact(1.0, 2) == pytest.approx(1 - math.exp(-p1))
    assert gw_robust_exact(20.0, 5) > 0.99
    with pytest.raises(DomainError):
        gw_robust_exact(0.0, 2)


def test_reference_values():
    assert lambda_of_alpha(math.e) == pytest.approx(2.0737, abs=5e-5)
    assert rho_b(2.0, 1.0) == pytest.approx(2 - 2 * math.log(2), abs=1e-12)
    assert bennett_h(1.0) == pytest.approx(2 * math.log(2) - 1, abs=1e-12)
    t = 3.0
    M = np.diag(np.ones(99), 1) + np.diag(np.ones(99), -1)
    # truncated Neumann series of (1 - M/t)^-1
    term, series = np.eye(100), np.eye(100)
    for _ in range(120):
        term = term @ M / t
        series += term
    for j in range(1, 21):
        assert halfline_resolvent(t, j) == pytest.approx(series[0, j - 1], abs=1e-10)
