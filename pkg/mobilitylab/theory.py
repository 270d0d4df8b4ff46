"""Closed-form quantities: Λ and its inverse, the degree threshold α*, the phase constants,
Bennett's function, the half-line resolvent and the Galton–Watson robustness recursion."""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import optimize, special, stats

from .errors import DomainError, ParameterError

__all__ = (
    "B_STAR",
    "DEFAULT_KAPPA",
    "PhaseConstants",
    "alpha_of_lambda",
    "alpha_star_asymptotic",
    "alpha_star_exact",
    "bennett_h",
    "bennett_tails",
    "binomial_tail_sum",
    "gw_robust_exact",
    "halfline_resolvent",
    "lambda_of_alpha",
    "phase_constants",
    "rho_b",
    "theta_b",
)

ArrayLike = Union[float, np.ndarray]

#: Critical sparseness 1/(2 log 2 - 1).
B_STAR = 1.0 / (2.0 * math.log(2.0) - 1.0)
DEFAULT_KAPPA = 0.1
_ALPHA_MAX_XTOL = 1e-13


@dataclass(frozen=True)
class PhaseConstants:
    b: float
    b_star: float
    alpha_max: float
    lambda_max: float

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "b_star": self.b_star,
            "alpha_max": self.alpha_max,
            "lambda_max": self.lambda_max,
        }


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if value.ndim == 0 else value


def lambda_of_alpha(alpha: ArrayLike) -> ArrayLike:
    """Λ(α) = α/√(α-1) on [2, ∞)."""
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 2) or np.any(np.isnan(a)):
        raise DomainError(f"Λ is defined for alpha >= 2, got {alpha}")
    return _scalar_or_array(a / np.sqrt(a - 1.0))


def alpha_of_lambda(lam: ArrayLike) -> ArrayLike:
    """Λ⁻¹(λ) = (λ²/2)(1 + √(1 - 4/λ²)) on [2, ∞)."""
    x = np.asarray(lam, dtype=np.float64)
    if np.any(x < 2) or np.any(np.isnan(x)):
        raise DomainError(f"Λ⁻¹ is defined for lambda >= 2, got {lam}")
    # λ² - 4 factored to keep precision next to the edge
    return _scalar_or_array(0.5 * (x * x + x * np.sqrt((x - 2.0) * (x + 2.0))))


def binomial_tail_sum(k: int, trials: int, p: float) -> float:
    """log ℙ(Binom(trials, p) >= k) by compensated summation of pmf terms from ``k`` upward."""
    if k <= 0:
        return 0.0
    if k > trials:
        return -math.inf
    ks = np.arange(k, trials + 1)
    log_terms = stats.binom.logpmf(ks, trials, p)
    top = float(log_terms.max())
    if not math.isfinite(top):
        return -math.inf
    return top + math.log(math.fsum(np.exp(log_terms - top)))


def _log_upper_tail(k: int, trials: int, p: float) -> float:
    # log ℙ(B >= k)
    if k <= 0:
        return 0.0
    if k > trials:
        return -math.inf
    return float(stats.binom.logsf(k - 1, trials, p))


def alpha_star_exact(mu: float, n: int, d: float, kappa: float = DEFAULT_KAPPA) -> float:
    """α*(μ) = max(k*/d, 2 + κ).

    k* is the smallest k with ℙ(Binom(n - 1, d/n) >= k) <= n^(μ - 1).
    """
    if not 0 <= mu <= 1:
        raise ParameterError(f"mu must lie in [0, 1], got {mu}")
    if not 0 < d <= n:
        raise ParameterError(f"d must lie in (0, n], got d={d}, n={n}")
    if not 0 < kappa < 1:
        raise ParameterError(f"kappa must lie in (0, 1), got {kappa}")

    trials, p = n - 1, d / n
    log_level = (mu - 1.0) * math.log(n)
    lo, hi = 0, trials + 1
    # invariant: tail(hi) <= level, tail(lo - 1) > level
    while lo < hi:
        mid = (lo + hi) // 2
        if _log_upper_tail(mid, trials, p) <= log_level:
            hi = mid
        else:
            lo = mid + 1
    return max(lo / d, 2.0 + kappa)


def alpha_star_asymptotic(mu: float, t: float) -> float:
    """(1 - μ) t / log t, the leading order of α* for t = log(n)/d."""
    if t <= math.e:
        raise DomainError(f"asymptotic alpha* needs t > e, got {t}")
    return (1.0 - mu) * t / math.log(t)


def theta_b(alpha: ArrayLike, b: float) -> ArrayLike:
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 2):
        raise DomainError(f"theta_b is defined for alpha >= 2, got {alpha}")
    if b < 0:
        raise DomainError(f"theta_b needs b >= 0, got {b}")
    return _scalar_or_array(1.0 - b * (a * np.log(a) - a + 1.0))


def rho_b(lam: ArrayLike, b: float) -> ArrayLike:
    """Density-of-states exponent: 1 on (-2, 2), θ_b(Λ⁻¹(|λ|))₊ at and beyond ±2."""
    x = np.abs(np.asarray(lam, dtype=np.float64))
    out = np.ones_like(x)
    edge = x >= 2
    if np.any(edge):
        out[edge] = np.maximum(np.asarray(theta_b(alpha_of_lambda(x[edge]), b)), 0.0)
    return _scalar_or_array(out)


def phase_constants(b: float) -> PhaseConstants:
    if not 0 < b <= B_STAR:
        raise DomainError(f"alpha_max exists only for 0 < b <= b_star={B_STAR:.6f}, got {b}")

    def f(a: float) -> float:
        return float(theta_b(a, b))

    if f(2.0) <= 0:
        alpha_max = 2.0
    else:
        upper = 10.0 * max(1.0, 1.0 / b)
        if f(upper) > 0:
            upper *= 10.0
            if f(upper) > 0:
                raise DomainError(f"no root of theta_b in [2, {upper}] for b={b}")
        alpha_max = optimize.bisect(f, 2.0, upper, xtol=_ALPHA_MAX_XTOL, maxiter=200)
    return PhaseConstants(
        b=b, b_star=B_STAR, alpha_max=alpha_max, lambda_max=lambda_of_alpha(alpha_max)
    )


def bennett_h(a: ArrayLike) -> ArrayLike:
    x = np.asarray(a, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError(f"bennett_h needs a >= 0, got {a}")
    return _scalar_or_array((1.0 + x) * np.log1p(x) - x)


def bennett_tails(mu: float, n: int, a: float) -> Tuple[float, float]:
    """Upper-tail bound e^(-μ h(a)) and lower-tail bound e^(-μ a²/2) for Binom(n, μ/n)."""
    if not 0 <= mu <= n:
        raise DomainError(f"need 0 <= mu <= n, got mu={mu}, n={n}")
    if a < 0:
        raise DomainError(f"need a >= 0, got {a}")
    return math.exp(-mu * bennett_h(a)), math.exp(-mu * a * a / 2.0)


def halfline_resolvent(t: float, j: int) -> float:
    """Entry (1, j) of (1 - M/t)⁻¹ for the adjacency matrix M of the half-line ℕ*."""
    if t <= 2:
        raise DomainError(f"half-line resolvent needs t > 2, got {t}")
    if j < 1:
        raise DomainError(f"index j must be >= 1, got {j}")
    gamma = 2.0 / (t + math.sqrt((t - 2.0) * (t + 2.0)))
    return t * gamma**j


def gw_robust_exact(d: float, r: int) -> float:
    """Probability that the root of a Poisson(d) Galton–Watson tree is robust at depth ``r``."""
    if d <= 0:
        raise DomainError(f"offspring mean must be > 0, got {d}")
    if r < 0:
        raise DomainError(f"depth must be >= 0, got {r}")
    need = math.ceil(d / 2.0)
    p = 1.0
    for _ in range(r):
        # robust children of a vertex form a thinned Poisson(d p) count
        p = float(special.pdtrc(need - 1, d * p)) if need > 0 else 1.0
    return p
