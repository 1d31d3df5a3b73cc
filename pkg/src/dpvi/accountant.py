"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

RDP of the subsampled Gaussian follows Mironov, Talwar and Zhang (2019):
an exact binomial sum for integer orders and the two-sided series for
fractional ones, both in the log domain. Conversion to ``(eps, delta)`` uses
``eps = T * rdp(alpha) + log(1/delta) / (alpha - 1)`` minimized over the order
grid, which is looser (larger eps) than a Fourier/PLD accountant.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import special

from dpvi.privacy import PrivacySpend

DEFAULT_ORDERS = tuple(
    [1.0 + x / 10.0 for x in range(1, 100)] + [float(a) for a in range(12, 64)] + [64.0, 128.0, 256.0, 512.0]
)

_MAX_FRAC_TERMS = 100_000


class CalibrationError(RuntimeError):
    pass


def _log_add(x: float, y: float) -> float:
    a, b = min(x, y), max(x, y)
    if a == -math.inf:
        return b
    return b + math.log1p(math.exp(a - b))


def _log_comb(n: float, k: float) -> float:
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_erfc(x: float) -> float:
    return float(np.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0)))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    log_a = -math.inf
    logq, log1mq = math.log(q), math.log1p(-q)
    for i in range(alpha + 1):
        term = _log_comb(alpha, i) + i * logq + (alpha - i) * log1mq + (i * i - i) / (2 * sigma**2)
        log_a = _log_add(log_a, term)
    return log_a


def _log_sub(x: float, y: float) -> float:
    """``log(exp(x) - exp(y))`` for ``x >= y``."""
    if y == -math.inf:
        return x
    if x <= y:
        # cancellation down to (or below) zero: the remaining mass is negligible
        return -math.inf
    return x + math.log1p(-math.exp(y - x))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # Series for non-integer orders. binom(alpha, i) changes sign once i
    # exceeds alpha, so the two partial sums track subtraction as well.
    log_a0 = log_a1 = -math.inf
    z0 = sigma**2 * math.log(1 / q - 1) + 0.5
    logq, log1mq = math.log(q), math.log1p(-q)
    for i in range(_MAX_FRAC_TERMS):
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i
        t0 = log_coef + i * logq + j * log1mq
        t1 = log_coef + j * logq + i * log1mq
        e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma))
        e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma))
        s0 = t0 + (i * i - i) / (2 * sigma**2) + e0
        s1 = t1 + (j * j - j) / (2 * sigma**2) + e1
        if coef > 0:
            log_a0 = _log_add(log_a0, s0)
            log_a1 = _log_add(log_a1, s1)
        else:
            log_a0 = _log_sub(log_a0, s0)
            log_a1 = _log_sub(log_a1, s1)
        if max(s0, s1) < -30:
            return _log_add(log_a0, log_a1)
    raise ArithmeticError(f"fractional RDP series did not converge at order {alpha}")


@functools.lru_cache(maxsize=8192)
def rdp_subsampled_gaussian(q: float, sigma: float, alpha: float) -> float:
    """RDP of one Poisson-subsampled Gaussian release at order ``alpha``."""
    if sigma == 0:
        return math.inf
    if q == 0:
        return 0.0
    if q == 1.0:
        return alpha / (2 * sigma**2)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return log_a / (alpha - 1)


def account_privacy(sigma_dp: float, q: float, iterations: int, delta: float, orders=DEFAULT_ORDERS) -> PrivacySpend:
    """``(eps, delta)`` after ``iterations`` subsampled Gaussian releases.

    ``sigma_dp == 0`` is reported as ``eps = inf`` rather than raising.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 < q <= 1:
        raise ValueError("subsample ratio must lie in (0, 1]")
    if sigma_dp < 0:
        raise ValueError("noise multiplier must be non-negative")
    if sigma_dp == 0:
        return PrivacySpend(math.inf, delta)
    best, best_order = math.inf, float("nan")
    log_inv_delta = math.log(1 / delta)
    for alpha in orders:
        eps = iterations * rdp_subsampled_gaussian(q, sigma_dp, alpha) + log_inv_delta / (alpha - 1)
        if eps < best:
            best, best_order = eps, alpha
    return PrivacySpend(float(max(best, 0.0)), delta, float(best_order))


def calibrate_noise(target_epsilon: float, delta: float, q: float, iterations: int, max_sigma: float = 1e6) -> float:
    """Smallest-ish noise multiplier meeting ``target_epsilon``.

    Bisects until the achieved epsilon lies in ``[0.99 * target, target]``.
    """
    if target_epsilon <= 0:
        raise ValueError("target epsilon must be positive")

    def eps(sigma):
        return account_privacy(sigma, q, iterations, delta).epsilon

    if eps(max_sigma) > target_epsilon:
        raise CalibrationError(f"epsilon {target_epsilon} unattainable with noise multiplier <= {max_sigma:g}")
    lo, hi = 0.0, 1.0
    while eps(hi) > target_epsilon:
        lo, hi = hi, min(2 * hi, max_sigma)
    for _ in range(200):
        e = eps(hi)
        if 0.99 * target_epsilon <= e <= target_epsilon:
            return hi
        mid = 0.5 * (lo + hi)
        if eps(mid) > target_epsilon:
            lo = mid
        else:
            hi = mid
    return hi
