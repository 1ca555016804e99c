"""Scalar special functions: normal cdf/quantile and the regularized incomplete gamma.

Only the standard library is used so that every routine is deterministic and
independent of the scipy build.
"""
import math

import numpy as np

__all__ = [
    "normal_cdf",
    "normal_sf",
    "normal_quantile",
    "gammainc_lower",
    "log_gammainc_lower",
    "trunc_gamma_cdf",
    "trunc_gamma_ppf",
    "trunc_gamma_mean",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile (relative error ~1e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x):
    return 0.5 * math.erfc(x / _SQRT2)


def _acklam(u):
    if u < _P_LOW:
        t = math.sqrt(-2.0 * math.log(u))
        return ((((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5])
                / ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0))
    if u > 1.0 - _P_LOW:
        t = math.sqrt(-2.0 * math.log1p(-u))
        return -((((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5])
                 / ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0))
    t = u - 0.5
    r = t * t
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * t / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def normal_quantile(u):
    """Inverse of the standard normal cdf.

    Rational starting value refined by Halley steps against an erfc-based cdf;
    the residual ``|Phi(x) - u|`` is below 1e-12 on the whole open interval.

    Raises
    ------
    ValueError
        If ``u`` is not strictly inside (0, 1).
    """
    u = float(u)
    if not (0.0 < u < 1.0):
        raise ValueError(f"normal_quantile: u={u!r} outside (0, 1)")
    if u == 0.5:
        return 0.0
    x = _acklam(u)
    for _ in range(3):
        # residual evaluated in the tail that keeps full precision
        if u > 0.5:
            e = (1.0 - u) - normal_sf(x)
        else:
            e = normal_cdf(x) - u
        if e == 0.0:
            break
        w = e * _SQRT2PI * math.exp(0.5 * x * x)
        step = w / (1.0 + 0.5 * x * w)
        x -= step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    return x


# --------------------------------------------------------------------------
# regularized lower incomplete gamma P(a, x)

_EPS = 1e-16
_MAXIT = 2000


def _series_sum(a, x):
    # sum_{n>=0} x^n / ((a+1)...(a+n)); P(a,x) = x^a e^-x / Gamma(a+1) * sum
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total


def _log_cf_upper(a, x):
    # log Q(a, x) via the Legendre continued fraction (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return a * math.log(x) - x - math.lgamma(a) + math.log(h)


def log_gammainc_lower(a, x):
    """``log P(a, x)`` for ``a > 0`` and ``x >= 0``; ``-inf`` at ``x = 0``."""
    if a <= 0.0:
        raise ValueError("shape must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return a * math.log(x) - x - math.lgamma(a + 1.0) + math.log(_series_sum(a, x))
    return math.log1p(-math.exp(_log_cf_upper(a, x)))


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``."""
    return math.exp(log_gammainc_lower(a, x))


# --------------------------------------------------------------------------
# Gamma(shape, rate) truncated to [0, 1]

# below this rate the law equals its Beta(shape, 1) limit up to O(rate)
_RATE_EPS = 1e-12

def trunc_gamma_cdf(x, shape, rate):
    """Cdf on [0, 1] of Gamma(shape, rate) conditioned on the unit interval."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if rate < _RATE_EPS:
        return x ** shape
    return math.exp(log_gammainc_lower(shape, rate * x) - log_gammainc_lower(shape, rate))


def trunc_gamma_ppf(u, shape, rate, tol=1e-14):
    """Inverse of :func:`trunc_gamma_cdf` by safeguarded Newton in log space."""
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must lie in [0, 1]")
    if u == 0.0:
        return 0.0
    if u == 1.0:
        return 1.0
    if rate < _RATE_EPS:
        return u ** (1.0 / shape)
    log_target = math.log(u) + log_gammainc_lower(shape, rate)
    lgam = math.lgamma(shape)
    lo, hi = 0.0, 1.0
    # start from the small-x power law P(a, bx) ~ (bx)^a / Gamma(a+1)
    x = min(0.5, math.exp((log_target + math.lgamma(shape + 1.0)) / shape) / rate)
    if not (0.0 < x < 1.0):
        x = 0.5
    for _ in range(200):
        lp = log_gammainc_lower(shape, rate * x)
        h = lp - log_target
        if h > 0.0:
            hi = x
        else:
            lo = x
        # d/dx log P(a, bx) = b (bx)^(a-1) e^(-bx) / (Gamma(a) P)
        log_dens = math.log(rate) + (shape - 1.0) * math.log(rate * x) - rate * x - lgam
        slope = math.exp(log_dens - lp)
        x_new = x - h / slope if slope > 0.0 and math.isfinite(slope) else -1.0
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(x_new, 1e-300) or hi - lo <= tol * hi:
            return x_new
        x = x_new
    return x


def trunc_gamma_mean(shape, rate):
    """Mean of Gamma(shape, rate) truncated to [0, 1].

    Equals ``int_0^1 x^a e^{-bx} dx / int_0^1 x^{a-1} e^{-bx} dx`` with
    ``a = shape`` and ``b = rate``. For small rates the ratio is taken
    directly from the power series so ``rate = 0`` is exact.
    """
    if shape <= 0.0:
        raise ValueError("shape must be positive")
    if rate < 0.0:
        raise ValueError("rate must be nonnegative")
    if rate == 0.0:
        return shape / (shape + 1.0)
    if rate < shape + 1.0:
        # (a/b) P(a+1,b)/P(a,b) with the common prefactor cancelled
        return shape / (shape + 1.0) * _series_sum(shape + 1.0, rate) / _series_sum(shape, rate)
    log_ratio = log_gammainc_lower(shape + 1.0, rate) - log_gammainc_lower(shape, rate)
    return shape / rate * math.exp(log_ratio)


normal_quantile_vec = np.vectorize(normal_quantile, otypes=[float])
