"""Special functions: log-gamma, digamma and its inverse, Ei on the negative axis."""

import logging
import math

import numpy as np
from scipy import special

from src.tools.shared_libraries.errors import DomainError, NumericError


logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061

# Asymptotic series of digamma beyond log(x) - 1/(2x), in powers of 1/x^2:
# B_2k / (2k), k = 1..7.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# Asymptotic series of trigamma beyond 1/x + 1/(2x^2), coefficient of x^-(2k+1).
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
)

_SHIFT = 6.0
_EI_SERIES_TERMS = 60
_EI_CF_MAX_ITER = 500
_TINY = 1e-300
# Beyond this Psi(x) = log(x - 1/2) + O(x^-2) fixes x = e^y + 1/2 to double precision.
_ASYMPTOTIC_Y = 30.0


def log_gamma(x: float | np.ndarray) -> float | np.ndarray:
    """log Gamma(x) for positive x.

    Args:
        x: Positive argument, scalar or array.

    Returns:
        log Gamma(x), same shape as x.

    Raises:
        DomainError: Some x <= 0.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f'log_gamma requires x > 0, got {x}')
    result = special.gammaln(arr)
    return float(result) if np.ndim(result) == 0 else result


def _digamma_scalar(x: float) -> float:
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + coef
    return acc + math.log(x) - 0.5 / x - series * inv2


def _trigamma_scalar(x: float) -> float:
    acc = 0.0
    while x < _SHIFT:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for coef in reversed(_TRIGAMMA_SERIES):
        series = series * inv2 + coef
    return acc + inv + 0.5 * inv2 + series * inv2 * inv


def digamma(x: float | np.ndarray) -> float | np.ndarray:
    """Digamma function Psi(x) = d/dx log Gamma(x) for positive x.

    Shifts the argument to x >= 6 with Psi(x) = Psi(x + 1) - 1/x and then
    sums the asymptotic series.

    Args:
        x: Positive argument, scalar or array.

    Returns:
        Psi(x), same shape as x.

    Raises:
        DomainError: Some x <= 0.
    """
    if np.ndim(x) == 0:
        xf = float(x)
        if not xf > 0:
            raise DomainError(f'digamma requires x > 0, got {x}')
        return _digamma_scalar(xf)

    arr = np.array(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError('digamma requires x > 0 for every element')
    acc = np.zeros_like(arr)
    while True:
        small = arr < _SHIFT
        if not small.any():
            break
        acc[small] -= 1.0 / arr[small]
        arr[small] += 1.0
    inv2 = 1.0 / (arr * arr)
    series = np.zeros_like(arr)
    for coef in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + coef
    return acc + np.log(arr) - 0.5 / arr - series * inv2


def trigamma(x: float) -> float:
    """Psi'(x) for positive x; used as the Newton slope when inverting digamma."""
    xf = float(x)
    if not xf > 0:
        raise DomainError(f'trigamma requires x > 0, got {x}')
    return _trigamma_scalar(xf)


def inverse_digamma(y: float, tol: float = 1e-13, max_iter: int = 100) -> float:
    """Positive x with Psi(x) = y.

    Safeguarded Newton iteration inside a bracket that is kept valid at
    every step; a step leaving the bracket is replaced by bisection.

    Args:
        y: Finite target value.
        tol: Convergence tolerance on |Psi(x) - y| relative to max(1, |y|).
        max_iter: Iteration cap.

    Returns:
        x > 0 with Psi(x) = y.

    Raises:
        DomainError: y is not finite.
        NumericError: The solution exceeds the largest float (y above about
            709.78) or the iteration did not converge.
    """
    y = float(y)
    if not math.isfinite(y):
        raise DomainError(f'inverse_digamma requires a finite value, got {y}')
    if y >= _ASYMPTOTIC_Y:
        try:
            return math.exp(y) + 0.5
        except OverflowError as exc:
            raise NumericError(f'inverse_digamma({y}) is not representable as a float') from exc

    x = math.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + EULER_GAMMA)
    lo, hi = x, x
    while _digamma_scalar(lo) > y:
        lo *= 0.5
    while _digamma_scalar(hi) < y:
        hi *= 2.0

    scale = max(1.0, abs(y))
    for iteration in range(max_iter):
        residual = _digamma_scalar(x) - y
        if abs(residual) <= tol * scale:
            logger.debug(f'inverse_digamma({y}) converged in {iteration} steps')
            return x
        if residual > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        candidate = x - residual / _trigamma_scalar(x)
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if candidate == x:
            return x
        x = candidate

    raise NumericError(f'inverse_digamma({y}) did not converge in {max_iter} iterations')


def _e1_series(z: float) -> float:
    # E1(z) = -gamma - log z - sum_{k>=1} (-z)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, _EI_SERIES_TERMS):
        term *= -z / k
        contribution = term / k
        total += contribution
        if abs(contribution) < 1e-17 * max(1.0, abs(total)):
            break
    return -EULER_GAMMA - math.log(z) - total


def _e1_continued_fraction(z: float) -> float:
    # Modified Lentz evaluation of E1(z) e^z.
    b = z + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _EI_CF_MAX_ITER):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * math.exp(-z)
    raise NumericError(f'Ei continued fraction did not converge at {-z}')


def expint_ei(x: float) -> float:
    """Exponential integral Ei(x) = -integral_{-x}^inf e^{-t}/t dt for x < 0.

    Args:
        x: Negative argument.

    Returns:
        Ei(x).

    Raises:
        DomainError: x >= 0.
    """
    x = float(x)
    if not x < 0:
        raise DomainError(f'expint_ei is only defined here for x < 0, got {x}')
    z = -x
    if z >= 1.0:
        return -_e1_continued_fraction(z)
    return -_e1_series(z)


def abslog_gumbel_mean() -> float:
    """E|W| for a standard Gumbel W, equal to gamma - 2 Ei(-1)."""
    return EULER_GAMMA - 2.0 * expint_ei(-1.0)


def abslog_gumbel_variance() -> float:
    """Var|W| for a standard Gumbel W, equal to pi^2/6 + 4 (gamma - Ei(-1)) Ei(-1)."""
    ei = expint_ei(-1.0)
    return math.pi ** 2 / 6.0 + 4.0 * (EULER_GAMMA - ei) * ei
