"""Moment functions, their monotone inversion, and moment estimators.

A moment estimator solves m(theta) = gbar where m(theta) = E_theta g(X)
and gbar is the sample mean of g. For an increasing m the solution is
inf{theta : m(theta) >= t}; for a decreasing m it is
inf{theta : m(theta) <= t}.
"""

import logging
import math
from collections.abc import Callable
from typing import NamedTuple

import numpy as np

from observability import trace_span
from src.tools.distribution_tools.families.families import ExpFamily, Family, theta_grid
from src.tools.math_tools.specfun.specfun import (
    EULER_GAMMA,
    abslog_gumbel_mean,
    digamma,
    inverse_digamma,
    log_gamma,
    trigamma,
)
from src.tools.shared_libraries.errors import (
    CatalogError,
    ConsistencyError,
    DegenerateParametrizationError,
    DomainError,
    EstimationInfeasibleError,
    InvalidInputError,
    NumericError,
    OutOfRangeError,
)
from src.tools.shared_libraries.helpers import QUAD_ACCEPT, central_difference, integrate

from .models import Direction, Estimate, MomentSpec


logger = logging.getLogger(__name__)

INVERSION_TOL = 1e-9
BISECTION_WIDTH = 1e-12
DETECTION_POINTS = 50
_MAX_EXPANSIONS = 200
_MAX_BISECTIONS = 400

SELECTORS = ('mean', 'log', 'T', 'k-th:<k>', 'abs-log', 'neg-log')
_LOG_SELECTORS = frozenset({'log', 'abs-log', 'neg-log'})
_LOG_4 = 2.0 * math.log(2.0)


class _ClosedForm(NamedTuple):
    m: Callable[[float], float]
    m_prime: Callable[[float], float]
    inverse: Callable[[float], float] | None
    m_range: tuple[float, float]
    direction: Direction


def parse_selector(selector: str) -> tuple[str, int | None]:
    """Split a selector such as "k-th:3" into its kind and order.

    Raises:
        CatalogError: Unknown selector or malformed order.
    """
    if selector in ('mean', 'log', 'T', 'abs-log', 'neg-log'):
        return selector, None
    if selector.startswith('k-th:'):
        try:
            k = int(selector.removeprefix('k-th:'))
        except ValueError:
            k = 0
        if k >= 1:
            return 'k-th', k
    raise CatalogError(f"unknown moment selector '{selector}'; known: {', '.join(SELECTORS)}")


def _statistic(family: Family, kind: str, k: int | None) -> Callable[[np.ndarray], np.ndarray]:
    if kind in _LOG_SELECTORS and family.sample_space.lower < 0.0:
        raise DomainError(f"selector '{kind}' needs a positive sample space; {family.name} is not")
    if kind == 'mean':
        return lambda x: x
    if kind == 'log':
        return np.log
    if kind == 'abs-log':
        return lambda x: np.abs(np.log(x))
    if kind == 'neg-log':
        return lambda x: -np.log(x)
    if kind == 'k-th':
        return lambda x: x ** k
    if not isinstance(family, ExpFamily):
        raise CatalogError(f"selector 'T' needs an exponential family; {family.name} is not one")
    return family.big_t


def _uniform_power(k: int) -> _ClosedForm:
    return _ClosedForm(
        m=lambda t: t ** k / (k + 1.0),
        m_prime=lambda t: k * t ** (k - 1) / (k + 1.0),
        inverse=lambda s: ((k + 1.0) * s) ** (1.0 / k),
        m_range=(0.0, math.inf),
        direction='increasing',
    )


def _closed_form(family: Family, kind: str, k: int | None) -> _ClosedForm | None:
    """Registered closed-form moment function, or None for quadrature."""
    name = family.name
    params = family.fixed_params
    inf = math.inf

    if name == 'uniform_scale':
        if kind == 'mean':
            return _ClosedForm(lambda t: 0.5 * t, lambda t: 0.5, lambda s: 2.0 * s, (0.0, inf), 'increasing')
        if kind == 'log':
            return _ClosedForm(
                lambda t: math.log(t) - 1.0, lambda t: 1.0 / t, lambda s: math.exp(s + 1.0),
                (-inf, inf), 'increasing',
            )
        if kind == 'k-th':
            return _uniform_power(k)

    if name == 'uniform_sym':
        if kind == 'mean' or (kind == 'k-th' and k % 2 == 1):
            raise DomainError(f"uniform_sym: '{kind}' moment is zero for every theta and cannot identify it")
        if kind == 'k-th':
            return _uniform_power(k)

    if name == 'gamma_scale':
        alpha = params['alpha']
        if kind in ('mean', 'T'):
            return _ClosedForm(lambda t: alpha * t, lambda t: alpha, lambda s: s / alpha, (0.0, inf), 'increasing')
        if kind == 'k-th':
            const = math.exp(log_gamma(alpha + k) - log_gamma(alpha))
            return _ClosedForm(
                lambda t: const * t ** k,
                lambda t: k * const * t ** (k - 1),
                lambda s: (s / const) ** (1.0 / k),
                (0.0, inf), 'increasing',
            )
        if kind == 'log':
            psi = digamma(alpha)
            return _ClosedForm(
                lambda t: psi + math.log(t), lambda t: 1.0 / t, lambda s: math.exp(s - psi),
                (-inf, inf), 'increasing',
            )

    if name == 'gamma_shape':
        lam = params['lam']
        log_lam = math.log(lam)
        if kind in ('log', 'T'):
            return _ClosedForm(
                lambda a: digamma(a) + log_lam, trigamma, lambda s: inverse_digamma(s - log_lam),
                (-inf, inf), 'increasing',
            )
        if kind == 'mean':
            return _ClosedForm(lambda a: a * lam, lambda a: lam, lambda s: s / lam, (0.0, inf), 'increasing')
        if kind == 'k-th':
            def m(a: float) -> float:
                return lam ** k * math.exp(log_gamma(a + k) - log_gamma(a))

            return _ClosedForm(
                m, lambda a: m(a) * (digamma(a + k) - digamma(a)), None, (0.0, inf), 'increasing',
            )

    if name == 'exp_logistic':
        if kind == 'T':
            return _ClosedForm(
                lambda t: 1.0 / t, lambda t: -1.0 / (t * t), lambda s: 1.0 / s, (0.0, inf), 'decreasing',
            )
        if kind == 'mean':
            return _ClosedForm(
                lambda t: digamma(t) + EULER_GAMMA, trigamma,
                lambda s: inverse_digamma(s - EULER_GAMMA), (-inf, inf), 'increasing',
            )

    if name == 'levy_type':
        if kind in ('mean', 'k-th'):
            raise DomainError(f"levy_type: the '{kind}' moment is infinite")
        if kind == 'T':
            return _ClosedForm(
                lambda t: 0.5 / t, lambda t: -0.5 / (t * t), lambda s: 0.5 / s, (0.0, inf), 'decreasing',
            )
        if kind == 'log':
            shift = EULER_GAMMA + _LOG_4
            return _ClosedForm(
                lambda t: math.log(t) + shift, lambda t: 1.0 / t, lambda s: math.exp(s - shift),
                (-inf, inf), 'increasing',
            )

    if name == 'logistic_loc' and kind == 'mean':
        return _ClosedForm(lambda t: t, lambda t: 1.0, lambda s: s, (-inf, inf), 'increasing')

    if name == 'weibull_theta':
        if kind == 'abs-log':
            mu = abslog_gumbel_mean()
            return _ClosedForm(lambda t: mu * t, lambda t: mu, lambda s: s / mu, (0.0, inf), 'increasing')
        if kind == 'neg-log':
            return _ClosedForm(
                lambda t: EULER_GAMMA * t, lambda t: EULER_GAMMA, lambda s: s / EULER_GAMMA,
                (0.0, inf), 'increasing',
            )
        if kind == 'log':
            return _ClosedForm(
                lambda t: -EULER_GAMMA * t, lambda t: -EULER_GAMMA, lambda s: -s / EULER_GAMMA,
                (-inf, 0.0), 'decreasing',
            )

    if name == 'gumbel_std' and kind == 'mean':
        return _ClosedForm(
            lambda t: EULER_GAMMA * t, lambda t: EULER_GAMMA, lambda s: s / EULER_GAMMA,
            (0.0, inf), 'increasing',
        )

    return None


def _quadrature_moment(family: Family, g: Callable[[np.ndarray], np.ndarray]) -> Callable[[float], float]:
    def m(theta: float) -> float:
        support = family.support(theta)

        def integrand(x: float) -> float:
            density = family.density(x, theta)
            if density == 0.0:
                return 0.0
            return float(g(np.asarray(x))) * density

        return integrate(integrand, support.lower, support.upper)

    return m


def detect_direction(
    family: Family,
    m_fn: Callable[[float], float],
    tol: float = INVERSION_TOL,
    size: int = DETECTION_POINTS,
) -> Direction:
    """Direction of m from the signs of its first differences on a grid.

    Raises:
        DomainError: m is constant or not monotone on the grid.
    """
    values = np.array([m_fn(float(t)) for t in theta_grid(family, size)])
    if not np.all(np.isfinite(values)):
        raise DomainError(f'{family.name}: moment function is not finite on the parameter grid')
    steps = np.diff(values)
    slack = tol * np.maximum(1.0, np.abs(values[1:]))
    if np.all(steps >= -slack) and np.any(steps > slack):
        return 'increasing'
    if np.all(steps <= slack) and np.any(steps < -slack):
        return 'decreasing'
    raise DomainError(f'{family.name}: moment function is not monotone in theta on {family.typical_range}')


def make_spec(
    family: Family,
    selector: str | Callable[[np.ndarray], np.ndarray] = 'mean',
    *,
    closed_form: bool = True,
) -> MomentSpec:
    """Build the moment specification for a family and a statistic g.

    Args:
        family: The distribution family.
        selector: One of mean, log, T, k-th:<k>, abs-log, neg-log, or a
            vectorized callable g.
        closed_form: Use registered closed-form inverses. With False the
            registered m is still used but inverted numerically.

    Returns:
        An immutable MomentSpec.

    Raises:
        CatalogError: Unknown selector, or T on a non-exponential family.
        DomainError: The moment is infinite or does not identify theta.
        ConsistencyError: A registered direction disagrees with the grid.
    """
    if callable(selector):
        label, g, form = 'custom', selector, None
    else:
        kind, k = parse_selector(selector)
        label, g = selector, _statistic(family, kind, k)
        form = _closed_form(family, kind, k)

    if form is None:
        m_fn = _quadrature_moment(family, g)
        direction = detect_direction(family, m_fn, tol=QUAD_ACCEPT)
        spec = MomentSpec(
            family=family, selector=label, g=g, m_fn=m_fn,
            monotone_direction=direction, m_range=(-math.inf, math.inf), range_known=False,
        )
    else:
        detected = detect_direction(family, form.m)
        if detected != form.direction:
            raise ConsistencyError(
                f'{family.name}/{label}: registered direction {form.direction} but the grid shows {detected}'
            )
        spec = MomentSpec(
            family=family, selector=label, g=g, m_fn=form.m, m_prime_fn=form.m_prime,
            inverse_fn=form.inverse if closed_form else None,
            monotone_direction=form.direction, m_range=form.m_range, closed_form=True,
        )
    logger.debug(f'moment spec {family.name}/{label}: {spec.monotone_direction}, closed form {spec.closed_form}')
    return spec


def moment_function(spec: MomentSpec, theta: float) -> float:
    """m(theta) = E_theta g(X).

    Raises:
        DomainError: theta outside the parameter domain.
        IntegrationError: Quadrature did not converge.
    """
    theta = spec.family.check_theta(theta)
    value = float(spec.m_fn(theta))
    if not math.isfinite(value):
        raise NumericError(f'{spec.family.name}/{spec.selector}: m({theta}) = {value}')
    return value


def moment_function_derivative(spec: MomentSpec, theta: float) -> float:
    """m'(theta), closed form when registered, else a central difference."""
    theta = spec.family.check_theta(theta)
    if spec.m_prime_fn is not None:
        return float(spec.m_prime_fn(theta))
    return central_difference(spec.m_fn, theta)


def _step_down(value: float, lower: float, step: float) -> float:
    if math.isfinite(lower):
        return lower + 0.5 * (value - lower)
    return value - step


def _step_up(value: float, upper: float, step: float, geometric: bool) -> float:
    if math.isfinite(upper):
        return upper - 0.5 * (upper - value)
    if geometric:
        return 2.0 * value
    return value + step


def _unreached(spec: MomentSpec, t: float, probe: float, upward: bool) -> OutOfRangeError:
    edge = float(spec.m_fn(probe))
    increasing = spec.monotone_direction == 'increasing'
    interval = (-math.inf, edge) if upward == increasing else (edge, math.inf)
    return OutOfRangeError(
        f'{spec.family.name}/{spec.selector}: t={t} is not attained; m ranges over about {interval}',
        interval,
    )


def _solve(spec: MomentSpec, t: float) -> tuple[float, int]:
    """Bracket and bisect h(theta) = +-(m(theta) - t), made increasing."""
    family = spec.family
    sign = 1.0 if spec.monotone_direction == 'increasing' else -1.0

    def h(theta: float) -> float:
        value = sign * (spec.m_fn(theta) - t)
        if math.isnan(value):
            raise NumericError(f'{family.name}/{spec.selector}: m({theta}) is NaN')
        return value

    lower, upper = family.param_domain.as_tuple()
    low_typ, high_typ = family.typical_range
    positive = lower >= 0.0 and low_typ > 0.0
    seed = math.sqrt(low_typ * high_typ) if positive else 0.5 * (low_typ + high_typ)
    step = max(1.0, high_typ - low_typ)
    iterations = 0

    if h(seed) >= 0.0:
        hi, lo = seed, _step_down(seed, lower, step)
        while h(lo) >= 0.0:
            iterations += 1
            if iterations > _MAX_EXPANSIONS:
                raise _unreached(spec, t, lo, upward=False)
            hi, step = lo, 2.0 * step
            lo = _step_down(lo, lower, step)
    else:
        lo, hi = seed, _step_up(seed, upper, step, positive)
        while h(hi) < 0.0:
            iterations += 1
            if iterations > _MAX_EXPANSIONS:
                raise _unreached(spec, t, hi, upward=True)
            lo, step = hi, 2.0 * step
            hi = _step_up(hi, upper, step, positive)

    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= BISECTION_WIDTH * (1.0 + abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        iterations += 1
        if h(mid) >= 0.0:
            hi = mid
        else:
            lo = mid

    theta = hi
    if spec.m_prime_fn is not None:
        slope = spec.m_prime_fn(theta)
        if slope != 0.0 and math.isfinite(slope):
            polished = theta - (spec.m_fn(theta) - t) / slope
            if lo <= polished <= hi and abs(spec.m_fn(polished) - t) < abs(spec.m_fn(theta) - t):
                theta = polished
    logger.debug(f'{family.name}/{spec.selector}: inverted t={t} in {iterations} steps')
    return theta, iterations


def _invert(spec: MomentSpec, t: float) -> tuple[float, int]:
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f'cannot invert a moment function at t={t}')
    low, high = spec.m_range
    if spec.range_known and not low <= t <= high:
        raise OutOfRangeError(
            f'{spec.family.name}/{spec.selector}: t={t} outside the attainable range ({low}, {high})',
            spec.m_range,
        )
    if spec.inverse_fn is not None:
        theta = float(spec.inverse_fn(t))
        if not spec.family.param_domain.contains(theta):
            raise OutOfRangeError(
                f'{spec.family.name}/{spec.selector}: t={t} is a boundary value of ({low}, {high})',
                spec.m_range,
            )
        return theta, 0
    return _solve(spec, t)


@trace_span('moments.invert_moment')
def invert_moment(spec: MomentSpec, t: float) -> float:
    """Solve m(theta) = t.

    Uses the registered closed-form inverse when there is one. Otherwise
    expands a bracket from the middle of the typical parameter range
    (geometrically on (0, inf)), bisects it to a width of
    1e-12 (1 + |theta|) and polishes with one Newton step when m' is known.

    Args:
        spec: Moment specification.
        t: Target value in the attainable range of m.

    Returns:
        theta with m(theta) = t; on flat segments the infimum of the solution set.

    Raises:
        OutOfRangeError: t is not attained; carries the attainable interval.
    """
    return _invert(spec, t)[0]


def _validated_sample(family: Family, sample) -> np.ndarray:
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError('sample is empty')
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError('sample contains non-finite values')
    outside = ~family.sample_space.contains(arr)
    if outside.any():
        raise InvalidInputError(
            f'{int(outside.sum())} sample values outside the support of {family.name}, '
            f'e.g. {arr[outside][0]}'
        )
    return arr


@trace_span('moments.estimate')
def estimate(spec: MomentSpec, sample) -> Estimate:
    """Moment estimator theta_hat = m^{-1}(gbar).

    Args:
        spec: Moment specification.
        sample: Observations, all inside the family's sample space.

    Returns:
        The estimate with gbar, iteration count and |m(theta_hat) - gbar|.

    Raises:
        InvalidInputError: Empty sample, non-finite values or values outside
            the support; values are never clamped.
        EstimationInfeasibleError: gbar is outside the attainable range of m.
    """
    arr = _validated_sample(spec.family, sample)
    with np.errstate(divide='ignore'):
        gbar = float(np.mean(spec.g(arr)))
    if not math.isfinite(gbar):
        raise EstimationInfeasibleError(f'generalized empirical moment is {gbar}', spec.m_range)
    try:
        theta_hat, iterations = _invert(spec, gbar)
    except OutOfRangeError as exc:
        raise EstimationInfeasibleError(
            f'generalized empirical moment {gbar} is outside the attainable range of m',
            exc.interval,
        ) from exc
    residual = abs(spec.m_fn(theta_hat) - gbar)
    if residual > INVERSION_TOL * (1.0 + abs(gbar)):
        logger.warning(f'{spec.family.name}/{spec.selector}: residual {residual:.3e} at theta_hat={theta_hat}')
    return Estimate(theta_hat=theta_hat, gbar=gbar, iterations=iterations, residual=residual, n=arr.size)


def _exp_family(family: Family) -> ExpFamily:
    if not isinstance(family, ExpFamily):
        raise DomainError(f'{family.name} is not an exponential family')
    return family


def mle_residual(ef: ExpFamily, sample, theta: float) -> float:
    """Stationarity residual of the exponential-family likelihood.

    Returns mean T(x_i) + [log c]'(theta) / eta'(theta), which is zero
    exactly at a solution of the likelihood equation; that equation is
    the moment equation for g = T.
    """
    ef = _exp_family(ef)
    theta = ef.check_theta(theta)
    arr = _validated_sample(ef, sample)
    slope = ef.eta_prime(theta)
    if slope == 0.0:
        raise DegenerateParametrizationError(f"{ef.name}: eta'({theta}) = 0")
    return float(np.mean(ef.big_t(arr))) + ef.log_c_prime(theta) / slope


def second_order_check(ef: ExpFamily, sample, theta_hat: float) -> float:
    """Second theta-derivative of the log-likelihood at theta_hat.

    n [log c]''(theta_hat) + eta''(theta_hat) sum T(x_i); a negative value
    confirms a maximum.
    """
    ef = _exp_family(ef)
    theta_hat = ef.check_theta(theta_hat)
    arr = _validated_sample(ef, sample)
    return arr.size * ef.log_c_second(theta_hat) + ef.eta_second(theta_hat) * float(np.sum(ef.big_t(arr)))


def log_likelihood(family: Family, sample, theta: float) -> float:
    """Sum of log f(x_i; theta)."""
    arr = _validated_sample(family, sample)
    return float(np.sum(family.logpdf(arr, theta)))
