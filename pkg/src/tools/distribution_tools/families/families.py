"""Catalog of one-parameter distribution families.

Each family carries a log-density, CDF, quantile function and an exact
sampler; the exponential-family members also carry the decomposition
f(x; theta) = h(x) c(theta) exp(eta(theta) T(x)).
"""

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, fields
from types import MappingProxyType
from typing import Literal

import numpy as np
from scipy import special

from src.tools.math_tools.specfun.specfun import digamma, log_gamma, trigamma
from src.tools.shared_libraries.errors import (
    CatalogError,
    ConsistencyError,
    DegenerateParametrizationError,
    DomainError,
)
from src.tools.shared_libraries.helpers import central_difference

from .models import Interval, Support


logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray, float], np.ndarray]
ScalarFn = Callable[[float], float]

POSITIVE = Interval(lower=0.0, upper=math.inf)
REAL_LINE = Interval(lower=-math.inf, upper=math.inf)
POSITIVE_SUPPORT = Support(lower=0.0, upper=math.inf)
REAL_SUPPORT = Support(lower=-math.inf, upper=math.inf)


@dataclass(frozen=True, kw_only=True, eq=False)
class Family:
    """A one-parameter family of densities f(x; theta)."""

    name: str
    param_domain: Interval
    sample_space: Support
    support_fn: Callable[[float], Support]
    logpdf_fn: ArrayFn
    sampler_fn: Callable[[float, np.random.Generator, int | None], np.ndarray]
    cdf_fn: ArrayFn | None = None
    ppf_fn: ArrayFn | None = None
    kind: Literal['location', 'scale', 'general'] = 'general'
    typical_range: tuple[float, float] = (0.5, 4.0)
    fixed_params: Mapping[str, float] = field(default_factory=dict)

    def check_theta(self, theta: float) -> float:
        theta = float(theta)
        if not self.param_domain.contains(theta):
            raise DomainError(
                f'{self.name}: theta={theta} outside the parameter domain '
                f'{self.param_domain.as_tuple()}'
            )
        return theta

    def support(self, theta: float) -> Support:
        return self.support_fn(self.check_theta(theta))

    def logpdf(self, x: float | np.ndarray, theta: float) -> float | np.ndarray:
        """log f(x; theta); -inf outside the open support."""
        support = self.support(theta)
        arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(arr)
        out = np.full(flat.shape, -np.inf)
        inside = support.contains(flat)
        if inside.any():
            with np.errstate(over='ignore', under='ignore'):
                out[inside] = self.logpdf_fn(flat[inside], theta)
        return float(out[0]) if arr.ndim == 0 else out

    def density(self, x: float | np.ndarray, theta: float) -> float | np.ndarray:
        return np.exp(self.logpdf(x, theta))

    def cdf(self, x: float | np.ndarray, theta: float) -> float | np.ndarray:
        if self.cdf_fn is None:
            raise CatalogError(f'{self.name} has no registered CDF')
        theta = self.check_theta(theta)
        with np.errstate(over='ignore', under='ignore'):
            out = self.cdf_fn(np.asarray(x, dtype=float), theta)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, u: float | np.ndarray, theta: float) -> float | np.ndarray:
        if self.ppf_fn is None:
            raise CatalogError(f'{self.name} has no registered quantile function')
        theta = self.check_theta(theta)
        arr = np.asarray(u, dtype=float)
        if np.any((arr < 0.0) | (arr > 1.0)):
            raise DomainError('quantile levels must lie in [0, 1]')
        with np.errstate(divide='ignore', over='ignore'):
            out = self.ppf_fn(arr, theta)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, theta: float, rng: np.random.Generator, size: int | None = None) -> float | np.ndarray:
        """Exact draws; the caller owns the random stream."""
        return self.sampler_fn(self.check_theta(theta), rng, size)


@dataclass(frozen=True, kw_only=True, eq=False)
class ExpFamily(Family):
    """Exponential family h(x) c(theta) exp(eta(theta) T(x)).

    Derivatives without a registered closed form fall back to central
    differences.
    """

    log_h: Callable[[np.ndarray], np.ndarray]
    log_c: ScalarFn
    eta: ScalarFn
    big_t: Callable[[np.ndarray], np.ndarray]
    eta_prime_fn: ScalarFn | None = None
    eta_second_fn: ScalarFn | None = None
    log_c_prime_fn: ScalarFn | None = None
    log_c_second_fn: ScalarFn | None = None
    eta_increasing: bool = True
    t_increasing: bool = True

    @property
    def base(self) -> Family:
        return Family(**{f.name: getattr(self, f.name) for f in fields(Family)})

    def c(self, theta: float) -> float:
        return math.exp(self.log_c(self.check_theta(theta)))

    def h(self, x: float | np.ndarray) -> float | np.ndarray:
        return np.exp(self.log_h(np.asarray(x, dtype=float)))

    def decomposed_density(self, x: np.ndarray, theta: float) -> np.ndarray:
        """h(x) c(theta) exp(eta(theta) T(x)) evaluated from the decomposition."""
        theta = self.check_theta(theta)
        arr = np.asarray(x, dtype=float)
        return np.exp(self.log_h(arr) + self.log_c(theta) + self.eta(theta) * self.big_t(arr))

    def eta_prime(self, theta: float) -> float:
        if self.eta_prime_fn is not None:
            return self.eta_prime_fn(theta)
        return central_difference(self.eta, theta)

    def eta_second(self, theta: float) -> float:
        if self.eta_second_fn is not None:
            return self.eta_second_fn(theta)
        if self.eta_prime_fn is not None:
            return central_difference(self.eta_prime_fn, theta)
        return central_difference(self.eta, theta, order=2)

    def log_c_prime(self, theta: float) -> float:
        if self.log_c_prime_fn is not None:
            return self.log_c_prime_fn(theta)
        return central_difference(self.log_c, theta)

    def log_c_second(self, theta: float) -> float:
        if self.log_c_second_fn is not None:
            return self.log_c_second_fn(theta)
        if self.log_c_prime_fn is not None:
            return central_difference(self.log_c_prime_fn, theta)
        return central_difference(self.log_c, theta, order=2)


def exp_family_mean_T(ef: ExpFamily, theta: float) -> float:
    """E_theta T(X) = -[log c]'(theta) / eta'(theta).

    Raises:
        DegenerateParametrizationError: eta'(theta) = 0.
    """
    theta = ef.check_theta(theta)
    slope = ef.eta_prime(theta)
    if slope == 0.0:
        raise DegenerateParametrizationError(f"{ef.name}: eta'({theta}) = 0")
    return -ef.log_c_prime(theta) / slope


def exp_family_var_T(ef: ExpFamily, theta: float) -> float:
    """Var_theta T(X), the theta-derivative of E_theta T(X) divided by eta'.

    Computed as (-[log c]'' eta' + [log c]' eta'') / (eta')^3.

    Raises:
        DegenerateParametrizationError: eta'(theta) = 0.
        ConsistencyError: The result is not positive.
    """
    theta = ef.check_theta(theta)
    slope = ef.eta_prime(theta)
    if slope == 0.0:
        raise DegenerateParametrizationError(f"{ef.name}: eta'({theta}) = 0")
    variance = (
        -ef.log_c_second(theta) * slope + ef.log_c_prime(theta) * ef.eta_second(theta)
    ) / slope ** 3
    if not variance > 0.0:
        raise ConsistencyError(
            f'{ef.name}: non-positive Var T(X) = {variance} at theta={theta}; '
            'the decomposition is mis-specified'
        )
    return variance


def theta_grid(family: Family, size: int = 50) -> np.ndarray:
    """Grid over the family's typical parameter range, log-spaced on (0, inf)."""
    lower, upper = family.typical_range
    if family.param_domain.lower >= 0.0:
        return np.geomspace(lower, upper, size)
    return np.linspace(lower, upper, size)


def monotonicity_flags(ef: ExpFamily, x_points: np.ndarray, theta_points: np.ndarray) -> dict[str, bool | None]:
    """Detect whether eta and T are increasing or decreasing on grids.

    Returns:
        {"eta_increasing": ..., "t_increasing": ...}; None when the values
        are not monotone on the grid.
    """
    def direction(values: np.ndarray) -> bool | None:
        steps = np.diff(values)
        if np.all(steps > 0):
            return True
        if np.all(steps < 0):
            return False
        return None

    eta_values = np.array([ef.eta(float(t)) for t in theta_points])
    return {
        'eta_increasing': direction(eta_values),
        't_increasing': direction(ef.big_t(np.asarray(x_points, dtype=float))),
    }


# Catalog -------------------------------------------------------------------


def _positive_param(params: Mapping[str, float], key: str, family: str) -> float:
    if key not in params:
        raise DomainError(f"{family} requires the fixed parameter '{key}'")
    value = float(params[key])
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f'{family}: fixed parameter {key} must be positive, got {value}')
    return value


def _uniform_sym(params: Mapping[str, float]) -> Family:
    return Family(
        name='uniform_sym',
        param_domain=POSITIVE,
        sample_space=REAL_SUPPORT,
        support_fn=lambda t: Support(lower=-t, upper=t),
        logpdf_fn=lambda x, t: np.full(x.shape, -math.log(2.0 * t)),
        cdf_fn=lambda x, t: np.clip((x + t) / (2.0 * t), 0.0, 1.0),
        ppf_fn=lambda u, t: t * (2.0 * u - 1.0),
        sampler_fn=lambda t, rng, size: rng.uniform(-t, t, size),
        kind='scale',
    )


def _levy_type(params: Mapping[str, float]) -> ExpFamily:
    return ExpFamily(
        name='levy_type',
        param_domain=POSITIVE,
        sample_space=POSITIVE_SUPPORT,
        support_fn=lambda t: POSITIVE_SUPPORT,
        logpdf_fn=lambda x, t: 0.5 * math.log(t / math.pi) - 1.5 * np.log(x) - t / x,
        cdf_fn=lambda x, t: np.where(x > 0, special.erfc(np.sqrt(t / np.maximum(x, 1e-300))), 0.0),
        ppf_fn=lambda u, t: t / special.erfcinv(u) ** 2,
        sampler_fn=lambda t, rng, size: 2.0 * t / rng.standard_normal(size) ** 2,
        kind='scale',
        log_h=lambda x: -1.5 * np.log(x) - 0.5 * math.log(math.pi),
        log_c=lambda t: 0.5 * math.log(t),
        eta=lambda t: -t,
        big_t=lambda x: 1.0 / x,
        eta_prime_fn=lambda t: -1.0,
        eta_second_fn=lambda t: 0.0,
        log_c_prime_fn=lambda t: 0.5 / t,
        log_c_second_fn=lambda t: -0.5 / (t * t),
        eta_increasing=False,
        t_increasing=False,
    )


def _gamma_scale(params: Mapping[str, float]) -> ExpFamily:
    alpha = _positive_param(params, 'alpha', 'gamma_scale')
    lg = log_gamma(alpha)
    return ExpFamily(
        name='gamma_scale',
        param_domain=POSITIVE,
        sample_space=POSITIVE_SUPPORT,
        support_fn=lambda t: POSITIVE_SUPPORT,
        logpdf_fn=lambda x, t: (alpha - 1.0) * np.log(x) - x / t - lg - alpha * math.log(t),
        cdf_fn=lambda x, t: special.gammainc(alpha, np.maximum(x, 0.0) / t),
        ppf_fn=lambda u, t: t * special.gammaincinv(alpha, u),
        sampler_fn=lambda t, rng, size: _positive_draws(rng.gamma(alpha, t, size)),
        kind='scale',
        fixed_params=MappingProxyType({'alpha': alpha}),
        log_h=lambda x: (alpha - 1.0) * np.log(x) - lg,
        log_c=lambda t: -alpha * math.log(t),
        eta=lambda t: -1.0 / t,
        big_t=lambda x: x,
        eta_prime_fn=lambda t: 1.0 / (t * t),
        eta_second_fn=lambda t: -2.0 / t ** 3,
        log_c_prime_fn=lambda t: -alpha / t,
        log_c_second_fn=lambda t: alpha / (t * t),
    )


def _gamma_shape(params: Mapping[str, float]) -> ExpFamily:
    lam = _positive_param(params, 'lam', 'gamma_shape')
    log_lam = math.log(lam)
    return ExpFamily(
        name='gamma_shape',
        param_domain=POSITIVE,
        sample_space=POSITIVE_SUPPORT,
        support_fn=lambda a: POSITIVE_SUPPORT,
        logpdf_fn=lambda x, a: (a - 1.0) * np.log(x) - x / lam - log_gamma(a) - a * log_lam,
        cdf_fn=lambda x, a: special.gammainc(a, np.maximum(x, 0.0) / lam),
        ppf_fn=lambda u, a: lam * special.gammaincinv(a, u),
        sampler_fn=lambda a, rng, size: _positive_draws(rng.gamma(a, lam, size)),
        typical_range=(0.5, 5.0),
        fixed_params=MappingProxyType({'lam': lam}),
        log_h=lambda x: -x / lam - np.log(x),
        log_c=lambda a: -log_gamma(a) - a * log_lam,
        eta=lambda a: a,
        big_t=np.log,
        eta_prime_fn=lambda a: 1.0,
        eta_second_fn=lambda a: 0.0,
        log_c_prime_fn=lambda a: -digamma(a) - log_lam,
        log_c_second_fn=lambda a: -trigamma(a),
    )


def _softplus_neg(x: np.ndarray) -> np.ndarray:
    # log(1 + e^{-x}) without overflow
    return np.logaddexp(0.0, -x)


def _neg_log_expm1(u: np.ndarray) -> np.ndarray:
    # -log(e^u - 1) = -u - log(1 - e^{-u}), finite for every u > 0
    u = np.asarray(u, dtype=float)
    with np.errstate(divide='ignore'):
        return -u - np.log(-np.expm1(-u))


def _positive_draws(values: np.ndarray) -> np.ndarray:
    # gamma draws with a small shape underflow to exactly 0
    return np.maximum(values, np.finfo(float).tiny)


def _exp_logistic(params: Mapping[str, float]) -> ExpFamily:
    return ExpFamily(
        name='exp_logistic',
        param_domain=POSITIVE,
        sample_space=REAL_SUPPORT,
        support_fn=lambda t: REAL_SUPPORT,
        logpdf_fn=lambda x, t: math.log(t) - x - (t + 1.0) * _softplus_neg(x),
        cdf_fn=lambda x, t: np.exp(-t * _softplus_neg(x)),
        ppf_fn=lambda u, t: _neg_log_expm1(-np.log(u) / t),
        sampler_fn=lambda t, rng, size: _neg_log_expm1(rng.standard_exponential(size) / t),
        log_h=lambda x: -x - _softplus_neg(x),
        log_c=math.log,
        eta=lambda t: -t,
        big_t=_softplus_neg,
        eta_prime_fn=lambda t: -1.0,
        eta_second_fn=lambda t: 0.0,
        log_c_prime_fn=lambda t: 1.0 / t,
        log_c_second_fn=lambda t: -1.0 / (t * t),
        eta_increasing=False,
        t_increasing=False,
    )


def _uniform_scale(params: Mapping[str, float]) -> Family:
    return Family(
        name='uniform_scale',
        param_domain=POSITIVE,
        sample_space=POSITIVE_SUPPORT,
        support_fn=lambda t: Support(lower=0.0, upper=t),
        logpdf_fn=lambda x, t: np.full(x.shape, -math.log(t)),
        cdf_fn=lambda x, t: np.clip(x / t, 0.0, 1.0),
        ppf_fn=lambda u, t: u * t,
        sampler_fn=lambda t, rng, size: rng.uniform(0.0, t, size),
        kind='scale',
    )


def _logistic_loc(params: Mapping[str, float]) -> Family:
    return Family(
        name='logistic_loc',
        param_domain=REAL_LINE,
        sample_space=REAL_SUPPORT,
        support_fn=lambda t: REAL_SUPPORT,
        logpdf_fn=lambda x, t: -(x - t) - 2.0 * _softplus_neg(x - t),
        cdf_fn=lambda x, t: special.expit(x - t),
        ppf_fn=lambda u, t: t + special.logit(u),
        sampler_fn=lambda t, rng, size: rng.logistic(t, 1.0, size),
        kind='location',
        typical_range=(-3.0, 3.0),
    )


def _weibull_theta(params: Mapping[str, float]) -> Family:
    return Family(
        name='weibull_theta',
        param_domain=POSITIVE,
        sample_space=POSITIVE_SUPPORT,
        support_fn=lambda t: POSITIVE_SUPPORT,
        logpdf_fn=lambda x, t: -math.log(t) + (1.0 / t - 1.0) * np.log(x) - x ** (1.0 / t),
        cdf_fn=lambda x, t: -np.expm1(-np.maximum(x, 0.0) ** (1.0 / t)),
        ppf_fn=lambda u, t: (-np.log1p(-u)) ** t,
        sampler_fn=lambda t, rng, size: rng.standard_exponential(size) ** t,
    )


def _gumbel_std(params: Mapping[str, float]) -> Family:
    return Family(
        name='gumbel_std',
        param_domain=POSITIVE,
        sample_space=REAL_SUPPORT,
        support_fn=lambda t: REAL_SUPPORT,
        logpdf_fn=lambda x, t: -math.log(t) - x / t - np.exp(-x / t),
        cdf_fn=lambda x, t: np.exp(-np.exp(-x / t)),
        ppf_fn=lambda u, t: -t * np.log(-np.log(u)),
        sampler_fn=lambda t, rng, size: t * rng.gumbel(0.0, 1.0, size),
        kind='scale',
    )


CATALOG: dict[str, tuple[Callable[[Mapping[str, float]], Family], frozenset[str]]] = {
    'uniform_sym': (_uniform_sym, frozenset()),
    'levy_type': (_levy_type, frozenset()),
    'gamma_scale': (_gamma_scale, frozenset({'alpha'})),
    'gamma_shape': (_gamma_shape, frozenset({'lam'})),
    'exp_logistic': (_exp_logistic, frozenset()),
    'uniform_scale': (_uniform_scale, frozenset()),
    'logistic_loc': (_logistic_loc, frozenset()),
    'weibull_theta': (_weibull_theta, frozenset()),
    'gumbel_std': (_gumbel_std, frozenset()),
}


def make_builtin(name: str, fixed_params: Mapping[str, float] | None = None) -> Family:
    """Build a catalog family.

    Args:
        name: Catalog name, e.g. "gamma_scale".
        fixed_params: Known nuisance constants, e.g. {"alpha": 2.0}.

    Returns:
        The wired Family, or an ExpFamily for exponential families.

    Raises:
        CatalogError: Unknown name.
        DomainError: Missing, unknown or invalid fixed parameters.
    """
    if name not in CATALOG:
        raise CatalogError(f"unknown family '{name}'; known: {', '.join(sorted(CATALOG))}")
    factory, keys = CATALOG[name]
    params = dict(fixed_params or {})
    unknown = set(params) - keys
    if unknown:
        raise DomainError(f'{name} does not take parameters {sorted(unknown)}')
    family = factory(params)
    logger.debug(f'built family {name} with {params}')
    return family
