"""Unit tests for the family catalog."""

import math

import numpy as np
import pytest
from scipy import stats

from src.tools.distribution_tools.families.families import (
    CATALOG,
    ExpFamily,
    exp_family_mean_T,
    exp_family_var_T,
    make_builtin,
    monotonicity_flags,
)
from src.tools.math_tools.specfun.specfun import EULER_GAMMA
from src.tools.shared_libraries.errors import (
    CatalogError,
    ConsistencyError,
    DegenerateParametrizationError,
    DomainError,
)
from src.tools.shared_libraries.helpers import integrate


PARAMS = {'gamma_scale': {'alpha': 2.0}, 'gamma_shape': {'lam': 1.5}}

THETA_GRIDS = {
    'logistic_loc': np.linspace(-2.0, 2.0, 5),
    'gamma_shape': np.array([0.6, 1.0, 2.5, 4.0]),
}


def _family(name):
    return make_builtin(name, PARAMS.get(name))


def _thetas(name):
    return THETA_GRIDS.get(name, np.array([0.5, 1.0, 2.0, 3.5]))


def _exp_families():
    return [name for name in CATALOG if isinstance(_family(name), ExpFamily)]


def _expectation(family, func, theta):
    support = family.support(theta)
    return integrate(
        lambda x: func(x) * family.density(x, theta) if family.density(x, theta) > 0 else 0.0,
        support.lower, support.upper,
    )


@pytest.fixture
def rng():
    """Seeded random stream."""
    return np.random.default_rng(20240915)


class TestMakeBuiltin:
    """Tests for make_builtin."""

    def test_catalog_names(self):
        """Test every documented name resolves."""
        for name in ('uniform_sym', 'levy_type', 'gamma_scale', 'gamma_shape', 'exp_logistic',
                     'uniform_scale', 'logistic_loc', 'weibull_theta', 'gumbel_std'):
            assert _family(name).name == name

    def test_unknown_name(self):
        """Test an unknown name raises a catalog error."""
        with pytest.raises(CatalogError):
            make_builtin('cauchy_loc')

    def test_invalid_fixed_params(self):
        """Test invalid, missing and unexpected fixed parameters."""
        with pytest.raises(DomainError):
            make_builtin('gamma_scale', {'alpha': 0.0})
        with pytest.raises(DomainError):
            make_builtin('gamma_scale', {})
        with pytest.raises(DomainError):
            make_builtin('levy_type', {'alpha': 1.0})

    def test_uniform_scale_density(self):
        """Test uniform_scale density(0.5, 1) = 1 and zero at the open endpoints."""
        family = _family('uniform_scale')
        assert family.density(0.5, 1.0) == pytest.approx(1.0)
        assert family.density(0.0, 1.0) == 0.0
        assert family.density(1.0, 1.0) == 0.0

    def test_gamma_scale_exponential_case(self):
        """Test gamma_scale with alpha=1 is the exponential density."""
        family = make_builtin('gamma_scale', {'alpha': 1.0})
        x = np.linspace(0.1, 10.0, 25)
        np.testing.assert_allclose(family.density(x, 2.0), 0.5 * np.exp(-x / 2.0), rtol=1e-12)

    def test_theta_outside_domain(self):
        """Test theta outside the parameter domain is rejected."""
        with pytest.raises(DomainError):
            _family('uniform_scale').density(0.5, -1.0)

    def test_gumbel_std_cdf(self):
        """Test theta = 1 is the standard Gumbel CDF exp(-exp(-x))."""
        family = _family('gumbel_std')
        x = np.linspace(-3.0, 5.0, 17)
        np.testing.assert_allclose(family.cdf(x, 1.0), np.exp(-np.exp(-x)), rtol=1e-14)


class TestFamilyInvariants:
    """Tests for density, CDF, quantile and sampler consistency."""

    @pytest.mark.parametrize('name', list(CATALOG))
    def test_density_integrates_to_one(self, name):
        """Test the density integrates to 1 for each theta on a grid."""
        family = _family(name)
        for theta in _thetas(name):
            support = family.support(theta)
            total = integrate(lambda x: family.density(x, theta), support.lower, support.upper)
            assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize('name', list(CATALOG))
    def test_cdf_quantile_inverse(self, name):
        """Test the CDF is nondecreasing and the quantile inverts it."""
        family = _family(name)
        levels = np.linspace(0.01, 0.99, 41)
        for theta in _thetas(name):
            points = family.quantile(levels, theta)
            assert np.all(np.diff(family.cdf(points, theta)) >= 0)
            np.testing.assert_allclose(family.cdf(points, theta), levels, atol=1e-8)

    @pytest.mark.parametrize('name', list(CATALOG))
    def test_sampler_within_dkw_band(self, name, rng):
        """Test the empirical CDF of 1e5 draws lies in the 0.999 DKW band."""
        family = _family(name)
        theta = float(_thetas(name)[1])
        draws = np.sort(family.sample(theta, rng, 100_000))
        n = draws.size
        cdf = family.cdf(draws, theta)
        upper = np.arange(1, n + 1) / n
        lower = np.arange(0, n) / n
        deviation = max(np.max(upper - cdf), np.max(cdf - lower))
        assert deviation <= math.sqrt(math.log(2.0 / 0.001) / (2.0 * n))

    @pytest.mark.parametrize('name', list(CATALOG))
    def test_sampler_deterministic(self, name):
        """Test the same seed gives the same draws."""
        family = _family(name)
        theta = float(_thetas(name)[2])
        first = family.sample(theta, np.random.default_rng(7), 50)
        second = family.sample(theta, np.random.default_rng(7), 50)
        np.testing.assert_array_equal(first, second)

    @pytest.mark.parametrize('theta', [0.005, 0.01])
    def test_exp_logistic_small_theta(self, theta, rng):
        """Test finite draws and quantiles when theta is close to 0."""
        family = _family('exp_logistic')
        draws = family.sample(theta, rng, 10_000)
        assert np.all(np.isfinite(draws))
        levels = np.linspace(0.001, 0.999, 25)
        points = family.quantile(levels, theta)
        assert np.all(np.isfinite(points))
        np.testing.assert_allclose(family.cdf(points, theta), levels, rtol=1e-10)
        # T(X) = log(1 + e^{-X}) is exponential with mean 1/theta
        statistic = family.big_t(draws)
        standard_error = statistic.std(ddof=1) / math.sqrt(statistic.size)
        assert abs(statistic.mean() - 1.0 / theta) <= 4.0 * standard_error

    @pytest.mark.parametrize('name, params', [('gamma_shape', {'lam': 1.0}), ('gamma_scale', {'alpha': 0.01})])
    def test_gamma_draws_stay_positive(self, name, params, rng):
        """Test that a tiny gamma shape never yields a draw of exactly 0."""
        family = make_builtin(name, params)
        theta = 0.01 if name == 'gamma_shape' else 1.0
        draws = family.sample(theta, rng, 10_000)
        assert np.all(draws > 0.0)
        assert family.sample_space.contains(draws).all()

    def test_levy_type_reciprocal_mean(self, rng):
        """Test the mean of 1/X is 1/(2 theta) within 3 standard errors."""
        family = _family('levy_type')
        reciprocal = 1.0 / family.sample(1.0, rng, 100_000)
        standard_error = reciprocal.std(ddof=1) / math.sqrt(reciprocal.size)
        assert abs(reciprocal.mean() - 0.5) <= 3.0 * standard_error

    def test_weibull_log_is_scaled_gumbel(self, rng):
        """Test T = -log X satisfies mean(T)/theta -> Euler's constant."""
        family = _family('weibull_theta')
        theta = 1.7
        values = -np.log(family.sample(theta, rng, 100_000)) / theta
        standard_error = values.std(ddof=1) / math.sqrt(values.size)
        assert abs(values.mean() - EULER_GAMMA) <= 3.0 * standard_error
        assert stats.kstest(values, stats.gumbel_r.cdf).pvalue > 1e-3

    def test_logistic_location_matches_scipy(self):
        """Test logistic_loc is the standard logistic shifted by theta."""
        family = _family('logistic_loc')
        x = np.linspace(-6.0, 8.0, 29)
        np.testing.assert_allclose(family.density(x, 1.0), stats.logistic.pdf(x, loc=1.0), rtol=1e-12)


class TestExpFamily:
    """Tests for the exponential-family decomposition and moment formulas."""

    def test_catalog_members(self):
        """Test which catalog members carry a decomposition."""
        assert set(_exp_families()) == {'levy_type', 'gamma_scale', 'gamma_shape', 'exp_logistic'}

    @pytest.mark.parametrize('name', ['levy_type', 'gamma_scale', 'gamma_shape', 'exp_logistic'])
    def test_decomposition_reproduces_density(self, name):
        """Test h c exp(eta T) equals the density."""
        family = _family(name)
        for theta in _thetas(name):
            x = family.quantile(np.linspace(0.02, 0.98, 30), theta)
            np.testing.assert_allclose(family.decomposed_density(x, theta), family.density(x, theta), rtol=1e-10)

    @pytest.mark.parametrize('name', ['levy_type', 'gamma_scale', 'gamma_shape', 'exp_logistic'])
    def test_mean_and_variance_against_quadrature(self, name):
        """Test the moment formulas against quadrature on a 10-point grid."""
        family = _family(name)
        thetas = np.linspace(0.6, 4.0, 10)
        for theta in thetas:
            mean = _expectation(family, lambda x: float(family.big_t(np.asarray(x))), theta)
            second = _expectation(family, lambda x: float(family.big_t(np.asarray(x))) ** 2, theta)
            assert exp_family_mean_T(family, theta) == pytest.approx(mean, abs=1e-6)
            assert exp_family_var_T(family, theta) == pytest.approx(second - mean ** 2, abs=1e-5)

    def test_mean_examples(self):
        """Test E T at the documented points."""
        assert exp_family_mean_T(_family('gamma_scale'), 3.0) == pytest.approx(6.0)
        assert exp_family_mean_T(_family('exp_logistic'), 4.0) == pytest.approx(0.25)
        assert exp_family_mean_T(_family('levy_type'), 1.0) == pytest.approx(0.5)

    def test_variance_examples(self):
        """Test Var T at the documented points."""
        assert exp_family_var_T(_family('gamma_scale'), 3.0) == pytest.approx(18.0)
        assert exp_family_var_T(_family('exp_logistic'), 2.0) == pytest.approx(0.25)

    def test_numeric_derivative_fallback(self):
        """Test the central-difference fallback matches closed forms."""
        family = _family('gamma_scale')
        bare = ExpFamily(**{
            **{f: getattr(family, f) for f in family.__dataclass_fields__},
            'eta_prime_fn': None, 'eta_second_fn': None,
            'log_c_prime_fn': None, 'log_c_second_fn': None,
        })
        for theta in (0.7, 2.0, 5.0):
            assert exp_family_mean_T(bare, theta) == pytest.approx(exp_family_mean_T(family, theta), rel=1e-6)
            assert exp_family_var_T(bare, theta) == pytest.approx(exp_family_var_T(family, theta), rel=1e-3)

    def test_degenerate_parametrization(self):
        """Test eta' = 0 is reported."""
        family = _family('exp_logistic')
        flat = ExpFamily(**{
            **{f: getattr(family, f) for f in family.__dataclass_fields__},
            'eta_prime_fn': lambda t: 0.0,
        })
        with pytest.raises(DegenerateParametrizationError):
            exp_family_mean_T(flat, 1.0)

    def test_misspecified_variance(self):
        """Test a sign-flipped decomposition is caught as inconsistent."""
        family = _family('gamma_scale')
        broken = ExpFamily(**{
            **{f: getattr(family, f) for f in family.__dataclass_fields__},
            'log_c_second_fn': lambda t: 10.0 / (t * t),
        })
        with pytest.raises(ConsistencyError):
            exp_family_var_T(broken, 1.0)

    @pytest.mark.parametrize('name', ['levy_type', 'gamma_scale', 'gamma_shape', 'exp_logistic'])
    def test_monotonicity_flags(self, name):
        """Test the recorded monotonicity of eta and T matches grid checks."""
        family = _family(name)
        x = family.quantile(np.linspace(0.05, 0.95, 40), 1.0)
        flags = monotonicity_flags(family, x, np.linspace(0.5, 4.0, 20))
        assert flags == {'eta_increasing': family.eta_increasing, 't_increasing': family.t_increasing}

    def test_base_view(self):
        """Test the plain-family view keeps the density."""
        family = _family('levy_type')
        assert not isinstance(family.base, ExpFamily)
        assert family.base.density(2.0, 1.0) == pytest.approx(family.density(2.0, 1.0))
