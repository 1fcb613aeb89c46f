"""Unit tests for special functions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from src.tools.math_tools.specfun.specfun import (
    EULER_GAMMA,
    abslog_gumbel_mean,
    abslog_gumbel_variance,
    digamma,
    expint_ei,
    inverse_digamma,
    log_gamma,
    trigamma,
)
from src.tools.shared_libraries.errors import DomainError, NumericError


class TestLogGamma:
    """Tests for log_gamma."""

    def test_integer_points(self):
        """Test Gamma(1) = Gamma(2) = 1."""
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
        assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-15)

    def test_half(self):
        """Test log Gamma(1/2) = log sqrt(pi)."""
        assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-12)

    def test_convexity(self):
        """Test second differences are nonnegative on a positive grid."""
        grid = np.geomspace(1e-3, 1e3, 400)
        values = log_gamma(grid)
        slopes = np.diff(values) / np.diff(grid)
        assert np.all(np.diff(slopes) >= -1e-12)

    def test_domain(self):
        """Test nonpositive arguments are rejected."""
        with pytest.raises(DomainError):
            log_gamma(0.0)
        with pytest.raises(DomainError):
            log_gamma(np.array([1.0, -2.0]))


class TestDigamma:
    """Tests for digamma."""

    def test_one_and_two(self):
        """Test Psi(1) = -gamma and Psi(2) = 1 - gamma."""
        assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - 0.5772156649015329, abs=1e-12)

    def test_asymptote(self):
        """Test log x - 1/(2x) asymptote at x = 1e4."""
        x = 1e4
        assert digamma(x) == pytest.approx(math.log(x) - 0.5 / x, abs=1e-8)

    def test_against_scipy(self):
        """Test agreement with scipy.special.psi across the working range."""
        grid = np.geomspace(1e-3, 1e6, 300)
        np.testing.assert_allclose(digamma(grid), special.psi(grid), rtol=0, atol=1e-10)

    def test_scalar_and_array_agree(self):
        """Test scalar and vectorized paths give the same values."""
        grid = np.array([0.01, 0.7, 5.9, 6.0, 42.0])
        np.testing.assert_allclose(
            digamma(grid), [digamma(float(v)) for v in grid], rtol=0, atol=1e-14
        )

    def test_recurrence(self):
        """Test Psi(x + 1) - Psi(x) = 1/x on a log-spaced grid."""
        grid = np.geomspace(1e-2, 1e4, 120)
        np.testing.assert_allclose(digamma(grid + 1.0) - digamma(grid), 1.0 / grid, rtol=0, atol=1e-10)

    def test_domain(self):
        """Test nonpositive arguments are rejected."""
        with pytest.raises(DomainError):
            digamma(0.0)
        with pytest.raises(DomainError):
            digamma(np.array([-1.0]))

    def test_trigamma_against_scipy(self):
        """Test the Newton slope against scipy.special.polygamma(1, x)."""
        for x in (1e-3, 0.3, 1.0, 5.5, 80.0):
            assert trigamma(x) == pytest.approx(float(special.polygamma(1, x)), rel=1e-10)


class TestInverseDigamma:
    """Tests for inverse_digamma."""

    @pytest.mark.parametrize('x', [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0])
    def test_round_trip(self, x):
        """Test inverse_digamma(digamma(x)) = x."""
        assert inverse_digamma(digamma(x)) == pytest.approx(x, abs=1e-8)

    def test_forward_check(self):
        """Test the solution of Psi(x) = 10 by forward evaluation."""
        x = inverse_digamma(10.0)
        assert x > 0
        assert abs(digamma(x) - 10.0) <= 1e-10

    @pytest.mark.parametrize('y', [29.5, 30.0, 200.0, 709.0, 709.78])
    def test_large_argument(self, y):
        """Test accuracy up to the largest representable solution."""
        x = inverse_digamma(y)
        assert math.isfinite(x)
        assert float(special.digamma(x)) == pytest.approx(y, rel=1e-12)

    def test_continuous_at_asymptotic_switch(self):
        """Test that the solution stays increasing across y = 30."""
        assert inverse_digamma(29.999) < inverse_digamma(30.0) < inverse_digamma(30.001)

    @pytest.mark.parametrize('y', [710.0, 1e4])
    def test_unrepresentable_solution(self, y):
        """Test that a solution beyond the float range raises NumericError."""
        with pytest.raises(NumericError):
            inverse_digamma(y)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(min_value=-900.0, max_value=13.0), st.floats(min_value=1e-3, max_value=1.0))
    def test_monotone_and_accurate(self, y, gap):
        """Test monotonicity in y and the residual bound."""
        low, high = inverse_digamma(y), inverse_digamma(y + gap)
        assert low < high
        assert abs(digamma(low) - y) <= 1e-10 * max(1.0, abs(y))

    def test_domain(self):
        """Test non-finite input is rejected."""
        with pytest.raises(DomainError):
            inverse_digamma(float('nan'))


class TestExpintEi:
    """Tests for expint_ei on the negative axis."""

    def test_minus_one(self):
        """Test Ei(-1) against the defining integral."""
        oracle, _ = integrate.quad(lambda t: math.exp(-t) / t, 1.0, math.inf, epsabs=1e-14)
        assert expint_ei(-1.0) == pytest.approx(-oracle, abs=1e-10)
        assert expint_ei(-1.0) == pytest.approx(-0.2193839344, abs=1e-10)

    def test_minus_ten(self):
        """Test |Ei(-10)| is tiny."""
        assert abs(expint_ei(-10.0)) < 5e-6

    def test_against_scipy(self):
        """Test agreement with scipy.special.expi on [-50, -1e-6]."""
        grid = -np.geomspace(1e-6, 50.0, 200)
        values = np.array([expint_ei(x) for x in grid])
        np.testing.assert_allclose(values, special.expi(grid), rtol=0, atol=1e-10)

    def test_domain(self):
        """Test nonnegative arguments are rejected."""
        with pytest.raises(DomainError):
            expint_ei(0.0)
        with pytest.raises(DomainError):
            expint_ei(1.0)


class TestGumbelConstants:
    """Tests for the |log X| Weibull constants."""

    def test_mean(self):
        """Test gamma - 2 Ei(-1) = 1.01598."""
        assert EULER_GAMMA - 2.0 * expint_ei(-1.0) == pytest.approx(1.01598, abs=5e-6)
        assert abslog_gumbel_mean() == pytest.approx(1.01598, abs=5e-6)

    def test_variance(self):
        """Test pi^2/6 + 4 (gamma - Ei(-1)) Ei(-1) = 0.945889."""
        assert abslog_gumbel_variance() == pytest.approx(0.945889, abs=5e-6)

    def test_against_quadrature(self):
        """Test both constants against quadrature over the Gumbel density."""
        def density(w):
            if w < -40.0:
                return 0.0
            return math.exp(-w - math.exp(-w))

        first, _ = integrate.quad(lambda w: abs(w) * density(w), -math.inf, math.inf, epsabs=1e-13)
        second, _ = integrate.quad(lambda w: w * w * density(w), -math.inf, math.inf, epsabs=1e-13)
        assert abslog_gumbel_mean() == pytest.approx(first, abs=1e-8)
        assert abslog_gumbel_variance() == pytest.approx(second - first ** 2, abs=1e-8)
