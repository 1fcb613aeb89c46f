"""Unit tests for the shared errors and numeric helpers."""

import json
import math

import numpy as np
import pytest
from pydantic import BaseModel
from scipy import stats

from src.tools.shared_libraries.errors import (
    CatalogError,
    DomainError,
    EstimationInfeasibleError,
    ExperimentInvalidError,
    IntegrationError,
    InvalidInputError,
    InvalidSupportError,
    MomentOrdersError,
    NumericError,
    OutOfRangeError,
)
from src.tools.shared_libraries.helpers import (
    atomic_write_text,
    central_difference,
    convolve_on_grid,
    format_verdict_summary,
    integrate,
    jsonable,
    to_json_text,
)


class TestErrors:
    """Test the exception hierarchy and its exit codes."""

    @pytest.mark.parametrize(
        'error, code',
        [
            (DomainError('x'), 2),
            (CatalogError('x'), 2),
            (OutOfRangeError('x', (0.0, 1.0)), 2),
            (ExperimentInvalidError('x', failures=20, reps=1000), 2),
            (InvalidInputError('x'), 3),
            (InvalidSupportError('x'), 3),
            (IntegrationError('x', abserr=1.0), 4),
            (NumericError('x'), 4),
        ],
    )
    def test_exit_codes(self, error, code):
        """Test the exit code carried by each class."""
        assert isinstance(error, MomentOrdersError)
        assert error.exit_code == code

    def test_builtin_bases(self):
        """Test that domain and catalog errors are also ValueError and KeyError."""
        assert isinstance(DomainError('x'), ValueError)
        assert isinstance(CatalogError('x'), KeyError)
        assert isinstance(EstimationInfeasibleError('x', (0.0, 1.0)), OutOfRangeError)

    def test_catalog_message_unquoted(self):
        """Test that CatalogError prints its message without KeyError quoting."""
        assert str(CatalogError("unknown family 'pareto'")) == "unknown family 'pareto'"

    def test_details(self):
        """Test the class-specific fields of the error documents."""
        assert OutOfRangeError('x', (-math.inf, 0.0)).details() == {'interval': [-math.inf, 0.0]}
        assert InvalidInputError('x', line=4).details() == {'line': 4}
        assert InvalidInputError('x').details() == {}
        assert IntegrationError('x', abserr=0.5).details() == {'abserr': 0.5}
        assert ExperimentInvalidError('x', failures=3, reps=1000).details() == {'failures': 3, 'reps': 1000}


class TestIntegrate:
    """Test adaptive quadrature with acceptance checks."""

    def test_half_line(self):
        """Test the exponential density over (0, inf)."""
        assert integrate(lambda x: math.exp(-x), 0.0, math.inf) == pytest.approx(1.0, rel=1e-10)

    def test_real_line(self):
        """Test the normal density over the real line."""
        assert integrate(stats.norm.pdf, -math.inf, math.inf) == pytest.approx(1.0, rel=1e-10)

    def test_rejects_unconverged(self):
        """Test that a flagged quadrature with a large error estimate raises."""
        with pytest.raises(IntegrationError) as info:
            integrate(lambda x: math.sin(50.0 * x), 0.0, 100.0, limit=1)
        assert info.value.abserr > 1e-7


class TestCentralDifference:
    """Test numeric derivatives."""

    def test_first_derivative(self):
        """Test d/dx sin at 0.3."""
        assert central_difference(math.sin, 0.3) == pytest.approx(math.cos(0.3), rel=1e-8)

    def test_second_derivative(self):
        """Test d2/dx2 sin at 0.3."""
        assert central_difference(math.sin, 0.3, order=2) == pytest.approx(-math.sin(0.3), abs=1e-5)

    def test_bad_order(self):
        """Test that only orders 1 and 2 are supported."""
        with pytest.raises(ValueError):
            central_difference(math.sin, 0.3, order=3)


class TestConvolveOnGrid:
    """Test numeric convolution on a symmetric grid."""

    def test_normal_convolution(self):
        """Test that N(0, 1) * N(0, 1) is N(0, 2)."""
        x = np.linspace(-10.0, 10.0, 2001)
        f = stats.norm.pdf(x)
        got = convolve_on_grid(f, f, x[1] - x[0])
        np.testing.assert_allclose(got, stats.norm.pdf(x, scale=math.sqrt(2.0)), atol=1e-6)


class TestAtomicWriteText:
    """Test atomic file writes."""

    def test_creates_parents_and_overwrites(self, tmp_path):
        """Test writing into a new directory and overwriting in place."""
        target = tmp_path / 'nested' / 'out.json'
        atomic_write_text(target, 'first')
        atomic_write_text(target, 'second')
        assert target.read_text() == 'second'
        assert [p.name for p in target.parent.iterdir()] == ['out.json']


class _Record(BaseModel):
    value: float
    pair: tuple[float, float]


class TestJsonFormatting:
    """Test JSON conversion of reports."""

    def test_non_finite_floats(self):
        """Test that infinities and NaN become strings."""
        assert jsonable([math.inf, -math.inf, math.nan, 1.5]) == ['inf', '-inf', 'nan', 1.5]

    def test_numpy_and_models(self):
        """Test numpy scalars, arrays and pydantic models."""
        payload = {
            'array': np.array([1.0, 2.0]),
            'scalar': np.float64(0.25),
            'count': np.int64(3),
            'flag': np.bool_(True),
            'record': _Record(value=math.inf, pair=(0.0, 1.0)),
        }
        assert jsonable(payload) == {
            'array': [1.0, 2.0],
            'scalar': 0.25,
            'count': 3,
            'flag': True,
            'record': {'value': 'inf', 'pair': [0.0, 1.0]},
        }

    def test_document_is_sorted_and_terminated(self):
        """Test key order and the trailing newline."""
        text = to_json_text({'b': 1, 'a': math.inf})
        assert text.endswith('\n')
        assert list(json.loads(text)) == ['a', 'b']

    def test_verdict_summary(self):
        """Test the one-line verdict summary."""
        assert format_verdict_summary('st', 'holds', 0.01234, 0.05) == (
            'st: holds (statistic=0.01234, threshold=0.05)'
        )
