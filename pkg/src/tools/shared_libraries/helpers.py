"""Shared helper functions for the numeric tools."""

import json
import logging
import math
import os
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel
from scipy import integrate as _integrate

from .errors import IntegrationError


logger = logging.getLogger(__name__)

# Requested QUADPACK accuracy.
QUAD_EPSREL = 1e-9
QUAD_EPSABS = 1e-12
# Achieved error above which a non-converged quadrature is rejected.
QUAD_ACCEPT = 1e-7


def integrate(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    epsabs: float = QUAD_EPSABS,
    epsrel: float = QUAD_EPSREL,
    limit: int = 200,
) -> float:
    """Integrate a scalar function over an interval, possibly unbounded.

    Uses QUADPACK's adaptive Gauss-Kronrod rule; infinite endpoints are
    mapped onto a finite interval by the library.

    Args:
        func: Integrand.
        lower: Lower limit, may be -inf.
        upper: Upper limit, may be +inf.
        epsabs: Absolute tolerance requested.
        epsrel: Relative tolerance requested.
        limit: Maximum number of subintervals.

    Returns:
        The integral value.

    Raises:
        IntegrationError: The rule reported failure and the achieved error
            estimate is above the acceptance threshold.
    """
    result = _integrate.quad(
        func, lower, upper,
        epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1,
    )
    value, abserr = float(result[0]), float(result[1])
    if len(result) > 3:
        accept = max(QUAD_ACCEPT, QUAD_ACCEPT * abs(value))
        if not math.isfinite(value) or abserr > accept:
            raise IntegrationError(
                f'Quadrature on ({lower}, {upper}) did not converge: {result[3]}',
                abserr=abserr,
            )
        logger.debug(f'quad on ({lower}, {upper}) flagged but accepted, abserr={abserr:.3e}')
    return value


def derivative_step(x: float) -> float:
    """Central-difference step balancing truncation and roundoff."""
    return max(1e-5, 1e-7 * abs(x))


def central_difference(func: Callable[[float], float], x: float, order: int = 1) -> float:
    """Numeric first or second derivative by central differences.

    Args:
        func: Function of one real variable.
        x: Evaluation point.
        order: 1 or 2.

    Returns:
        The derivative estimate.
    """
    h = derivative_step(x)
    if order == 1:
        return (func(x + h) - func(x - h)) / (2.0 * h)
    if order == 2:
        return (func(x + h) - 2.0 * func(x) + func(x - h)) / (h * h)
    raise ValueError(f'order must be 1 or 2, got {order}')


def convolve_on_grid(f_values: np.ndarray, g_values: np.ndarray, spacing: float) -> np.ndarray:
    """Numeric convolution of two functions tabulated on one uniform grid.

    The grid must be symmetric about zero so that the centered output is
    tabulated on the same points.

    Args:
        f_values: First function on the grid.
        g_values: Second function on the grid.
        spacing: Grid step.

    Returns:
        (f * g) on the same grid.
    """
    return np.convolve(f_values, g_values, mode='same') * spacing


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text to path via a temporary file and rename.

    Args:
        path: Destination file.
        text: Content, written as UTF-8.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{target.name}.', dir=target.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def format_verdict_summary(order: str, verdict: str, statistic: float, threshold: float) -> str:
    """Format one order-test outcome into a one-line summary.

    Args:
        order: Order name, e.g. "st" or "lr".
        verdict: "holds", "fails" or "inconclusive".
        statistic: Observed test statistic.
        threshold: Threshold it was compared with.

    Returns:
        Summary line.
    """
    return f'{order}: {verdict} (statistic={statistic:.4g}, threshold={threshold:.4g})'


def jsonable(value: Any) -> Any:
    """Convert reports into plain JSON values.

    Pydantic models are dumped, numpy scalars and arrays become Python
    numbers and lists, tuples become lists, and non-finite floats become
    the strings "inf", "-inf" and "nan".
    """
    if isinstance(value, BaseModel):
        return jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return 'nan'
        if math.isinf(number):
            return 'inf' if number > 0 else '-inf'
        return number
    return value


def to_json_text(payload: Any) -> str:
    """Deterministic JSON document for a report."""
    return json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + '\n'
