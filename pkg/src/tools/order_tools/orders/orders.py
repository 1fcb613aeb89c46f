"""Grid checkers for stochastic orders, total positivity and logconcavity.

Every checker reduces its defining inequality to margins d >= 0 evaluated
on a grid. With a local tolerance tol * max(1, |local magnitude|) a margin
below minus the tolerance is a violation and makes the verdict "fails";
small negative margins inside the tolerance are numerical noise, and when
they occur at 1% or more of the checked cells the verdict is
"inconclusive".
"""

import itertools
import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from observability import trace_span
from src.tools.distribution_tools.families.families import Family
from src.tools.shared_libraries.errors import DomainError, InvalidInputError, InvalidSupportError

from .models import DEFAULT_CLIP, Grid, OrderReport


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
MAX_WITNESSES = 100
EXHAUSTIVE_LIMIT = 12
SAMPLED_SUBSETS = 10_000

RealFn = Callable[[np.ndarray], np.ndarray]


def _verdict(
    margins: np.ndarray,
    magnitudes: np.ndarray,
    locations: Sequence[tuple[float, ...]],
    tol: float,
) -> OrderReport:
    margins = np.asarray(margins, dtype=float)
    valid = ~np.isnan(margins)
    checked = int(valid.sum())
    if checked == 0:
        return OrderReport(verdict='inconclusive', tolerance=tol, checked=0)

    local = tol * np.maximum(1.0, np.abs(np.asarray(magnitudes, dtype=float)))
    violated = valid & (margins < -local)
    noisy = valid & (margins < 0.0) & ~violated
    worst = float(max(0.0, -np.nanmin(margins)))

    if violated.any():
        witnesses = [locations[i] for i in np.flatnonzero(violated)[:MAX_WITNESSES]]
        return OrderReport(
            verdict='fails', witnesses=witnesses, max_violation=worst, tolerance=tol, checked=checked,
        )
    if noisy.sum() >= max(1, math.ceil(0.01 * checked)):
        witnesses = [locations[i] for i in np.flatnonzero(noisy)[:MAX_WITNESSES]]
        logger.warning(f'{int(noisy.sum())} of {checked} cells within tolerance of a violation')
        return OrderReport(
            verdict='inconclusive', witnesses=witnesses, max_violation=worst, tolerance=tol, checked=checked,
        )
    return OrderReport(verdict='holds', max_violation=worst, tolerance=tol, checked=checked)


def _pairs(x: np.ndarray) -> list[tuple[float, float]]:
    return [(float(a), float(b)) for a, b in zip(x[:-1], x[1:])]


@trace_span('orders.check_st')
def check_st(F: RealFn, G: RealFn, grid: Grid, tol: float = DEFAULT_TOL) -> OrderReport:
    """X <=_st Y, i.e. F(x) >= G(x) at every grid point, F being the CDF of X.

    Raises:
        InvalidInputError: A CDF value lies outside [0, 1] beyond 1e-9.
    """
    x = grid.as_array()
    f_values = np.asarray(F(x), dtype=float)
    g_values = np.asarray(G(x), dtype=float)
    for name, values in (('F', f_values), ('G', g_values)):
        if not np.all((values >= -1e-9) & (values <= 1.0 + 1e-9)):
            raise InvalidInputError(f'CDF {name} takes values outside [0, 1] on the grid')
    return _verdict(f_values - g_values, np.ones_like(x), [(float(v),) for v in x], tol)


def _log_values(func: RealFn, x: np.ndarray) -> np.ndarray:
    values = np.asarray(func(x), dtype=float)
    if np.any(values < 0.0):
        raise InvalidInputError('density takes negative values on the grid')
    with np.errstate(divide='ignore'):
        return np.log(values)


@trace_span('orders.check_lr')
def check_lr(f: RealFn, g: RealFn, grid: Grid, tol: float = DEFAULT_TOL) -> OrderReport:
    """X <=_lr Y, i.e. g(x)/f(x) nondecreasing on the grid.

    Works with log g - log f; a zero of f against a positive g counts as a
    ratio of +inf and the reverse as 0. Points where both densities vanish
    are skipped.
    """
    x = grid.as_array()
    log_f = _log_values(f, x)
    log_g = _log_values(g, x)
    keep = ~(np.isneginf(log_f) & np.isneginf(log_g))
    if keep.sum() < 2:
        logger.warning('check_lr: fewer than two grid points inside either support')
        return OrderReport(verdict='inconclusive', tolerance=tol, checked=0)

    ratio = log_g[keep] - log_f[keep]
    points = x[keep]
    with np.errstate(invalid='ignore'):
        margins = np.diff(ratio)
    same_infinity = np.isinf(ratio[:-1]) & (ratio[:-1] == ratio[1:])
    margins[same_infinity] = 0.0
    finite = np.where(np.isfinite(ratio), np.abs(ratio), 0.0)
    magnitudes = np.maximum(finite[:-1], finite[1:])
    return _verdict(margins, magnitudes, _pairs(points), tol)


@trace_span('orders.check_disp')
def check_disp(qF: RealFn, qG: RealFn, alpha_grid: Grid, tol: float = DEFAULT_TOL) -> OrderReport:
    """X <=_disp Y, i.e. G^{-1}(alpha) - F^{-1}(alpha) nondecreasing in alpha.

    Raises:
        DomainError: A grid level outside (0, 1).
        InvalidInputError: A non-finite quantile at an interior level.
    """
    alpha = alpha_grid.as_array()
    if alpha[0] <= 0.0 or alpha[-1] >= 1.0:
        raise DomainError('dispersive check needs levels strictly inside (0, 1)')
    q_f = np.asarray(qF(alpha), dtype=float)
    q_g = np.asarray(qG(alpha), dtype=float)
    if not (np.all(np.isfinite(q_f)) and np.all(np.isfinite(q_g))):
        raise InvalidInputError('quantile function is not finite at an interior level')
    gap = q_g - q_f
    scale = np.maximum(np.abs(q_f), np.abs(q_g))
    return _verdict(np.diff(gap), np.maximum(scale[:-1], scale[1:]), _pairs(alpha), tol)


@trace_span('orders.check_tp2_mixed')
def check_tp2_mixed(family: Family, x_grid: Grid, theta_grid: Grid, tol: float = DEFAULT_TOL) -> OrderReport:
    """TP2 of f(x; theta) from mixed differences over adjacent grid cells.

    Cells with all four log densities finite use
    log f(x', t') + log f(x, t) - log f(x', t) - log f(x, t'); cells touching
    a moving support boundary use the raw 2x2 minor with exact zeros.

    Raises:
        InvalidSupportError: A zero density inside the declared support.
    """
    x = x_grid.as_array()
    thetas = theta_grid.as_array()
    log_f = np.empty((x.size, thetas.size))
    for j, theta in enumerate(thetas):
        column = np.asarray(family.logpdf(x, float(theta)), dtype=float)
        inside = family.support(float(theta)).contains(x)
        vanished = inside & np.isneginf(column)
        if vanished.any():
            raise InvalidSupportError(
                f'{family.name}: zero density at x={x[vanished][0]} inside the support for theta={theta}'
            )
        log_f[:, j] = column

    a, b = log_f[:-1, :-1], log_f[1:, 1:]
    c, d = log_f[1:, :-1], log_f[:-1, 1:]
    corners = np.stack([a, b, c, d])
    all_finite = np.all(np.isfinite(corners), axis=0)

    with np.errstate(invalid='ignore'):
        mixed = (b + a) - (c + d)
    log_scale = np.max(np.where(np.isfinite(corners), np.abs(corners), 0.0), axis=0)

    with np.errstate(over='ignore', under='ignore'):
        main = np.exp(a) * np.exp(b)
        anti = np.exp(c) * np.exp(d)
    minor = main - anti
    minor_scale = np.maximum(main, anti)

    margins = np.where(all_finite, mixed, minor)
    magnitudes = np.where(all_finite, log_scale, minor_scale)
    locations = [
        (float(x[i]), float(x[i + 1]), float(thetas[j]), float(thetas[j + 1]))
        for i in range(x.size - 1)
        for j in range(thetas.size - 1)
    ]
    report = _verdict(margins.ravel(), magnitudes.ravel(), locations, tol)
    logger.info(f'{family.name}: TP2 mixed-difference check {report.verdict} over {report.checked} cells')
    return report


def _kernel_matrix(kernel: Callable[[float, float], float], x: np.ndarray, y: np.ndarray) -> np.ndarray:
    with np.errstate(over='ignore', under='ignore'):
        values = np.asarray(np.vectorize(kernel, otypes=[float])(x[:, None], y[None, :]), dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError('kernel is not finite on the grid')
    return values


def _ordered_subsets(size: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    keys = rng.random((count, size))
    return np.sort(np.argsort(keys, axis=1)[:, :m], axis=1)


@trace_span('orders.check_tpr_minors')
def check_tpr_minors(
    kernel: Callable[[float, float], float],
    x_grid: Grid,
    y_grid: Grid,
    r: int,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> OrderReport:
    """TP_r of a kernel from the signs of its minors of order up to r.

    Minors over ordered index subsets are enumerated exhaustively when both
    grids have at most 12 points; otherwise 10,000 random ordered subsets
    per order are drawn from a generator seeded with `seed`.

    Args:
        kernel: k(x, y) >= 0.
        x_grid: Row points.
        y_grid: Column points.
        r: Order, 2 to 4.
        tol: Relative tolerance on the Hadamard bound of each minor.
        seed: Seed for the sampled subsets.
    """
    if not 2 <= r <= 4:
        raise DomainError(f'TP order must be between 2 and 4, got {r}')
    x, y = x_grid.as_array(), y_grid.as_array()
    if min(x.size, y.size) < r:
        raise DomainError(f'TP_{r} check needs grids with at least {r} points')
    matrix = _kernel_matrix(kernel, x, y)
    exhaustive = max(x.size, y.size) <= EXHAUSTIVE_LIMIT
    rng = np.random.default_rng(seed)

    margins, magnitudes, locations = [matrix.ravel()], [np.abs(matrix.ravel())], []
    locations.extend((float(xi), float(yj)) for xi in x for yj in y)
    for m in range(2, r + 1):
        if exhaustive:
            row_sets = np.array(list(itertools.combinations(range(x.size), m)))
            col_sets = np.array(list(itertools.combinations(range(y.size), m)))
            rows = np.repeat(row_sets, len(col_sets), axis=0)
            cols = np.tile(col_sets, (len(row_sets), 1))
        else:
            rows = _ordered_subsets(x.size, m, SAMPLED_SUBSETS, rng)
            cols = _ordered_subsets(y.size, m, SAMPLED_SUBSETS, rng)
        blocks = matrix[rows[:, :, None], cols[:, None, :]]
        margins.append(np.linalg.det(blocks))
        magnitudes.append(np.prod(np.linalg.norm(blocks, axis=2), axis=1))
        locations.extend(tuple(x[ri].tolist() + y[ci].tolist()) for ri, ci in zip(rows, cols))

    report = _verdict(np.concatenate(margins), np.concatenate(magnitudes), locations, tol)
    logger.debug(f'TP_{r} minors: {report.verdict} over {report.checked} minors, exhaustive={exhaustive}')
    return report


@trace_span('orders.check_logconcave')
def check_logconcave(f: RealFn, grid: Grid, tol: float = DEFAULT_TOL) -> OrderReport:
    """Logconcavity of a nonnegative function from divided differences of log f.

    Zeros are allowed only at the ends of the grid; a zero between positive
    values breaks the interval support and is reported as a violation.

    Raises:
        InvalidInputError: f is negative somewhere on the grid.
    """
    x = grid.as_array()
    log_f = _log_values(f, x)
    positive = np.flatnonzero(np.isfinite(log_f))
    if positive.size == 0:
        return OrderReport(verdict='inconclusive', tolerance=tol, checked=0)

    first, last = positive[0], positive[-1]
    gaps = [i for i in range(first, last + 1) if not np.isfinite(log_f[i])]
    if gaps:
        worst = float(np.exp(np.max(log_f[first:last + 1])))
        witnesses = [(float(x[i]),) for i in gaps[:MAX_WITNESSES]]
        return OrderReport(verdict='fails', witnesses=witnesses, max_violation=worst, tolerance=tol, checked=last - first + 1)

    xs, ls = x[first:last + 1], log_f[first:last + 1]
    if xs.size < 3:
        return OrderReport(verdict='inconclusive', tolerance=tol, checked=0)
    slopes = np.diff(ls) / np.diff(xs)
    margins = slopes[:-1] - slopes[1:]
    magnitudes = np.maximum(np.abs(slopes[:-1]), np.abs(slopes[1:]))
    locations = [(float(xs[i]), float(xs[i + 1]), float(xs[i + 2])) for i in range(xs.size - 2)]
    return _verdict(margins, magnitudes, locations, tol)


def check_pf2(f: RealFn, grid: Grid, tol: float = DEFAULT_TOL, seed: int = 0) -> OrderReport:
    """PF2 of f: the translation kernel f(x - y) is TP2."""
    return check_tpr_minors(lambda a, b: float(f(np.asarray(a - b))), grid, grid, 2, tol=tol, seed=seed)


def check_monotone(
    values: Sequence[float] | np.ndarray,
    grid: Grid,
    direction: str = 'increasing',
    tol: float = DEFAULT_TOL,
) -> OrderReport:
    """Monotonicity of tabulated values in the given direction."""
    arr = np.asarray(values, dtype=float)
    if arr.size != len(grid):
        raise InvalidInputError(f'{arr.size} values for a grid of {len(grid)} points')
    steps = np.diff(arr) if direction == 'increasing' else -np.diff(arr)
    magnitudes = np.maximum(np.abs(arr[:-1]), np.abs(arr[1:]))
    return _verdict(steps, magnitudes, _pairs(grid.as_array()), tol)


def sign_sequence(values: Sequence[float] | np.ndarray) -> list[int]:
    """Signs of the values with zeros deleted and repeats collapsed, e.g. [-1, 1]."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DomainError('sign_sequence needs at least one value')
    signs = np.sign(arr[arr != 0.0]).astype(int)
    if signs.size == 0:
        return []
    keep = np.concatenate([[True], signs[1:] != signs[:-1]])
    return signs[keep].tolist()


def sign_changes(values: Sequence[float] | np.ndarray) -> int:
    """Number of sign alternations after deleting zeros."""
    return max(0, len(sign_sequence(values)) - 1)


def family_x_grid(
    family: Family,
    thetas: Sequence[float] | np.ndarray,
    size: int,
    clip: float = DEFAULT_CLIP,
) -> Grid:
    """Pooled quantile-spaced x points of the members at the extreme thetas."""
    low, high = float(np.min(thetas)), float(np.max(thetas))
    half = max(2, size // 2)
    pooled = np.concatenate([
        Grid.quantile_spaced(lambda u: family.quantile(u, low), half, clip).as_array(),
        Grid.quantile_spaced(lambda u: family.quantile(u, high), size - half, clip).as_array(),
    ])
    points = np.unique(pooled)
    return Grid(points=points.tolist(), source='quantile-spaced')
