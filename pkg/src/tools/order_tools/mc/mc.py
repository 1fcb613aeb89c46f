"""Monte Carlo harness for order preservation by moment estimators.

Each replicate draws its sample from its own counter-based substream
Philox(SeedSequence([seed, theta_index, replicate])), so a run is
reproducible bit for bit whatever the number of workers.
"""

import csv
import io
import logging
import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from observability import trace_operation, trace_span
from src.tools.distribution_tools.families.families import ExpFamily, Family, make_builtin, monotonicity_flags
from src.tools.distribution_tools.moments.moments import estimate, make_spec, moment_function
from src.tools.math_tools.specfun.specfun import abslog_gumbel_mean, abslog_gumbel_variance
from src.tools.order_tools.orders.models import Grid, Verdict
from src.tools.order_tools.orders.orders import (
    check_logconcave,
    check_monotone,
    check_tp2_mixed,
    family_x_grid,
)
from src.tools.shared_libraries.errors import (
    DegenerateSampleWarning,
    DomainError,
    ExperimentInvalidError,
    InvalidInputError,
    MomentOrdersError,
    NumericError,
)
from src.tools.shared_libraries.helpers import atomic_write_text, format_verdict_summary, to_json_text

from .models import (
    EmpiricalLrReport,
    EmpiricalStReport,
    McConfig,
    McResult,
    SampleSummary,
    Theorem,
)


logger = logging.getLogger(__name__)

MIN_EMPIRICAL_SIZE = 1000
MAX_FAILURE_RATE = 0.01
HYPOTHESIS_X_POINTS = 128
HYPOTHESIS_THETA_POINTS = 16
# Relative slack below which m2 - m1^2 counts as roundoff.
VARIANCE_ROUNDOFF = 1e-12

_SEVERITY: dict[str, int] = {'holds': 0, 'inconclusive': 1, 'fails': 2}

Estimator = Callable[[np.ndarray], float]


def replicate_rng(seed: int, theta_index: int, replicate: int) -> np.random.Generator:
    """Independent generator for one replicate."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, theta_index, replicate])))


def _worst(verdicts: Sequence[Verdict]) -> Verdict:
    return max(verdicts, key=lambda v: _SEVERITY[v])


# Estimators ----------------------------------------------------------------


def scale_estimators(sample, constant: float, mode: str, k: int = 1) -> float:
    """Scale estimators on nonnegative data.

    mode "kth-moment" gives (m_k / mu_k)^(1/k) and mode "sample-sd" gives
    sqrt(m_2 - m_1^2) / sigma, with constant = mu_k or sigma of the member
    at theta = 1.

    Raises:
        InvalidInputError: Empty sample or negative values.
        DomainError: Non-positive constant, unknown mode, or sample-sd on a
            single observation.
        NumericError: m_2 - m_1^2 negative beyond roundoff.
    """
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError('sample is empty')
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise InvalidInputError('scale estimators need finite nonnegative observations')
    if not constant > 0.0:
        raise DomainError(f'scale constant must be positive, got {constant}')

    if mode == 'kth-moment':
        if k < 1:
            raise DomainError(f'moment order must be >= 1, got {k}')
        return float((np.mean(arr ** k) / constant) ** (1.0 / k))
    if mode != 'sample-sd':
        raise DomainError(f"unknown scale estimator mode '{mode}'")
    if arr.size < 2:
        raise DomainError('sample-sd needs at least 2 observations')

    m1, m2 = float(np.mean(arr)), float(np.mean(arr * arr))
    variance = m2 - m1 * m1
    if abs(variance) <= VARIANCE_ROUNDOFF * m2:
        warnings.warn('constant sample; sample-sd estimate is 0', DegenerateSampleWarning, stacklevel=2)
        return 0.0
    if variance < 0.0:
        raise NumericError(f'm2 - m1^2 = {variance:.3e} is negative beyond roundoff')
    return math.sqrt(variance) / constant


def spacings(sample) -> np.ndarray:
    """U_i = X_(i) - X_(i-1) with X_(0) = 0."""
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError('sample is empty')
    return np.diff(np.sort(arr), prepend=0.0)


def variance_from_spacings(u) -> float:
    """(1/n^2) sum over i < j of (U_(i+1) + ... + U_j)^2, equal to m_2 - m_1^2."""
    u = np.asarray(u, dtype=float).ravel()
    n = u.size
    if n == 0:
        raise InvalidInputError('no spacings')
    order_stats = np.cumsum(u)
    gaps = np.subtract.outer(order_stats, order_stats)
    return float(np.sum(np.triu(gaps.T, k=1) ** 2) / n ** 2)


def _member_moment(family: Family, selector: str, theta: float) -> float:
    return moment_function(make_spec(family, selector), theta)


def _require_positive_scale(family: Family, estimator: str) -> None:
    if family.kind != 'scale' or family.sample_space.lower < 0.0:
        raise DomainError(f'{estimator} needs a scale family on the positive half-line, got {family.name}')


def build_estimator(cfg: McConfig, family: Family) -> Estimator:
    """Map a sample to theta_hat for the configured estimator.

    Raises:
        DomainError: The estimator does not apply to the family.
    """
    if cfg.estimator == 'moment-spec':
        spec = make_spec(family, cfg.spec)
        return lambda x: estimate(spec, x).theta_hat

    if cfg.estimator == 'location-mean':
        if family.kind != 'location':
            raise DomainError(f'location-mean needs a location family, got {family.name}')
        mu1 = _member_moment(family, 'mean', 0.0)
        return lambda x: float(np.mean(x)) - mu1

    if cfg.estimator == 'scale-kth-moment':
        _require_positive_scale(family, cfg.estimator)
        mu_k = _member_moment(family, f'k-th:{cfg.k}', 1.0)
        return lambda x: scale_estimators(x, mu_k, 'kth-moment', cfg.k)

    if cfg.estimator == 'scale-sample-sd':
        _require_positive_scale(family, cfg.estimator)
        m1 = _member_moment(family, 'mean', 1.0)
        m2 = _member_moment(family, 'k-th:2', 1.0)
        sigma = math.sqrt(m2 - m1 * m1)
        return lambda x: scale_estimators(x, sigma, 'sample-sd')

    if family.name != 'weibull_theta':
        raise DomainError(f'{cfg.estimator} applies to weibull_theta only, got {family.name}')
    if cfg.estimator == 'weibull-abslog-sd':
        sigma = math.sqrt(abslog_gumbel_variance())
        return lambda x: scale_estimators(np.abs(np.log(x)), sigma, 'sample-sd')
    mu = abslog_gumbel_mean()
    return lambda x: scale_estimators(np.abs(np.log(x)), mu, 'kth-moment', 1)


def _run_chunk(
    cfg: McConfig,
    family: Family,
    estimator: Estimator,
    theta: float,
    theta_index: int,
    replicates: range,
) -> tuple[list[float], list[int]]:
    values: list[float] = []
    failed: list[int] = []
    for rep in replicates:
        try:
            sample = family.sample(theta, replicate_rng(cfg.seed, theta_index, rep), cfg.n)
            values.append(float(estimator(np.atleast_1d(sample))))
        except MomentOrdersError as exc:
            logger.debug(f'replicate {rep} at theta={theta} failed: {exc}')
            failed.append(rep)
    return values, failed


def _chunks(reps: int, workers: int) -> list[range]:
    bounds = np.linspace(0, reps, min(workers, reps) + 1).astype(int)
    return [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _simulate(
    cfg: McConfig,
    family: Family,
    estimator: Estimator,
    theta: float,
    theta_index: int,
) -> tuple[np.ndarray, list[int]]:
    family.check_theta(theta)
    chunks = _chunks(cfg.reps, cfg.workers)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', DegenerateSampleWarning)
        if len(chunks) == 1:
            parts = [_run_chunk(cfg, family, estimator, theta, theta_index, chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                parts = list(pool.map(
                    lambda reps: _run_chunk(cfg, family, estimator, theta, theta_index, reps), chunks,
                ))
    values = np.array([v for part, _ in parts for v in part], dtype=float)
    failed = [rep for _, part in parts for rep in part]

    if failed:
        logger.warning(f'{family.name} theta={theta}: {len(failed)} of {cfg.reps} replicates infeasible')
    if len(failed) > MAX_FAILURE_RATE * cfg.reps:
        raise ExperimentInvalidError(
            f'{len(failed)} of {cfg.reps} replicates were infeasible at theta={theta}',
            failures=len(failed), reps=cfg.reps,
        )
    return values, failed


@trace_span('mc.estimator_distribution')
def estimator_distribution(cfg: McConfig, theta: float, theta_index: int = 0) -> tuple[np.ndarray, int]:
    """Sampling distribution of the configured estimator at theta.

    Args:
        cfg: Experiment configuration.
        theta: Parameter value the samples are drawn at.
        theta_index: Substream index, 0 for theta1 and 1 for theta2.

    Returns:
        (estimates in replicate order, number of infeasible replicates).

    Raises:
        ExperimentInvalidError: More than 1% of replicates were infeasible.
    """
    family = make_builtin(cfg.family, cfg.params)
    values, failed = _simulate(cfg, family, build_estimator(cfg, family), theta, theta_index)
    return values, len(failed)


# Empirical order tests -----------------------------------------------------


def _checked_lists(samples1, samples2, minimum: int = MIN_EMPIRICAL_SIZE) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.asarray(samples1, dtype=float).ravel()
    s2 = np.asarray(samples2, dtype=float).ravel()
    if min(s1.size, s2.size) < minimum:
        raise DomainError(f'empirical order tests need >= {minimum} values per list, got {s1.size} and {s2.size}')
    if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
        raise InvalidInputError('empirical samples contain non-finite values')
    return s1, s2


def dkw_epsilon(size: int, confidence: float) -> float:
    """Half-width of the DKW band for one ECDF at the given confidence."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * size))


@trace_span('mc.empirical_st')
def empirical_st(samples1, samples2, confidence: float = 0.999) -> EmpiricalStReport:
    """Test samples1 <=_st samples2 from the ECDFs.

    The statistic is the largest excess of ECDF2 over ECDF1. It is compared
    with eps = eps1 + eps2, the sum of the per-sample DKW half-widths: up to
    eps the order holds, above 2 eps it fails, in between the run is
    inconclusive.
    """
    if not 0.9 < confidence < 1.0:
        raise DomainError(f'confidence must lie in (0.9, 1), got {confidence}')
    s1, s2 = _checked_lists(samples1, samples2)
    s1.sort()
    s2.sort()
    pooled = np.concatenate([s1, s2])
    excess = (
        np.searchsorted(s2, pooled, side='right') / s2.size
        - np.searchsorted(s1, pooled, side='right') / s1.size
    )
    at = int(np.argmax(excess))
    statistic = max(0.0, float(excess[at]))
    eps = dkw_epsilon(s1.size, confidence) + dkw_epsilon(s2.size, confidence)

    if statistic <= eps:
        verdict: Verdict = 'holds'
    elif statistic > 2.0 * eps:
        verdict = 'fails'
    else:
        verdict = 'inconclusive'
    logger.info(format_verdict_summary('st', verdict, statistic, eps))
    return EmpiricalStReport(
        verdict=verdict, statistic=statistic, threshold=eps, confidence=confidence,
        location=float(pooled[at]) if statistic > 0.0 else None, sizes=(s1.size, s2.size),
    )


@trace_span('mc.empirical_lr')
def empirical_lr(samples1, samples2, bins: int = 20) -> EmpiricalLrReport:
    """Test samples1 <=_lr samples2 from binned count ratios.

    Bins are pooled quantiles. The smoothed ratios (c2 + 1/2) / (c1 + 1/2)
    must be nondecreasing across the bins. The measure is the inversion mass
    of their logs: the count-weighted mean distance to the weighted isotonic
    fit, which is 0 for a nondecreasing sequence. The order holds up to
    2 sqrt(bins / reps) with reps the mean list size, fails above twice that
    and is inconclusive in between.
    """
    if bins < 5:
        raise DomainError(f'empirical_lr needs >= 5 bins, got {bins}')
    s1, s2 = _checked_lists(samples1, samples2)
    pooled = np.concatenate([s1, s2])
    edges = np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1)))
    reps = 0.5 * (s1.size + s2.size)
    threshold = 2.0 * math.sqrt(bins / reps)
    if edges.size < 3:
        logger.warning(f'pooled sample has {edges.size} distinct quantile edges; lr test is inconclusive')
        return EmpiricalLrReport(
            verdict='inconclusive', measure=0.0, threshold=threshold, bin_edges=edges.tolist(),
            counts1=[], counts2=[], ratios=[],
        )

    inner = edges[1:-1]
    counts1 = np.bincount(np.searchsorted(inner, s1, side='right'), minlength=edges.size - 1)
    counts2 = np.bincount(np.searchsorted(inner, s2, side='right'), minlength=edges.size - 1)
    ratios = (counts2 + 0.5) / (counts1 + 0.5)
    log_ratios = np.log(ratios)
    weights = counts1 + counts2 + 1.0
    fit = isotonic_regression(log_ratios, weights=weights, increasing=True).x
    measure = float(np.sum(weights * np.abs(log_ratios - fit)) / np.sum(weights))

    if measure <= threshold:
        verdict: Verdict = 'holds'
    elif measure > 2.0 * threshold:
        verdict = 'fails'
    else:
        verdict = 'inconclusive'
    logger.info(format_verdict_summary('lr', verdict, measure, threshold))
    return EmpiricalLrReport(
        verdict=verdict, measure=measure, threshold=threshold, bin_edges=edges.tolist(),
        counts1=counts1.tolist(), counts2=counts2.tolist(),
        ratios=ratios.tolist(),
    )


# Theorem harness -----------------------------------------------------------


_THEOREM_ESTIMATORS: dict[str, frozenset[str]] = {
    't3-lr': frozenset({'moment-spec'}),
    't4-st': frozenset({'moment-spec'}),
    't5-st': frozenset({'moment-spec'}),
    'location-lr': frozenset({'location-mean'}),
    'scale-st': frozenset({'scale-kth-moment', 'scale-sample-sd', 'weibull-abslog-sd', 'weibull-abslog-mean'}),
}


def _theta_grid(theta_pair: tuple[float, float]) -> Grid:
    low, high = theta_pair
    if low > 0.0:
        return Grid.log_spaced(low, high, HYPOTHESIS_THETA_POINTS)
    return Grid.linspace(low, high, HYPOTHESIS_THETA_POINTS)


def _guarded(name: str, check: Callable[[], Verdict]) -> Verdict:
    try:
        return check()
    except MomentOrdersError as exc:
        logger.warning(f'hypothesis {name} could not be checked: {exc}')
        return 'inconclusive'


def _g_monotone(cfg: McConfig, family: Family, x_grid: Grid) -> Verdict:
    values = make_spec(family, cfg.spec).g(x_grid.as_array())
    up = check_monotone(values, x_grid, 'increasing').verdict
    down = check_monotone(values, x_grid, 'decreasing').verdict
    return min(up, down, key=lambda v: _SEVERITY[v])


def _eta_t_aligned(family: Family, x_grid: Grid, theta_grid: Grid) -> Verdict:
    if not isinstance(family, ExpFamily):
        return 'fails'
    flags = monotonicity_flags(family, x_grid.as_array(), theta_grid.as_array())
    if flags['eta_increasing'] is None or flags['t_increasing'] is None:
        return 'fails'
    return 'holds'


def check_hypotheses(cfg: McConfig, family: Family, which: Theorem) -> dict[str, Verdict]:
    """Grid checks of the sufficient conditions behind each preservation result.

    Unmet conditions are reported and never stop the simulation.
    """
    thetas = _theta_grid(cfg.theta_pair)
    x_grid = family_x_grid(family, cfg.theta_pair, HYPOTHESIS_X_POINTS)

    def logconcave() -> Verdict:
        return _worst([
            check_logconcave(lambda x, t=t: family.density(x, t), x_grid).verdict for t in cfg.theta_pair
        ])

    checks: dict[str, Callable[[], Verdict]] = {}
    if which in ('t3-lr', 't4-st'):
        checks['tp2'] = lambda: check_tp2_mixed(family, x_grid, thetas).verdict
        checks['g_monotone'] = lambda: _g_monotone(cfg, family, x_grid)
    if which == 't3-lr':
        checks['logconcave'] = logconcave
        checks['mean_statistic'] = lambda: 'holds' if cfg.spec in ('mean', 'T') else 'fails'
    if which == 't5-st':
        checks['eta_t_monotone'] = lambda: _eta_t_aligned(family, x_grid, thetas)
        checks['sufficient_statistic'] = lambda: 'holds' if cfg.spec == 'T' else 'fails'
    if which == 'location-lr':
        checks['location_family'] = lambda: 'holds' if family.kind == 'location' else 'fails'
        checks['logconcave'] = logconcave
    if which == 'scale-st':
        scale_on_positive = family.kind == 'scale' and family.sample_space.lower >= 0.0
        checks['positive_scale_family'] = lambda: (
            'holds' if scale_on_positive or cfg.estimator.startswith('weibull') else 'fails'
        )
    return {name: _guarded(name, check) for name, check in checks.items()}


def _summary(values: np.ndarray, failures: int) -> SampleSummary:
    return SampleSummary(
        mean=float(np.mean(values)),
        variance=float(np.var(values, ddof=1)) if values.size > 1 else 0.0,
        size=int(values.size),
        failures=failures,
    )


@trace_operation('mc.verify_theorem', capture_input=True, capture_output=False)
def verify_theorem(cfg: McConfig, which: Theorem) -> McResult:
    """Simulate the estimator at theta1 < theta2 and test the preserved order.

    Args:
        cfg: Experiment configuration.
        which: t3-lr, t4-st, t5-st, location-lr or scale-st.

    Returns:
        Both sampling distributions, the empirical st report, the empirical
        lr report for the lr variants, and the hypothesis verdicts.

    Raises:
        DomainError: The estimator does not belong to the chosen result or
            does not apply to the family.
        ExperimentInvalidError: Too many infeasible replicates.
    """
    if which not in _THEOREM_ESTIMATORS:
        raise DomainError(f"unknown preservation result '{which}'; known: {', '.join(_THEOREM_ESTIMATORS)}")
    if cfg.estimator not in _THEOREM_ESTIMATORS[which]:
        raise DomainError(
            f"{which} is verified with {sorted(_THEOREM_ESTIMATORS[which])}, not '{cfg.estimator}'"
        )
    family = make_builtin(cfg.family, cfg.params)
    for theta in cfg.theta_pair:
        family.check_theta(theta)
    estimator = build_estimator(cfg, family)

    hypotheses = check_hypotheses(cfg, family, which)
    met = all(v == 'holds' for v in hypotheses.values())
    if not met:
        logger.warning(f'{which} on {family.name}: hypotheses not all met {hypotheses}')

    logger.info(
        f'simulating {which} for {family.name} ({cfg.estimator}) at {cfg.theta_pair}: '
        f'n={cfg.n}, reps={cfg.reps}, workers={cfg.workers}'
    )
    values1, failed1 = _simulate(cfg, family, estimator, cfg.theta_pair[0], 0)
    values2, failed2 = _simulate(cfg, family, estimator, cfg.theta_pair[1], 1)

    st_report = empirical_st(values1, values2, cfg.confidence)
    lr_report = empirical_lr(values1, values2, cfg.bins) if which.endswith('-lr') else None

    return McResult(
        config=cfg,
        theorem=which,
        samples1=values1.tolist(),
        samples2=values2.tolist(),
        failed_replicates1=failed1,
        failed_replicates2=failed2,
        st_report=st_report,
        lr_report=lr_report,
        hypotheses=hypotheses,
        hypotheses_met=met,
        summary={'theta1': _summary(values1, len(failed1)), 'theta2': _summary(values2, len(failed2))},
    )


@trace_span('mc.consistency_profile')
def consistency_profile(
    cfg: McConfig,
    theta: float,
    sizes: Sequence[int] = (10, 100, 1000),
) -> list[dict[str, float]]:
    """Median absolute error of the estimator at theta for growing n."""
    family = make_builtin(cfg.family, cfg.params)
    rows = []
    for index, n in enumerate(sizes):
        sized = cfg.model_copy(update={'n': int(n)})
        values, failed = _simulate(sized, family, build_estimator(sized, family), theta, index)
        rows.append({
            'n': int(n),
            'median_abs_error': float(np.median(np.abs(values - theta))),
            'failures': len(failed),
        })
        logger.debug(f'{family.name} n={n}: median |theta_hat - theta| = {rows[-1]["median_abs_error"]:.4g}')
    return rows


# Export --------------------------------------------------------------------


def write_json(result: McResult, path: str | Path) -> None:
    """Write the full result as a JSON document."""
    atomic_write_text(path, to_json_text(result))


def _replicate_rows(values: Sequence[float], failed: Sequence[int], reps: int) -> list[tuple[int, float]]:
    skipped = set(failed)
    kept = [rep for rep in range(reps) if rep not in skipped]
    return list(zip(kept, values))


def write_csv(result: McResult, path: str | Path) -> None:
    """One row per replicate: replicate, theta, theta_hat."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['replicate', 'theta', 'theta_hat'])
    theta1, theta2 = result.config.theta_pair
    for theta, values, failed in (
        (theta1, result.samples1, result.failed_replicates1),
        (theta2, result.samples2, result.failed_replicates2),
    ):
        for rep, value in _replicate_rows(values, failed, result.config.reps):
            writer.writerow([rep, repr(float(theta)), repr(float(value))])
    atomic_write_text(path, buffer.getvalue())
