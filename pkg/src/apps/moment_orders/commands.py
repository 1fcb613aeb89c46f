"""Command implementations behind the moment-orders CLI.

Each cmd_* function takes a resolved RunRequest and returns the exit status
and the JSON report. Library exceptions are turned into error documents here
and nowhere else.
"""

import csv
import functools
import io
import logging
import math
from collections.abc import Callable, Sequence
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from observability import trace_operation
from src.tools.distribution_tools.families.families import ExpFamily, Family, make_builtin, monotonicity_flags
from src.tools.distribution_tools.moments.moments import estimate, make_spec, moment_function
from src.tools.order_tools.mc.mc import verify_theorem, write_csv
from src.tools.order_tools.mc.models import EstimatorKind, McConfig, McResult, Theorem
from src.tools.order_tools.orders.models import Grid, OrderReport
from src.tools.order_tools.orders.orders import (
    check_disp,
    check_logconcave,
    check_lr,
    check_monotone,
    check_st,
    check_tp2_mixed,
    family_x_grid,
)
from src.tools.shared_libraries.errors import DomainError, InvalidInputError, MomentOrdersError
from src.tools.shared_libraries.helpers import atomic_write_text, format_verdict_summary, jsonable, to_json_text

from .settings import Settings


logger = logging.getLogger(__name__)

Command = Literal['estimate', 'check-family', 'check-order', 'simulate']

LOGCONCAVE_THETAS = 5

DEFAULT_THEOREM: dict[str, Theorem] = {
    'moment-spec': 't4-st',
    'location-mean': 'location-lr',
    'scale-kth-moment': 'scale-st',
    'scale-sample-sd': 'scale-st',
    'weibull-abslog-sd': 'scale-st',
    'weibull-abslog-mean': 'scale-st',
}


class RunRequest(BaseModel):
    """Everything a command needs; settings are already merged in."""

    model_config = ConfigDict(frozen=True)

    command: Command
    spec_version: str
    family: str
    params: dict[str, float] = Field(default_factory=dict)
    spec: str = 'mean'
    estimator: EstimatorKind = 'moment-spec'
    theorem: Theorem | None = None
    k: int = Field(default=1, ge=1)
    input_path: str | None = None
    theta: float | None = None
    theta2: float | None = None
    n: int | None = Field(default=None, ge=1)
    reps: int | None = Field(default=None, ge=1000)
    seed: int = Field(ge=0, lt=2 ** 64)
    grid_size: int = Field(ge=4)
    param_grid_size: int = Field(ge=2)
    confidence: float = Field(gt=0.9, lt=1.0)
    bins: int = Field(ge=5)
    tolerance: float = Field(gt=0.0)
    quantile_clip: float = Field(gt=0.0, lt=0.5)
    workers: int = Field(ge=1)
    output_path: str | None = None
    csv_output_path: str | None = None
    output_format: Literal['json', 'csv'] = 'json'

    @model_validator(mode='after')
    def _required_fields(self) -> 'RunRequest':
        required = {
            'estimate': ('input_path',),
            'check-family': ('theta', 'theta2'),
            'check-order': ('theta', 'theta2'),
            'simulate': ('theta', 'theta2', 'n', 'reps'),
        }[self.command]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.command} requires {", ".join(missing)}')
        if self.theta is not None and self.theta2 is not None and not self.theta < self.theta2:
            raise ValueError(f'theta must be smaller than theta2, got {self.theta} and {self.theta2}')
        return self


def parse_params(pairs: Sequence[str]) -> dict[str, float]:
    """Parse repeated k=v flags into fixed parameters.

    Raises:
        InvalidInputError: A pair without "=" or with a non-numeric value.
    """
    params: dict[str, float] = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise InvalidInputError(f"--param expects key=value, got '{pair}'")
        try:
            params[key.strip()] = float(value)
        except ValueError as exc:
            raise InvalidInputError(f"--param {key.strip()} is not a number: '{value}'") from exc
    return params


def build_request(command: Command, settings: Settings, flags: dict[str, Any]) -> RunRequest:
    """Merge command flags over the settings defaults.

    Raises:
        InvalidInputError: Malformed --param flags.
        DomainError: Missing or invalid request fields.
    """
    values: dict[str, Any] = {
        'spec_version': settings.spec_version,
        'seed': settings.seed,
        'grid_size': settings.grid_size,
        'param_grid_size': settings.param_grid_size,
        'confidence': settings.confidence,
        'bins': settings.bins,
        'tolerance': settings.tolerance,
        'quantile_clip': settings.quantile_clip,
        'workers': settings.workers,
    }
    flags = dict(flags)
    values['params'] = parse_params(flags.pop('params', ()) or ())
    values.update({key: value for key, value in flags.items() if value is not None})
    try:
        return RunRequest(command=command, **values)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = '.'.join(str(part) for part in first['loc']) or 'request'
        raise DomainError(f'invalid {command} request: {where}: {first["msg"]}') from exc


def read_sample_csv(path: str) -> np.ndarray:
    """Read one numeric value per line with an optional header line "x".

    Raises:
        InvalidInputError: Missing or empty file, or a malformed line (the
            1-based line number is attached).
    """
    try:
        with open(path, encoding='utf-8', newline='') as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise InvalidInputError(f'cannot read {path}: {exc.strerror}') from exc
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f'{path} is not UTF-8') from exc

    while rows and not any(field.strip() for field in rows[-1]):
        rows.pop()
    values: list[float] = []
    for line, row in enumerate(rows, start=1):
        if line == 1 and [field.strip() for field in row] == ['x']:
            continue
        if len(row) != 1:
            raise InvalidInputError(f'line {line}: expected one value, got {len(row)} fields', line=line)
        text = row[0].strip()
        try:
            value = float(text)
        except ValueError as exc:
            raise InvalidInputError(f"line {line}: '{text}' is not a number", line=line) from exc
        if not math.isfinite(value):
            raise InvalidInputError(f'line {line}: non-finite value {text}', line=line)
        values.append(value)
    if not values:
        raise InvalidInputError(f'{path} contains no observations')
    return np.asarray(values, dtype=float)


def error_document(exc: BaseException) -> tuple[int, dict[str, Any]]:
    """Exit code and machine-readable description of a failure."""
    if isinstance(exc, MomentOrdersError):
        code = exc.exit_code
        document = {'error': type(exc).__name__, 'message': str(exc), 'exit_code': code, **exc.details()}
    else:
        code = 4
        document = {'error': type(exc).__name__, 'message': str(exc), 'exit_code': code}
    return code, document


def _reported(func: Callable[[RunRequest], dict[str, Any]]) -> Callable[[RunRequest], tuple[int, dict[str, Any]]]:
    """Run a command body and map failures to exit codes and error documents."""
    @functools.wraps(func)
    def wrapper(req: RunRequest) -> tuple[int, dict[str, Any]]:
        try:
            return 0, func(req)
        except MomentOrdersError as exc:
            logger.error(f'{req.command} failed: {exc}')
            return error_document(exc)
        except Exception as exc:
            logger.exception(f'{req.command} failed with an internal error')
            return error_document(exc)

    return wrapper


def _provenance(req: RunRequest) -> dict[str, Any]:
    return {'spec_version': req.spec_version, 'request': req.model_dump()}


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _write_output(req: RunRequest, report: dict[str, Any], csv_text: Callable[[], str]) -> None:
    if req.output_path is None:
        return
    text = to_json_text(report) if req.output_format == 'json' else csv_text()
    atomic_write_text(req.output_path, text)
    logger.info(f'wrote {req.output_format} report to {req.output_path}')


def _check_rows(checks: dict[str, OrderReport]) -> list[list[Any]]:
    return [
        [name, report.verdict, repr(report.max_violation), report.checked, len(report.witnesses)]
        for name, report in checks.items()
    ]


_CHECK_HEADER = ['check', 'verdict', 'max_violation', 'checked', 'witnesses']


def _theta_grid(low: float, high: float, size: int) -> Grid:
    return Grid.log_spaced(low, high, size) if low > 0.0 else Grid.linspace(low, high, size)


# Commands ------------------------------------------------------------------


@_reported
def cmd_estimate(req: RunRequest) -> dict[str, Any]:
    sample = read_sample_csv(req.input_path)
    family = make_builtin(req.family, req.params)
    spec = make_spec(family, req.spec)
    result = estimate(spec, sample)
    report = {
        'theta_hat': result.theta_hat,
        'gbar': result.gbar,
        'residual': result.residual,
        'iterations': result.iterations,
        'n': result.n,
        'family': family.name,
        'params': dict(family.fixed_params),
        'spec': spec.selector,
        **_provenance(req),
    }
    fields = ['family', 'spec', 'n', 'gbar', 'theta_hat', 'residual']
    _write_output(req, report, lambda: _csv_text(fields, [[jsonable(report[f]) for f in fields]]))
    return report


def _monotone_section(family: Family, req: RunRequest, thetas: Grid) -> dict[str, Any]:
    try:
        spec = make_spec(family, req.spec)
        values = [moment_function(spec, float(t)) for t in thetas.as_array()]
    except MomentOrdersError as exc:
        logger.warning(f'{family.name}/{req.spec}: moment function unavailable: {exc}')
        return {'verdict': 'inconclusive', 'error': str(exc)}
    report = check_monotone(values, thetas, spec.monotone_direction, tol=req.tolerance)
    return {'direction': spec.monotone_direction, **report.model_dump()}


@_reported
def cmd_check_family(req: RunRequest) -> dict[str, Any]:
    family = make_builtin(req.family, req.params)
    low, high = family.check_theta(req.theta), family.check_theta(req.theta2)
    thetas = _theta_grid(low, high, req.param_grid_size)
    x_grid = family_x_grid(family, (low, high), req.grid_size, req.quantile_clip)

    tp2 = check_tp2_mixed(family, x_grid, thetas, tol=req.tolerance)
    per_theta = []
    for theta in _theta_grid(low, high, LOGCONCAVE_THETAS).as_array():
        lc = check_logconcave(lambda x, t=float(theta): family.density(x, t), x_grid, tol=req.tolerance)
        per_theta.append({'theta': float(theta), **lc.model_dump()})
    worst = max((entry['verdict'] for entry in per_theta), key=['holds', 'inconclusive', 'fails'].index)

    report: dict[str, Any] = {
        'family': family.name,
        'params': dict(family.fixed_params),
        'theta_interval': [low, high],
        'tp2': tp2.model_dump(),
        'logconcave': {'verdict': worst, 'per_theta': per_theta},
        'm_monotone': _monotone_section(family, req, thetas),
    }
    if isinstance(family, ExpFamily):
        report['exp_family'] = monotonicity_flags(family, x_grid.as_array(), thetas.as_array())
    report.update(_provenance(req))

    def rows() -> str:
        lines = [['tp2', tp2.verdict, repr(tp2.max_violation), tp2.checked, len(tp2.witnesses)]]
        lines += [
            [f'logconcave@{e["theta"]!r}', e['verdict'], repr(e['max_violation']), e['checked'], len(e['witnesses'])]
            for e in per_theta
        ]
        return _csv_text(_CHECK_HEADER, lines)

    _write_output(req, report, rows)
    logger.info(f'{family.name}: tp2 {tp2.verdict}, logconcave {worst}')
    return report


@_reported
def cmd_check_order(req: RunRequest) -> dict[str, Any]:
    family = make_builtin(req.family, req.params)
    low, high = family.check_theta(req.theta), family.check_theta(req.theta2)
    x_grid = family_x_grid(family, (low, high), req.grid_size, req.quantile_clip)
    alphas = Grid.linspace(req.quantile_clip, 1.0 - req.quantile_clip, req.grid_size)
    checks = {
        'st': check_st(lambda x: family.cdf(x, low), lambda x: family.cdf(x, high), x_grid, tol=req.tolerance),
        'lr': check_lr(lambda x: family.density(x, low), lambda x: family.density(x, high), x_grid, tol=req.tolerance),
        'disp': check_disp(
            lambda a: family.quantile(a, low), lambda a: family.quantile(a, high), alphas, tol=req.tolerance,
        ),
    }
    report = {
        'family': family.name,
        'params': dict(family.fixed_params),
        'thetas': [low, high],
        **{name: check.model_dump() for name, check in checks.items()},
        **_provenance(req),
    }
    _write_output(req, report, lambda: _csv_text(_CHECK_HEADER, _check_rows(checks)))
    return report


def mc_config(req: RunRequest) -> McConfig:
    """Experiment configuration of a simulate request.

    Raises:
        DomainError: The request does not form a valid experiment.
    """
    try:
        return McConfig(
            family=req.family, params=req.params, estimator=req.estimator, spec=req.spec, k=req.k,
            theta_pair=(req.theta, req.theta2), n=req.n, reps=req.reps, seed=req.seed,
            workers=req.workers, confidence=req.confidence, bins=req.bins,
        )
    except ValidationError as exc:
        raise DomainError(f'invalid experiment: {exc.errors()[0]["msg"]}') from exc


def verdict_lines(result: McResult) -> list[str]:
    """One summary line per order tested."""
    lines = [format_verdict_summary('st', result.st_report.verdict, result.st_report.statistic,
                                    result.st_report.threshold)]
    if result.lr_report is not None:
        lines.append(format_verdict_summary('lr', result.lr_report.verdict, result.lr_report.measure,
                                            result.lr_report.threshold))
    return lines


@_reported
def cmd_simulate(req: RunRequest) -> dict[str, Any]:
    cfg = mc_config(req)
    theorem = req.theorem or DEFAULT_THEOREM[req.estimator]
    result = verify_theorem(cfg, theorem)
    report = {**jsonable(result), 'summary_lines': verdict_lines(result), **_provenance(req)}

    if req.output_path is not None:
        if req.output_format == 'csv':
            write_csv(result, req.output_path)
        else:
            atomic_write_text(req.output_path, to_json_text(report))
        logger.info(f'wrote {req.output_format} report to {req.output_path}')
    if req.csv_output_path is not None:
        write_csv(result, req.csv_output_path)
    return report


@trace_operation('cli.run', capture_input=True, capture_output=False)
def run(command: Command, settings: Settings, flags: dict[str, Any]) -> tuple[int, dict[str, Any]]:
    """Build the request and execute one command.

    Returns:
        (exit status, report or error document).
    """
    try:
        req = build_request(command, settings, flags)
    except MomentOrdersError as exc:
        logger.error(f'{command}: {exc}')
        return error_document(exc)
    return COMMANDS[command](req)


COMMANDS: dict[str, Callable[[RunRequest], tuple[int, dict[str, Any]]]] = {
    'estimate': cmd_estimate,
    'check-family': cmd_check_family,
    'check-order': cmd_check_order,
    'simulate': cmd_simulate,
}
