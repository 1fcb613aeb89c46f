"""moment-orders - Entry point for the command-line interface."""

import logging

import click
from dotenv import load_dotenv

from observability import init_tracing
from src.tools.shared_libraries.errors import MomentOrdersError
from src.tools.shared_libraries.helpers import to_json_text

from .commands import Command, error_document, run
from .settings import load_settings


load_dotenv()

logger = logging.getLogger(__name__)

FAMILY_OPTION = click.option('--family', 'family', required=True, help='Catalog family, e.g. gamma_scale')
PARAM_OPTION = click.option(
    '--param', 'params', multiple=True, metavar='KEY=VALUE', help='Fixed family parameter (repeatable)',
)
SPEC_OPTION = click.option('--spec', 'spec', default=None, help='Moment selector: mean, log, T, k-th:<k>, abs-log, neg-log')
THETA_OPTIONS = (
    click.option('--theta', 'theta', type=float, default=None, help='First (smaller) parameter value'),
    click.option('--theta2', 'theta2', type=float, default=None, help='Second parameter value'),
)
OUTPUT_OPTIONS = (
    click.option('--output', 'output_path', type=click.Path(dir_okay=False), default=None, help='Report file'),
    click.option('--format', 'output_format', type=click.Choice(['json', 'csv']), default='json',
                 help='Report file format'),
)
GRID_OPTIONS = (
    click.option('--grid-size', 'grid_size', type=int, default=None, help='Number of x grid points'),
    click.option('--param-grid-size', 'param_grid_size', type=int, default=None, help='Number of theta grid points'),
)


def _apply(*decorators):
    def decorate(func):
        for decorator in reversed(decorators):
            func = decorator(func)
        return func

    return decorate


def _finish(ctx: click.Context, command: Command, flags: dict) -> None:
    code, report = run(command, ctx.obj, flags)
    if code == 0 and command == 'simulate':
        for line in report['summary_lines']:
            click.echo(line, err=True)
    if code != 0 or flags.get('output_path') is None:
        click.echo(to_json_text(report), nl=False)
    ctx.exit(code)


@click.group()
@click.option('--trace', 'trace', type=click.Choice(['console', 'none']), default=None,
              help='Export spans to stderr')
@click.pass_context
def main(ctx: click.Context, trace: str | None):
    """Moment estimators and stochastic order checks for one-parameter families."""
    try:
        settings = load_settings()
    except MomentOrdersError as e:
        code, document = error_document(e)
        click.echo(to_json_text(document), nl=False)
        ctx.exit(code)

    logging.basicConfig(level=settings.log_level)
    exporter = trace or settings.trace
    init_tracing(exporter=exporter)
    logger.debug(f'{settings.environment} settings, tracing {exporter}')
    ctx.obj = settings


@main.command('estimate')
@_apply(FAMILY_OPTION, PARAM_OPTION, SPEC_OPTION, *OUTPUT_OPTIONS)
@click.option('--input', 'input_path', type=click.Path(dir_okay=False), default=None,
              help='CSV file, one value per line, optional header x')
@click.pass_context
def estimate_command(ctx: click.Context, **flags):
    """Moment estimate of theta from a CSV sample."""
    _finish(ctx, 'estimate', flags)


@main.command('check-family')
@_apply(FAMILY_OPTION, PARAM_OPTION, SPEC_OPTION, *THETA_OPTIONS, *GRID_OPTIONS, *OUTPUT_OPTIONS)
@click.option('--tol', 'tolerance', type=float, default=None, help='Relative verdict tolerance')
@click.pass_context
def check_family_command(ctx: click.Context, **flags):
    """TP2, logconcavity and moment-function monotonicity on [theta, theta2]."""
    _finish(ctx, 'check-family', flags)


@main.command('check-order')
@_apply(FAMILY_OPTION, PARAM_OPTION, *THETA_OPTIONS, *GRID_OPTIONS, *OUTPUT_OPTIONS)
@click.option('--tol', 'tolerance', type=float, default=None, help='Relative verdict tolerance')
@click.pass_context
def check_order_command(ctx: click.Context, **flags):
    """st, lr and dispersive order between the members at theta and theta2."""
    _finish(ctx, 'check-order', flags)


@main.command('simulate')
@_apply(FAMILY_OPTION, PARAM_OPTION, SPEC_OPTION, *THETA_OPTIONS, *OUTPUT_OPTIONS)
@click.option('--estimator', 'estimator', default=None,
              type=click.Choice(['moment-spec', 'location-mean', 'scale-kth-moment', 'scale-sample-sd',
                                 'weibull-abslog-sd', 'weibull-abslog-mean']),
              help='Estimator under test')
@click.option('--theorem', 'theorem', default=None,
              type=click.Choice(['t3-lr', 't4-st', 't5-st', 'location-lr', 'scale-st']),
              help='Preservation result to verify; defaults from the estimator')
@click.option('--k', 'k', type=int, default=None, help='Moment order for scale-kth-moment')
@click.option('--n', 'n', type=int, default=None, help='Sample size per replicate')
@click.option('--reps', 'reps', type=int, default=None, help='Replicates per parameter value')
@click.option('--seed', 'seed', type=int, default=None, help='Base seed (default 20240915)')
@click.option('--workers', 'workers', type=int, default=None, help='Worker threads')
@click.option('--confidence', 'confidence', type=float, default=None, help='DKW band confidence')
@click.option('--bins', 'bins', type=int, default=None, help='Pooled-quantile bins for the lr test')
@click.option('--csv-output', 'csv_output_path', type=click.Path(dir_okay=False), default=None,
              help='Per-replicate CSV file')
@click.pass_context
def simulate_command(ctx: click.Context, **flags):
    """Monte Carlo check that the estimator preserves the order between theta and theta2."""
    _finish(ctx, 'simulate', flags)


if __name__ == '__main__':
    main()
