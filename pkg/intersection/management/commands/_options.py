# intersection/management/commands/_options.py

"""Arguments and error handling shared by the analysis commands."""

from contextlib import contextmanager

from django.core.management.base import CommandError

from intersection.exceptions import AnalysisError, InstabilityError, ScenarioError
from intersection.scenario import parse_config
from intersection.simulation_service import SimOptions

EXIT_COMPUTATION = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def number_list(text: str) -> list:
    """'250,500,750' -> [250.0, 500.0, 750.0]"""
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise CommandError(f"expected comma-separated numbers, got '{text}'", returncode=EXIT_CONFIG)


def add_config_arguments(parser) -> None:
    parser.add_argument('config', help='Scenario document (YAML or JSON)')
    parser.add_argument('--attempts-override', type=int, default=None,
                        help='Number of modeled attempts N (regenerates generator tables)')
    parser.add_argument('--out-dir', default='output', help='Directory for CSV files and manifest.json')
    parser.add_argument('--jobs', type=int, default=None, help='joblib workers (default: N_JOBS setting)')


def add_simulation_arguments(parser) -> None:
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--reuse', choices=['full', 'limited'], default='full')
    parser.add_argument('--warmup', type=int, default=None, help='Departures discarded per replication')
    parser.add_argument('--horizon', type=int, default=None, help='Departures per replication, warmup included')
    parser.add_argument('--horizon-seconds', type=float, default=None,
                        help='Simulated seconds after warmup (replaces --horizon)')
    parser.add_argument('--replications', type=int, default=None)


def load_config(path: str, attempts: int = None, default_attempts: int = None):
    """
    Reads and validates a scenario document.

    :raises CommandError: exit code 2 with one key-path line per problem
    """
    try:
        with open(path, encoding='utf-8') as handle:
            text = handle.read()
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", returncode=EXIT_CONFIG)
    try:
        return parse_config(text, attempts=attempts, default_attempts=default_attempts)
    except ScenarioError as exc:
        raise CommandError('invalid scenario:\n  ' + '\n  '.join(exc.messages), returncode=EXIT_CONFIG)


@contextmanager
def analysis_errors():
    """Maps analysis failures to command exit codes."""
    try:
        yield
    except InstabilityError as exc:
        raise CommandError(str(exc), returncode=EXIT_UNSTABLE)
    except ScenarioError as exc:
        raise CommandError('; '.join(exc.messages), returncode=EXIT_CONFIG)
    except (AnalysisError, ValueError) as exc:
        raise CommandError(f"{type(exc).__name__}: {exc}", returncode=EXIT_COMPUTATION)


def with_minor_flow(config, minor_flow: float):
    """Sets the batch rate so that lambda E[B] equals ``minor_flow`` veh/h."""
    if minor_flow is None:
        return config
    if minor_flow < 0:
        raise CommandError('--minor-flow must be nonnegative', returncode=EXIT_CONFIG)
    return config.with_overrides(batch_flow=minor_flow / config.batch_size.mean)


def sim_options(options: dict, mode: str) -> SimOptions:
    """Resolved SimOptions from parsed command options; bad combinations exit with code 2."""
    try:
        return SimOptions(
            seed=options['seed'], mode=mode, reuse=options['reuse'], warmup=options['warmup'],
            horizon=options['horizon'], horizon_seconds=options['horizon_seconds'],
            replications=options['replications'],
        ).resolved()
    except ValueError as exc:
        raise CommandError(str(exc), returncode=EXIT_CONFIG)
