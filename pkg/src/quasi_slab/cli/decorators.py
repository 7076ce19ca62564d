"""CLI decorators for common options and error handling."""

import functools
import sys
import traceback
from typing import Callable

import click

from quasi_slab.cli.output import configure_logging, error, info
from quasi_slab.core.model import NumericalError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def common_options(func: Callable) -> Callable:
    """
    Decorator to add common CLI options to commands.

    Adds:
        --verbose: Enable verbose output
        --yes: Skip confirmation prompts
        --dry-run: Show what would be done without doing it
        --json: Output results as JSON
    """
    func = click.option(
        "--json",
        "json_output",
        is_flag=True,
        help="Output results as JSON",
    )(func)
    func = click.option(
        "--dry-run",
        is_flag=True,
        help="Print the resolved configuration and planned artifacts without computing",
    )(func)
    func = click.option(
        "--yes",
        "-y",
        is_flag=True,
        help="Skip confirmation prompts",
    )(func)
    func = click.option(
        "--verbose",
        "-v",
        is_flag=True,
        help="Enable verbose output",
    )(func)
    return func


def experiment_options(func: Callable) -> Callable:
    """
    Decorator adding the experiment inputs shared by every subcommand.

    Adds:
        --config: JSON experiment configuration
        --seed: Master seed (overrides the config)
        --out: Run directory for artifacts and manifest.json
        --p, --n, --n-iter, --method, --workers: Config overrides
    """
    func = click.option(
        "--workers", type=int, default=None, help="Worker processes (overrides config)"
    )(func)
    func = click.option(
        "--method",
        type=click.Choice(["mcmc", "skinny", "midsize", "full"]),
        default=None,
        help="Fitting method (overrides config)",
    )(func)
    func = click.option(
        "--n-iter", type=int, default=None, help="MCMC iterations (overrides config)"
    )(func)
    func = click.option("--n", "n_obs", type=int, default=None, help="Sample size (overrides config)")(func)
    func = click.option("--p", "p_dim", type=int, default=None, help="Dimension (overrides config)")(func)
    func = click.option(
        "--out",
        type=click.Path(file_okay=False),
        required=True,
        help="Run directory for artifacts",
    )(func)
    func = click.option(
        "--seed", type=click.IntRange(min=0), default=None, help="Master seed (overrides config)"
    )(func)
    func = click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="JSON experiment configuration",
    )(func)
    return func


_EXIT_LABELS = {EXIT_CONFIG: "Invalid input", EXIT_NUMERICAL: "Numerical failure"}


def _exit_code(exc: BaseException) -> int:
    """3 for a numerical failure anywhere in the cause chain, 2 for domain errors, else 1."""
    seen = exc
    while seen is not None:
        if isinstance(seen, NumericalError):
            return EXIT_NUMERICAL
        seen = seen.__cause__
    return EXIT_CONFIG if _is_domain_error(exc) else EXIT_FAILURE


def handle_errors(func: Callable) -> Callable:
    """
    Decorator to handle errors and exit with appropriate codes.

    Exit codes:
        0: Success
        1: Unexpected error or user abort
        2: Configuration or input error
        3: Numerical failure (non-PD matrix, solver divergence)
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context(silent=True)
        verbose = bool(kwargs.get("verbose", False))
        if ctx is not None and "verbose" in ctx.params:
            configure_logging(verbose)

        try:
            return func(*args, **kwargs)
        except click.ClickException:
            # Let Click handle its own exceptions
            raise
        except click.Abort:
            # User cancelled (Ctrl+C)
            error("Cancelled by user")
            sys.exit(EXIT_FAILURE)
        except FileNotFoundError as e:
            error(f"File not found: {e}")
            sys.exit(EXIT_CONFIG)
        except KeyboardInterrupt:
            error("Interrupted by user")
            sys.exit(EXIT_FAILURE)
        except Exception as e:
            code = _exit_code(e)
            if code == EXIT_FAILURE:
                error(f"Unexpected error: {e}")
                if verbose:
                    info("Full traceback:")
                    traceback.print_exc()
            else:
                error(f"{_EXIT_LABELS[code]}: {e}")
            sys.exit(code)

    return wrapper


def _is_domain_error(exc: BaseException) -> bool:
    """True for the per-module errors raised on invalid inputs."""
    return type(exc).__module__.startswith("quasi_slab.core")
