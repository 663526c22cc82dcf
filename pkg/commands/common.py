import dataclasses
import functools
import logging
import sys

import click

from exceptions import GramstabError
from models.run_config import RunConfig

logger = logging.getLogger(__name__)


def run_options(command):
    """Attach the --config, --out and --seed options shared by every command."""
    options = [
        click.option("--config", "config_path", required=True, help="JSON run configuration."),
        click.option("--out", "out_dir", default=None, help="Output directory (default from config)."),
        click.option("--seed", type=int, default=None, help="Override the configured seed."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def load_run(config_path: str, seed=None) -> RunConfig:
    """Read the run file; a missing mode falls back to the config the CLI was created with."""
    run = RunConfig.load(config_path)
    context = click.get_current_context(silent=True)
    if run.mode is None and context is not None and context.find_root().obj is not None:
        run = dataclasses.replace(run, mode=context.find_root().obj)
    if seed is not None:
        run = dataclasses.replace(run, seed=seed)
    return run


def handle_errors(command):
    """Turn pipeline errors into their exit codes with a one-line diagnostic."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except GramstabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except Exception as e:
            logger.error(f"Unhandled exception: {e}", exc_info=True)
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper
