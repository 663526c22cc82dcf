import logging

import click

from commands import register_commands
from config import Config, config

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

logging.basicConfig(
    level=LOG_LEVELS.get(Config.LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def create_cli(config_name=None):
    """
    Factory for the gramstab command group.

    Args:
        config_name: Config class (default, verification) for runs whose
            file sets no ``mode``; None leaves the choice to GRAMSTAB_ENV

    Returns:
        click.Group with every command registered
    """
    if Config.LOG_LEVEL not in LOG_LEVELS:
        logger.warning(f"Unknown GRAMSTAB_LOG level '{Config.LOG_LEVEL}', using info")
    if config_name is not None and config_name not in config:
        logger.warning(f"Unknown config '{config_name}', falling back to GRAMSTAB_ENV")
        config_name = None

    @click.group(name="gramstab")
    @click.pass_context
    def cli(ctx):
        """Gramian-based rapid stabilization of linear control systems."""
        ctx.obj = config_name

    register_commands(cli)
    logger.debug(f"gramstab CLI created with config: {config_name or 'GRAMSTAB_ENV'}")
    return cli


def main():
    create_cli()()


if __name__ == "__main__":
    main()
