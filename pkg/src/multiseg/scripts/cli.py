import logging
import click
from click_plugins import with_plugins
from pkg_resources import iter_entry_points
from multiseg import __version__
from multiseg.errors import MultisegError
from multiseg.scripts import options
from multiseg.scripts.helpers import (
    ClickColoredLoggingFormatter,
    ClickLoggingHandler,
    error_line,
    exit_code_of,
)

logger = logging.getLogger(__name__)


def configure_logging(log_level):
    handler = ClickLoggingHandler()
    handler.formatter = ClickColoredLoggingFormatter("%(name)s: %(message)s")
    logging.basicConfig(level=log_level.upper(), handlers=[handler], force=True)


class MultisegGroup(click.Group):
    """Click group that turns library errors into one stderr line and an exit code."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (MultisegError, OSError) as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(error_line(e), err=True)
            ctx.exit(exit_code_of(e))


@with_plugins(iter_entry_points("multiseg.multiseg_commands"))
@click.group("multiseg", cls=MultisegGroup)
@click.version_option(version=__version__)
@options.verbosity_arg
def cli(verbosity):
    """multiseg command line interface"""
    configure_logging(verbosity)
