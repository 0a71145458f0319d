import click

verbosity_arg = click.option(
    "--verbosity",
    "-v",
    type=click.Choice(
        ["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"], case_sensitive=False
    ),
    default="ERROR",
    help="Set verbosity level",
)

config_opt = click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON run configuration file",
)

set_opt = click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="SECTION.KEY=VALUE",
    help="Override a configuration value (value parsed as JSON). Multiple allowed.",
)

seed_opt = click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed for generation, initialization, shuffling and splitting. Overrides MSS_SEED.",
)

jobs_opt = click.option(
    "-j",
    "--jobs",
    type=click.IntRange(min=1),
    default=None,
    help="Maximum number of parallel workers. Defaults to 1 for bit-reproducibility.",
)

threshold_opt = click.option(
    "-t",
    "--threshold",
    type=click.FloatRange(0.0, 1.0),
    default=None,
    help="Probability threshold for binarization (p >= threshold is active)",
)


def run_config_opts(f):
    """The config file, overrides and seed options shared by every subcommand."""
    for option in (seed_opt, set_opt, config_opt):
        f = option(f)
    return f
