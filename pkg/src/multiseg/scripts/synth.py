import logging
from pathlib import Path
import click
from multiseg.config import load_run_config, write_run_config
from multiseg.scripts import options
from multiseg.synth import generate_corpus

logger = logging.getLogger(__name__)


@click.command()
@options.run_config_opts
@options.jobs_opt
@click.option(
    "-n",
    "--n",
    "count",
    type=click.IntRange(min=1),
    default=8,
    show_default=True,
    help="Number of samples to generate",
)
@click.option("--size", type=int, default=None, help="Image size in pixels (synth.image_size)")
@click.argument("outdir", type=click.Path(file_okay=False), nargs=1)
def synth(outdir, count, size, jobs, config_path, overrides, seed):
    r"""Generate a synthetic EL cell corpus with overlapping multi-label ground truth.

    Writes images/*.png, annotations/*.json, masks/*.mssm and manifest.json (with a digest of
    every written file) to OUTDIR.

    Example:

    multiseg synth --n 8 --seed 7 corpus/

    """
    cfg = load_run_config(
        config_path, overrides, seed, jobs=jobs, synth__image_size=size
    )
    logger.debug("synth started with arguments: %s, %s, %s", outdir, count, cfg.synth)
    manifest = generate_corpus(cfg.synth, count, outdir, cfg.class_set, cfg.jobs)
    write_run_config(cfg, Path(outdir) / "config.json")
    click.echo("%d samples written to %s" % (manifest["n"], outdir))
    click.echo("digest %s" % manifest["digest"])
