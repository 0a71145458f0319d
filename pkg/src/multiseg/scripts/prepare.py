import logging
from pathlib import Path
import click
from multiseg.config import load_run_config, write_run_config
from multiseg.dataset import prepare_corpus
from multiseg.scripts import options

logger = logging.getLogger(__name__)


@click.command()
@options.run_config_opts
@click.option(
    "--image-size", type=int, default=None, help="Training image size (data.image_size)"
)
@click.argument("corpus", type=click.Path(exists=True, file_okay=False), nargs=1)
@click.argument("outdir", type=click.Path(file_okay=False), nargs=1)
def prepare(corpus, outdir, image_size, config_path, overrides, seed):
    r"""Turn an annotated corpus into training and validation records.

    Parses CORPUS/annotations/*.json, rasterizes multi-hot masks, resizes and normalizes the
    images from CORPUS/images, splits base images 4:1 and flip-augments each side. Writes
    train.npz, val.npz, split.json, stats.json and config.json to OUTDIR.

    When --image-size is given, unet.input_size follows it.

    Example:

    multiseg prepare --image-size 64 corpus/ prepared/

    """
    cfg = load_run_config(
        config_path,
        overrides,
        seed,
        data__image_size=image_size,
        unet__input_size=image_size,
    )
    logger.debug("prepare started with arguments: %s, %s, %s", corpus, outdir, cfg.data)
    prepared = prepare_corpus(
        corpus, outdir, cfg.data, cfg.unet.in_channels, cfg.class_set, cfg.train.seed
    )
    write_run_config(cfg, Path(outdir) / "config.json")
    stats = prepared.stats
    click.echo(
        "%d train / %d val records written to %s"
        % (len(prepared.train), len(prepared.val), outdir)
    )
    click.echo(
        "cardinality %.6f, single-label fraction %.6f, mean imbalance ratio %.6f"
        % (stats.cardinality, stats.single_label_fraction, stats.mean_imbalance_ratio)
    )
