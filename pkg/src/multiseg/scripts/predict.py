import logging
from pathlib import Path
import click
import numpy as np
from multiseg.config import load_run_config
from multiseg.dataset import load_image, normalize_image, resize_image
from multiseg.errors import ConfigError, DatasetError, StorageError
from multiseg.evaluate import binarize
from multiseg.masks import save_mask
from multiseg.scripts import options
from multiseg.unet import load_weights, predict_probabilities

logger = logging.getLogger(__name__)


def _run_config(ctx, param, value):
    """Default --config to the config.json stored next to the weights."""
    if value is None:
        candidate = Path(ctx.params.get("weights", ".")).parent / "config.json"
        if candidate.is_file():
            return str(candidate)
    return value


def _expand(images):
    paths = []
    for item in images:
        item = Path(item)
        paths.extend(sorted(item.glob("*.png")) if item.is_dir() else [item])
    if not paths:
        raise DatasetError("No input images given")
    return paths


@click.command()
@click.argument(
    "weights", type=click.Path(exists=True, dir_okay=False), nargs=1, is_eager=True
)
@click.argument("images", type=click.Path(exists=True), nargs=-1, required=True)
@click.option(
    "-o",
    "--outdir",
    type=click.Path(file_okay=False),
    required=True,
    help="Directory receiving <stem>.probs.npy and <stem>.mssm per image",
)
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    callback=_run_config,
    help="JSON run configuration file. Defaults to config.json next to WEIGHTS when present.",
)
@options.set_opt
@options.threshold_opt
def predict(weights, images, outdir, config_path, overrides, threshold):
    r"""Predict per-class probability maps and binarized masks.

    IMAGES are PNG files or directories of PNG files. Every image is resized to the model's
    input size and normalized with the configured mean and std. Channels are independent
    sigmoid probabilities, so a pixel can be active in several classes.

    Example:

    multiseg predict runs/run-0001/weights.mssw corpus/images -o predictions/

    """
    model = load_weights(weights)
    cfg = load_run_config(
        config_path,
        overrides,
        threshold=threshold,
        unet__in_channels=model.config.in_channels,
        unet__out_channels=model.config.out_channels,
        unet__depth=model.config.depth,
        unet__base_width=model.config.base_width,
        unet__input_size=model.config.input_size,
        data__image_size=model.config.input_size,
    )
    if len(cfg.class_set) != model.config.out_channels:
        raise ConfigError(
            "Model predicts %d classes, %d are configured"
            % (model.config.out_channels, len(cfg.class_set))
        )
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError("Could not create '%s': %s" % (outdir, e)) from e

    size = model.config.input_size
    for path in _expand(images):
        image = load_image(path, model.config.in_channels)
        image = normalize_image(resize_image(image, size), cfg.data.mean, cfg.data.std)
        probabilities = predict_probabilities(model, image[None])[0].astype(np.float32)
        np.save(outdir / (path.stem + ".probs.npy"), probabilities)
        save_mask(binarize(probabilities, cfg.threshold), outdir / (path.stem + ".mssm"), cfg.class_set)
        logger.info("Predicted %s", path)
    click.echo("Predictions written to %s" % outdir)
