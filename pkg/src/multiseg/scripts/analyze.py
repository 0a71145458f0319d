import json
import logging
from pathlib import Path
import click
from multiseg.analyze import crack_count_summary, write_rows_csv
from multiseg.config import load_run_config
from multiseg.errors import StorageError
from multiseg.scripts import options
from multiseg.scripts.evaluate import align_ground_truth
from multiseg.scripts.helpers import parse_named_dir, read_mask_dir

logger = logging.getLogger(__name__)


@click.command()
@options.run_config_opts
@click.option(
    "--gt",
    "gt_dir",
    type=click.Path(exists=True, file_okay=False),
    required=True,
    help="Directory of ground-truth mask containers",
)
@click.option(
    "--pred",
    "pred_dirs",
    multiple=True,
    callback=parse_named_dir,
    metavar="NAME=DIR",
    help="Model name and directory of predicted mask containers. Multiple allowed.",
)
@click.option(
    "--class", "class_name", default="crack", show_default=True, help="Class to analyze"
)
@click.option(
    "--connectivity",
    type=click.Choice(["4", "8"]),
    default="8",
    show_default=True,
    help="Pixel connectivity of components",
)
@click.option(
    "--min-area",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Ignore components with fewer pixels",
)
@click.option(
    "--export",
    type=click.Path(dir_okay=False),
    default=None,
    help="CSV with one row per (image, source) for plotting",
)
@click.option(
    "-o", "--output", type=click.Path(dir_okay=False), default=None, help="Write the summary as JSON"
)
def analyze(
    gt_dir, pred_dirs, class_name, connectivity, min_area, export, output, config_path,
    overrides, seed,
):
    r"""Count connected components of a class per image for ground truth and models.

    Ground truth is resized to each model's prediction size when they differ.

    Example:

    multiseg analyze --gt corpus/masks --pred unet=predictions/ --export counts.csv

    """
    cfg = load_run_config(config_path, overrides, seed)
    class_set = cfg.class_set
    gts = read_mask_dir(gt_dir, class_set)
    predictions = {}
    for name, directory in pred_dirs.items():
        predictions[name] = read_mask_dir(directory, class_set)
    if predictions:
        # Ground truth is measured at the resolution of the first model
        first = next(iter(predictions.values()))
        gts = align_ground_truth(first, gts)
    summary = crack_count_summary(
        gts, predictions, class_set, class_name, int(connectivity), min_area
    )
    for source, stats in summary.stats.items():
        click.echo(
            "%s: mean %.3f, median %.1f, sd %.3f over %d images"
            % (source, stats["mean"], stats["median"], stats["sd"], stats["n"])
        )
    if export:
        write_rows_csv(summary.rows, export)
    if output:
        doc = {
            "class": class_name,
            "connectivity": int(connectivity),
            "min_area": min_area,
            "images": summary.images,
            "counts": summary.counts,
            "stats": summary.stats,
            "geometry": summary.geometry,
        }
        try:
            Path(output).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise StorageError("Could not write '%s': %s" % (output, e)) from e
