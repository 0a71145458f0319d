import json
import logging
from pathlib import Path
import click
import numpy as np
from multiseg.config import load_run_config
from multiseg.dataset import resize_mask
from multiseg.errors import DatasetError, StorageError
from multiseg.evaluate import evaluate_masks, format_report
from multiseg.scripts import options
from multiseg.scripts.helpers import read_mask_dir

logger = logging.getLogger(__name__)


def align_ground_truth(preds, gts):
    """Ground-truth masks for the prediction ids, resized to the prediction size if needed."""
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise DatasetError("No ground truth for %s" % missing)
    aligned = {}
    for name, pred in preds.items():
        gt = gts[name]
        if gt.shape[1:] != pred.shape[1:]:
            if pred.shape[1] != pred.shape[2]:
                raise DatasetError("Prediction '%s' is not square: %s" % (name, pred.shape))
            gt = resize_mask(gt, pred.shape[1])
        aligned[name] = gt
    return aligned


@click.command()
@options.run_config_opts
@click.option(
    "--aggregate",
    type=click.Choice(["global", "image"]),
    default="global",
    show_default=True,
    help="Sum counts over the corpus (global) or average per-image metrics (image)",
)
@click.option(
    "-o", "--output", type=click.Path(dir_okay=False), default=None, help="Write the report as JSON"
)
@click.argument("predictions", type=click.Path(exists=True, file_okay=False), nargs=1)
@click.argument("groundtruth", type=click.Path(exists=True, file_okay=False), nargs=1)
def evaluate(predictions, groundtruth, aggregate, output, config_path, overrides, seed):
    r"""Score predicted mask containers against ground-truth mask containers.

    Files are matched by stem (<stem>.mssm). Ground truth is resized to the prediction size
    with nearest-neighbor interpolation when needed. When every prediction has a
    <stem>.probs.npy next to it, the corpus BCE is reported too.

    Example:

    multiseg evaluate predictions/ corpus/masks/

    """
    cfg = load_run_config(config_path, overrides, seed)
    class_set = cfg.class_set
    preds = read_mask_dir(predictions, class_set)
    gts = align_ground_truth(preds, read_mask_dir(groundtruth, class_set))
    ids = list(preds)

    prob_paths = [Path(predictions) / (i + ".probs.npy") for i in ids]
    probabilities = None
    if all(p.is_file() for p in prob_paths):
        try:
            probabilities = [np.load(p, allow_pickle=False) for p in prob_paths]
        except (OSError, ValueError) as e:
            raise StorageError("Could not read probability maps: %s" % e) from e

    evaluation = evaluate_masks(
        ids,
        [preds[i] for i in ids],
        [gts[i] for i in ids],
        class_set,
        probabilities=probabilities,
        aggregate=aggregate,
    )
    click.echo(format_report(evaluation.suite), nl=False)
    if output:
        report = {
            "aggregate": aggregate,
            "suite": evaluation.suite.to_dict(),
            "per_image": {k: v.to_dict() for k, v in evaluation.per_image.items()},
        }
        try:
            Path(output).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise StorageError("Could not write '%s': %s" % (output, e)) from e
