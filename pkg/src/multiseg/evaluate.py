"""Thresholding and pixel metrics for multi-label segmentation."""
import logging
from collections import OrderedDict, namedtuple
from dataclasses import dataclass
import numpy as np
from multiseg import ClassSet
from multiseg.errors import DatasetError, ShapeError, ValidationError
from multiseg.tensor import bce_with_logits, sigmoid
from multiseg.unet import forward

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "recall", "dice", "iou")
#: Row labels of the printed report.
REPORT_ROWS = OrderedDict(
    [
        ("accuracy", "Accuracy"),
        ("precision", "Precision"),
        ("recall", "Recall"),
        ("dice", "Dice Coefficient"),
        ("iou", "IoU"),
    ]
)
PROBABILITY_CLIP = 1e-7

#: suite is the aggregated MetricSuite, per_image maps record id to its own MetricSuite.
Evaluation = namedtuple("Evaluation", ["suite", "per_image"])


@dataclass
class ConfusionCounts:
    """Per-class pixel counts, each an int64 array of shape (C,)."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __add__(self, other):
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def pixels(self):
        """Pixels evaluated per class."""
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricSuite:
    """Per-class and macro-averaged metrics plus the corpus BCE (None when unavailable)."""

    class_names: tuple
    per_class: dict
    macro: dict
    bce: float = None

    def to_dict(self):
        return {
            "class_names": list(self.class_names),
            "per_class": self.per_class,
            "macro": self.macro,
            "bce": self.bce,
        }


def binarize(probabilities, threshold=0.5):
    """1 where p >= threshold, per channel independently."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("Threshold must be in [0, 1], got %s" % threshold)
    return (np.asarray(probabilities) >= threshold).astype(np.uint8)


def confusion(pred, gt):
    """Count TP/FP/FN/TN per channel.

    Args:
        pred (ndarray): Binary masks (C, H, W) or (N, C, H, W).
        gt (ndarray): Binary masks, same shape as `pred`.

    Returns:
        ConfusionCounts: Counts per channel.

    """
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError("Prediction shape %s differs from ground truth %s" % (pred.shape, gt.shape))
    if pred.ndim not in (3, 4):
        raise ShapeError("Masks must be (C, H, W) or (N, C, H, W), got %s" % (pred.shape,))
    axes = (1, 2) if pred.ndim == 3 else (0, 2, 3)

    def count(a):
        return a.sum(axis=axes, dtype=np.int64)

    return ConfusionCounts(count(pred & gt), count(pred & ~gt), count(~pred & gt), count(~pred & ~gt))


def _class_metrics(tp, fp, fn, tn, empty_value):
    tp, fp, fn, tn = int(tp), int(fp), int(fn), int(tn)
    accuracy = (tp + tn) / (tp + fp + fn + tn)
    union = tp + fp + fn
    if union == 0:
        return dict(
            accuracy=accuracy,
            precision=empty_value,
            recall=empty_value,
            dice=empty_value,
            iou=empty_value,
        )
    return dict(
        accuracy=accuracy,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        dice=2 * tp / (2 * tp + fp + fn),
        iou=tp / union,
    )


def metric_suite(counts, class_names=None, bce=None, empty_value=1.0):
    """Metrics from confusion counts.

    A class absent from both prediction and ground truth (TP + FP + FN == 0) scores
    `empty_value` for precision, recall, dice and iou. The macro row is the unweighted mean
    over classes.

    Returns:
        MetricSuite: The metrics.

    """
    class_names = tuple(class_names or ClassSet())
    if len(class_names) != len(counts.tp):
        raise ShapeError(
            "%d class names for %d counted channels" % (len(class_names), len(counts.tp))
        )
    per_class = OrderedDict(
        (name, _class_metrics(tp, fp, fn, tn, empty_value))
        for name, tp, fp, fn, tn in zip(class_names, counts.tp, counts.fp, counts.fn, counts.tn)
    )
    return MetricSuite(class_names, per_class, _macro(per_class), bce)


def _macro(per_class):
    return {m: float(np.mean([row[m] for row in per_class.values()])) for m in METRICS}


def average_suites(suites, bce=None):
    """Per-image aggregation: mean of every per-class metric over `suites`, then macro."""
    if not suites:
        raise DatasetError("No suites to average")
    names = suites[0].class_names
    per_class = OrderedDict(
        (name, {m: float(np.mean([s.per_class[name][m] for s in suites])) for m in METRICS})
        for name in names
    )
    return MetricSuite(names, per_class, _macro(per_class), bce)


def _aggregate(ids, counts, class_names, bce, aggregate):
    if aggregate not in ("global", "image"):
        raise ValidationError("Aggregation must be 'global' or 'image', got %r" % aggregate)
    per_image = OrderedDict(
        (i, metric_suite(c, class_names)) for i, c in zip(ids, counts)
    )
    if aggregate == "global":
        total = counts[0]
        for c in counts[1:]:
            total = total + c
        suite = metric_suite(total, class_names, bce)
    else:
        suite = average_suites(list(per_image.values()), bce)
    return Evaluation(suite, per_image)


def evaluate_corpus(model, records, threshold=0.5, batch_size=8, class_set=None, aggregate="global"):
    """Run the model on `records`, threshold, and score against their masks.

    Counts are summed over the whole corpus per class before macro-averaging
    (`aggregate="global"`); `aggregate="image"` averages per-image suites instead.

    Returns:
        Evaluation: Aggregated suite (with corpus BCE) and per-image suites.

    """
    if not records:
        raise DatasetError("Cannot evaluate an empty corpus")
    class_names = tuple(class_set or ClassSet())
    counts = []
    weighted_bce = 0.0
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        images = np.stack([r.image for r in chunk])
        masks = np.stack([r.mask for r in chunk])
        logits = forward(model, images)
        weighted_bce += bce_with_logits(logits, masks.astype(logits.dtype)) * len(chunk)
        pred = binarize(sigmoid(logits), threshold)
        counts.extend(confusion(p, m) for p, m in zip(pred, masks))
    bce = float(weighted_bce / len(records))
    evaluation = _aggregate([r.id for r in records], counts, class_names, bce, aggregate)
    logger.info("Evaluated %d records, macro dice %.4f", len(records), evaluation.suite.macro["dice"])
    return evaluation


def probability_bce(probabilities, targets):
    """Mean BCE of stored probabilities, clipped to (1e-7, 1 - 1e-7)."""
    p = np.clip(np.asarray(probabilities, dtype=np.float64), PROBABILITY_CLIP, 1 - PROBABILITY_CLIP)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError("Probability shape %s differs from target %s" % (p.shape, t.shape))
    return float(np.mean(-(t * np.log(p) + (1 - t) * np.log1p(-p))))


def evaluate_masks(ids, preds, gts, class_set=None, probabilities=None, aggregate="global"):
    """Score stored prediction masks against ground-truth masks.

    Args:
        ids (list of str): Record ids.
        preds (list of ndarray): Binary (C, H, W) prediction masks.
        gts (list of ndarray): Binary (C, H, W) ground-truth masks.
        class_set (ClassSet, optional): Channel names.
        probabilities (list of ndarray, optional): Probability maps; when given for every
            record the corpus BCE is reported.
        aggregate (str, optional): "global" or "image". Defaults to "global".

    Returns:
        Evaluation: Aggregated and per-image suites.

    """
    if not ids:
        raise DatasetError("Cannot evaluate an empty corpus")
    if not len(ids) == len(preds) == len(gts):
        raise DatasetError("Predictions and ground truth are not aligned")
    class_names = tuple(class_set or ClassSet())
    counts = [confusion(p, g) for p, g in zip(preds, gts)]
    bce = None
    if probabilities is not None:
        sizes = [g.size for g in gts]
        bce = float(
            sum(probability_bce(p, g) * n for p, g, n in zip(probabilities, gts, sizes))
            / sum(sizes)
        )
    return _aggregate(list(ids), counts, class_names, bce, aggregate)


def format_report(suite):
    """Text table with one column per class and a macro column."""
    headers = ["Metric"] + list(suite.class_names) + ["Macro"]
    rows = []
    bce = "-" if suite.bce is None else "%.6f" % suite.bce
    rows.append(["BCE Loss"] + ["-"] * len(suite.class_names) + [bce])
    for key, label in REPORT_ROWS.items():
        rows.append(
            [label]
            + ["%.6f" % suite.per_class[name][key] for name in suite.class_names]
            + ["%.6f" % suite.macro[key]]
        )
    widths = [max(len(row[i]) for row in [headers] + rows) for i in range(len(headers))]
    lines = []
    for row in [headers] + rows:
        cells = [row[0].ljust(widths[0])]
        cells += [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"
