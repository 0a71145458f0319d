"""Label statistics of a multi-label corpus."""
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
import numpy as np
from multiseg import ClassSet
from multiseg.errors import DatasetError
from multiseg.masks import validate_mask

logger = logging.getLogger(__name__)


@dataclass
class DatasetStats:
    """Corpus-level label statistics.

    Attributes:
        n_images (int): Number of masks counted.
        n_pixels (int): Total pixels over all masks.
        cardinality (float): Mean number of active labels per pixel.
        density (float): Cardinality divided by the number of classes.
        single_label_fraction (float): Fraction of pixels with exactly one active label.
        image_frequency (dict): Per class, fraction of images where the class is active anywhere.
        pixel_frequency (dict): Per class, activations divided by total pixels.
        imbalance_ratio (dict): Per class, pixel frequency relative to the most frequent class.
        mean_imbalance_ratio (float): Arithmetic mean of the per-class ratios.

    """

    n_images: int
    n_pixels: int
    cardinality: float
    density: float
    single_label_fraction: float
    image_frequency: dict
    pixel_frequency: dict
    imbalance_ratio: dict
    mean_imbalance_ratio: float

    def to_dict(self):
        return asdict(self)


def imbalance_ratios(frequencies):
    """Per-class frequency divided by the largest frequency.

    Args:
        frequencies (array_like): Per-class pixel frequencies.

    Returns:
        ndarray: Ratios, 1.0 for the most frequent class. All zeros when no class is active.

    """
    frequencies = np.asarray(frequencies, dtype=np.float64)
    top = frequencies.max() if frequencies.size else 0.0
    if top <= 0:
        logger.warning("No class is active anywhere, imbalance ratios reported as 0")
        return np.zeros_like(frequencies)
    return frequencies / top


def _masks_of(items):
    for item in items:
        yield item.mask if hasattr(item, "mask") else item


def compute_dataset_stats(records, class_set=None):
    """Compute label statistics over records (or bare masks).

    Counting is done in integers and divided once, so the result does not depend on the
    order of `records`.

    Raises:
        DatasetError: Empty corpus.

    """
    class_set = class_set or ClassSet()
    n_classes = len(class_set)
    activations = np.zeros(n_classes, dtype=np.int64)
    images_with = np.zeros(n_classes, dtype=np.int64)
    single = 0
    n_pixels = 0
    n_images = 0
    for mask in _masks_of(records):
        mask = validate_mask(mask, class_set)
        per_class = mask.sum(axis=(1, 2), dtype=np.int64)
        activations += per_class
        images_with += per_class > 0
        single += int(np.count_nonzero(mask.sum(axis=0, dtype=np.int64) == 1))
        n_pixels += mask.shape[1] * mask.shape[2]
        n_images += 1
    if n_images == 0:
        raise DatasetError("Cannot compute statistics of an empty corpus")

    pixel_frequency = activations / n_pixels
    ratios = imbalance_ratios(pixel_frequency)
    cardinality = activations.sum() / n_pixels
    names = list(class_set)
    stats = DatasetStats(
        n_images=n_images,
        n_pixels=n_pixels,
        cardinality=float(cardinality),
        density=float(cardinality / n_classes),
        single_label_fraction=single / n_pixels,
        image_frequency=dict(zip(names, (images_with / n_images).tolist())),
        pixel_frequency=dict(zip(names, pixel_frequency.tolist())),
        imbalance_ratio=dict(zip(names, ratios.tolist())),
        mean_imbalance_ratio=float(ratios.mean()),
    )
    logger.debug("Statistics over %d images: %s", n_images, stats)
    return stats


def source_breakdown(train, val):
    """Base image and record counts per source tag, split into train and validation.

    Returns:
        OrderedDict: One entry per source (sorted) plus "Total", each with the keys
            bases, records, train_bases, train_records, val_bases, val_records.

    """
    rows = OrderedDict()
    for side, records in (("train", train), ("val", val)):
        for r in records:
            row = rows.setdefault(
                r.source,
                {"train_bases": set(), "train_records": 0, "val_bases": set(), "val_records": 0},
            )
            row[side + "_bases"].add(r.base_id)
            row[side + "_records"] += 1

    table = OrderedDict()
    for source in sorted(rows):
        row = rows[source]
        table[source] = {
            "train_bases": len(row["train_bases"]),
            "train_records": row["train_records"],
            "val_bases": len(row["val_bases"]),
            "val_records": row["val_records"],
        }
    keys = ("train_bases", "train_records", "val_bases", "val_records")
    table["Total"] = {k: sum(t[k] for t in table.values()) for k in keys}
    for row in table.values():
        row["bases"] = row["train_bases"] + row["val_bases"]
        row["records"] = row["train_records"] + row["val_records"]
    return table
