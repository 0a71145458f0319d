"""Tools for turning annotated EL images into training records."""
import json
import logging
from collections import namedtuple
from dataclasses import dataclass, field, replace
from pathlib import Path
import numpy as np
from skimage import color, io, transform
from sklearn.model_selection import train_test_split
from multiseg import ClassSet, stats
from multiseg.annotation import read_annotation
from multiseg.errors import (
    AugmentationError,
    ConfigError,
    DatasetError,
    StorageError,
    ValidationError,
)
from multiseg.masks import validate_mask
from multiseg.rasterize import rasterize

logger = logging.getLogger(__name__)

VARIANTS = ("none", "flip_x", "flip_y", "flip_xy")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class DataConfig:
    """Preprocessing settings.

    Attributes:
        image_size (int): Square size images and masks are resized to.
        mean (tuple of float): Per-channel normalization mean.
        std (tuple of float): Per-channel normalization standard deviation.
        split (tuple of int): Train to validation ratio on base images.
        source (str): Source tag used when an annotation carries none.

    """

    image_size: int = 256
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD
    split: tuple = (4, 1)
    source: str = "corpus"

    def validate(self):
        if not isinstance(self.image_size, int) or self.image_size < 1:
            raise ConfigError("data.image_size must be a positive integer")
        if len(self.mean) != len(self.std):
            raise ConfigError("data.mean and data.std must have the same length")
        if any(s <= 0 for s in self.std):
            raise ConfigError("data.std values must be > 0")
        if len(self.split) != 2 or any(int(v) < 1 for v in self.split):
            raise ConfigError("data.split must be two positive integers, e.g. [4, 1]")
        return self


@dataclass
class SampleRecord:
    """An image and its mask with provenance."""

    id: str
    source: str
    base_id: str
    variant: str
    image: np.ndarray
    mask: np.ndarray
    fold: int = field(default=None)


#: Output of `prepare_corpus`.
PreparedCorpus = namedtuple("PreparedCorpus", ["train", "val", "stats"])


def load_image(path, in_channels=1):
    """Read an 8/16-bit grayscale (or RGB) PNG scaled to [0, 1].

    Returns:
        ndarray: float32 image of shape (in_channels, H, W), the gray plane replicated.

    """
    try:
        raw = io.imread(str(path))
    except (OSError, ValueError) as e:
        raise StorageError("Could not read image '%s': %s" % (path, e)) from e
    scales = {np.dtype(np.uint8): 255.0, np.dtype(np.uint16): 65535.0}
    if raw.dtype not in scales:
        raise ValidationError("%s: unsupported pixel type %s" % (path, raw.dtype))
    gray = raw.astype(np.float64) / scales[raw.dtype]
    if gray.ndim == 3 and gray.shape[-1] in (3, 4):
        gray = color.rgb2gray(gray[..., :3])
    if gray.ndim != 2:
        raise ValidationError("%s: expected a 2D image, got shape %s" % (path, raw.shape))
    return to_channels(gray.astype(np.float32), in_channels)


def to_channels(gray, in_channels):
    """Replicate a (H, W) plane into (in_channels, H, W)."""
    return np.repeat(np.asarray(gray, dtype=np.float32)[None], in_channels, axis=0)


def resize_image(image, target=256):
    """Bilinear resize of a (C, H, W) or (H, W) image to target x target."""
    image = np.asarray(image, dtype=np.float32)
    planes = image[None] if image.ndim == 2 else image
    if planes.shape[1:] == (target, target):
        return image.copy()
    resized = np.stack(
        [
            transform.resize(
                p,
                (target, target),
                order=1,
                mode="edge",
                anti_aliasing=False,
                preserve_range=True,
            )
            for p in planes
        ]
    ).astype(np.float32)
    return resized[0] if image.ndim == 2 else resized


def resize_mask(mask, target=256):
    """Nearest-neighbor resize of every mask plane, keeping values binary."""
    mask = validate_mask(mask)
    if mask.shape[1:] == (target, target):
        return mask.copy()
    return np.stack(
        [
            transform.resize(
                p,
                (target, target),
                order=0,
                mode="edge",
                anti_aliasing=False,
                preserve_range=True,
            )
            for p in mask
        ]
    ).astype(np.uint8)


def normalize_image(image, mean=IMAGENET_MEAN, std=IMAGENET_STD):
    """Channel-wise (x - mean) / std of an image already scaled to [0, 1]."""
    image = np.asarray(image, dtype=np.float32)
    if len(mean) != image.shape[0] or len(std) != image.shape[0]:
        raise ValidationError(
            "Normalization needs %d means and stds, got %d and %d"
            % (image.shape[0], len(mean), len(std))
        )
    std = np.asarray(std, dtype=np.float32)
    if np.any(std <= 0):
        raise ValidationError("Normalization std values must be > 0")
    mean = np.asarray(mean, dtype=np.float32)
    return (image - mean[:, None, None]) / std[:, None, None]


def flip_augment(record):
    """Return the four flip variants (none, flip_x, flip_y, flip_xy) of a base record.

    flip_x mirrors columns, flip_y mirrors rows. Image and mask are flipped identically.

    Raises:
        AugmentationError: If `record` is already a variant.

    """
    if record.variant != "none":
        raise AugmentationError(
            "Record '%s' is already augmented (%s)" % (record.id, record.variant)
        )
    flips = {"none": (), "flip_x": (-1,), "flip_y": (-2,), "flip_xy": (-2, -1)}
    variants = []
    for variant in VARIANTS:
        axes = flips[variant]
        image = np.flip(record.image, axis=axes) if axes else record.image
        mask = np.flip(record.mask, axis=axes) if axes else record.mask
        variants.append(
            replace(
                record,
                id="%s_%s" % (record.base_id, variant),
                variant=variant,
                image=np.ascontiguousarray(image),
                mask=np.ascontiguousarray(mask),
            )
        )
    return variants


def augment_all(records):
    """Flip-augment a list of base records, variants of one base kept together."""
    return [variant for record in records for variant in flip_augment(record)]


def base_ids_of(records):
    """Base ids of unaugmented records, rejecting variants and duplicates."""
    ids = []
    for r in records:
        if isinstance(r, SampleRecord):
            if r.variant != "none":
                raise AugmentationError(
                    "Splitting must happen before augmentation, got variant '%s'" % r.id
                )
            ids.append(r.base_id)
        else:
            ids.append(str(r))
    if len(set(ids)) != len(ids):
        raise DatasetError("Duplicate base image ids")
    return ids


def split_dataset(base_records, ratio=(4, 1), seed=0):
    """Seeded split of base images into training and validation ids.

    Args:
        base_records (list): Unaugmented SampleRecords or base ids.
        ratio (tuple of int, optional): Train to validation ratio. Defaults to (4, 1).
        seed (int, optional): Shuffle seed. Defaults to 0.

    Returns:
        tuple (list of str, list of str): Sorted train and validation base ids.

    Raises:
        DatasetError: Fewer than 5 base images.

    """
    ids = sorted(base_ids_of(base_records))
    if len(ids) < 5:
        raise DatasetError("Splitting needs at least 5 base images, got %d" % len(ids))
    train_part, val_part = (int(v) for v in ratio)
    n_val = -(-len(ids) * val_part // (train_part + val_part))
    train_ids, val_ids = train_test_split(
        ids, test_size=n_val, random_state=seed, shuffle=True
    )
    logger.debug("Split %d bases into %d train / %d val", len(ids), len(train_ids), n_val)
    return sorted(train_ids), sorted(val_ids)


def select(records, base_ids):
    """Records whose base id is in `base_ids`, in input order."""
    wanted = set(base_ids)
    return [r for r in records if r.base_id in wanted]


def save_records(path, records, class_set=None):
    """Save records to a compressed numpy archive."""
    if not records:
        raise DatasetError("No records to save to %s" % path)
    class_set = class_set or ClassSet()
    try:
        np.savez_compressed(
            path,
            ids=np.array([r.id for r in records]),
            sources=np.array([r.source for r in records]),
            base_ids=np.array([r.base_id for r in records]),
            variants=np.array([r.variant for r in records]),
            images=np.stack([r.image for r in records]).astype(np.float32),
            masks=np.stack([r.mask for r in records]).astype(np.uint8),
            class_names=np.array(list(class_set)),
        )
    except OSError as e:
        raise StorageError("Could not write records to '%s': %s" % (path, e)) from e


def load_records(path):
    """Load records saved by `save_records`.

    Returns:
        tuple (list of SampleRecord, ClassSet): Records and the class set they were saved with.

    """
    try:
        loaded = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise StorageError("Could not read records from '%s': %s" % (path, e)) from e
    with loaded:
        records = [
            SampleRecord(str(i), str(s), str(b), str(v), img, m)
            for i, s, b, v, img, m in zip(
                loaded["ids"],
                loaded["sources"],
                loaded["base_ids"],
                loaded["variants"],
                loaded["images"],
                loaded["masks"],
            )
        ]
        class_set = ClassSet(str(n) for n in loaded["class_names"])
    return records, class_set


def build_base_record(annotation_path, image_dir, data_config, in_channels, class_set):
    """Parse, rasterize, resize and normalize one annotated image."""
    annotation = read_annotation(annotation_path, class_set)
    gray = load_image(Path(image_dir) / annotation.image, 1)[0]
    if gray.shape != (annotation.height, annotation.width):
        raise ValidationError(
            "%s: image is %dx%d, annotation declares %dx%d"
            % (annotation_path, *gray.shape, annotation.height, annotation.width)
        )
    mask = rasterize(annotation, class_set)
    size = data_config.image_size
    image = normalize_image(
        to_channels(resize_image(gray, size), in_channels),
        data_config.mean,
        data_config.std,
    )
    base_id = Path(annotation.image).stem
    return SampleRecord(
        id="%s_none" % base_id,
        source=annotation.source or data_config.source,
        base_id=base_id,
        variant="none",
        image=image,
        mask=resize_mask(mask, size),
    )


def prepare_corpus(corpus_dir, out_dir, data_config, in_channels=3, class_set=None, seed=0):
    """Parse, rasterize, resize, normalize, split and augment a corpus.

    The corpus directory holds `annotations/*.json` and the images they reference under
    `images/`. Writes `train.npz`, `val.npz`, `split.json` and `stats.json` to `out_dir`.

    Returns:
        PreparedCorpus: Augmented train and validation records and the statistics.

    """
    class_set = class_set or ClassSet()
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    annotation_paths = sorted((corpus_dir / "annotations").glob("*.json"))
    if not annotation_paths:
        raise DatasetError("No annotations found in %s" % (corpus_dir / "annotations"))
    logger.info("Preparing %d annotated images from %s", len(annotation_paths), corpus_dir)
    bases = [
        build_base_record(p, corpus_dir / "images", data_config, in_channels, class_set)
        for p in annotation_paths
    ]
    train_ids, val_ids = split_dataset(bases, data_config.split, seed)
    train = augment_all(select(bases, train_ids))
    val = augment_all(select(bases, val_ids))

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError("Could not create '%s': %s" % (out_dir, e)) from e
    save_records(out_dir / "train.npz", train, class_set)
    save_records(out_dir / "val.npz", val, class_set)
    corpus_stats = stats.compute_dataset_stats(train + val, class_set)
    report = {
        "stats": corpus_stats.to_dict(),
        "sources": stats.source_breakdown(train, val),
    }
    split = {"seed": seed, "ratio": list(data_config.split), "train": train_ids, "val": val_ids}
    _write_json(out_dir / "split.json", split)
    _write_json(out_dir / "stats.json", report)
    logger.info("Prepared %d train and %d val records", len(train), len(val))
    return PreparedCorpus(train, val, corpus_stats)


def _write_json(path, doc):
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise StorageError("Could not write '%s': %s" % (path, e)) from e
