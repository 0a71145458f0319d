"""Synthetic EL cell images with overlapping multi-hot ground truth.

A sample is described as an `Annotation` first (busbar rectangles, crack polylines, dark-blob
and non-cell bitmaps). The mask is the rasterized annotation and the image is painted from the
mask planes, so image, annotation file and mask container always agree.
"""
import hashlib
import json
import logging
import math
from collections import namedtuple
from dataclasses import asdict, dataclass
from pathlib import Path
import numpy as np
from joblib import Parallel, delayed
from skimage import draw, io
from multiseg import ClassSet
from multiseg.annotation import AnnotatedObject, Annotation, Bitmap, Polygon, Polyline
from multiseg.errors import ConfigError, StorageError
from multiseg.masks import save_mask
from multiseg.rasterize import rasterize

logger = logging.getLogger(__name__)

SOURCE_TAG = "synthetic"
MAX_HEADING = math.pi / 3

#: image is uint8 (H, W); mask is uint8 (C, H, W); components maps class name to
#: the number of connected objects drawn for it.
SyntheticSample = namedtuple("SyntheticSample", ["image", "mask", "components", "annotation"])


@dataclass
class SynthConfig:
    """Generator settings. Intensities are fractions of full scale."""

    image_size: int = 64
    busbar_count: int = 3
    busbar_width: int = 3
    crack_count: tuple = (1, 3)
    crack_step: float = 3.0
    crack_direction_std: float = 0.3
    crack_thickness: int = 2
    dark_blob_probability: float = 0.3
    dark_blob_radius: tuple = (3, 6)
    corner_radius: int = 6
    noise_std: float = 0.02
    background: float = 0.75
    busbar_gain: float = 0.4
    crack_gain: float = 0.3
    dark_gain: float = 0.25
    non_cell_level: float = 0.02
    seed: int = 0

    def validate(self):
        size = self.image_size
        if not isinstance(size, int) or size < 8:
            raise ConfigError("synth.image_size must be an integer >= 8")
        if self.busbar_count < 0 or self.busbar_width < 1:
            raise ConfigError("synth.busbar_count must be >= 0 and busbar_width >= 1")
        if self.busbar_count and size / (self.busbar_count + 1) < self.busbar_width + 2:
            raise ConfigError(
                "synth: %d busbars of width %d do not fit a %d px cell"
                % (self.busbar_count, self.busbar_width, size)
            )
        for name in ("crack_count", "dark_blob_radius"):
            if len(getattr(self, name)) != 2:
                raise ConfigError("synth.%s must be a range [min, max]" % name)
        low, high = self.crack_count
        if not 0 <= low <= high:
            raise ConfigError("synth.crack_count must be a range [min, max] with 0 <= min <= max")
        if self.crack_thickness < 2:
            raise ConfigError("synth.crack_thickness must be >= 2")
        if high and size / high < 2 * (self.crack_thickness + 1) + 2:
            raise ConfigError(
                "synth: %d cracks of thickness %d do not fit a %d px cell"
                % (high, self.crack_thickness, size)
            )
        if self.crack_step <= 0 or self.crack_direction_std < 0:
            raise ConfigError("synth.crack_step must be > 0 and crack_direction_std >= 0")
        if not 0 <= self.dark_blob_probability <= 1:
            raise ConfigError("synth.dark_blob_probability must be in [0, 1]")
        r_low, r_high = self.dark_blob_radius
        if not 1 <= r_low <= r_high or 2 * r_high + 1 > size:
            raise ConfigError("synth.dark_blob_radius must be a range within the cell")
        if not 0 <= self.corner_radius < size // 2:
            raise ConfigError("synth.corner_radius must be in [0, image_size / 2)")
        if self.noise_std < 0:
            raise ConfigError("synth.noise_std must be >= 0")
        for name in ("background", "busbar_gain", "crack_gain", "dark_gain", "non_cell_level"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError("synth.%s must be in [0, 1]" % name)
        return self


def _busbar_polygons(config):
    size, width = config.image_size, config.busbar_width
    polygons = []
    for k in range(config.busbar_count):
        center = (k + 1) * size / (config.busbar_count + 1)
        x0 = int(round(center - width / 2.0))
        x1 = x0 + width - 1
        polygons.append(
            np.array([[x0, 0], [x1, 0], [x1, size - 1], [x0, size - 1]], dtype=np.float64)
        )
    return polygons


def _crack_path(rng, config, band_top, band_bottom):
    """Random walk from the left to the right cell edge inside one horizontal band."""
    pad = config.crack_thickness + 1
    low, high = band_top + pad, band_bottom - 1 - pad
    x = float(config.corner_radius)
    end = float(config.image_size - 1 - config.corner_radius)
    y = rng.uniform(low, high)
    heading = float(np.clip(rng.normal(0.0, config.crack_direction_std), -MAX_HEADING, MAX_HEADING))
    points = [(x, y)]
    while x < end:
        x = min(x + config.crack_step * math.cos(heading), end)
        y = float(np.clip(y + config.crack_step * math.sin(heading), low, high))
        points.append((x, y))
        heading = float(
            np.clip(
                heading + rng.normal(0.0, config.crack_direction_std),
                -MAX_HEADING,
                MAX_HEADING,
            )
        )
    return np.array(points, dtype=np.float64)


def _corner_patch(radius):
    """Top-left corner pixels lying outside a quarter circle of `radius`."""
    if radius == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    yy, xx = np.mgrid[0:radius, 0:radius].astype(np.float64)
    center = radius - 0.5
    return ((center - xx) ** 2 + (center - yy) ** 2 > radius ** 2).astype(np.uint8)


def _corner_objects(config):
    patch = _corner_patch(config.corner_radius)
    if not patch.any():
        return []
    far = config.image_size - config.corner_radius
    placements = [
        ((0, 0), patch),
        ((far, 0), patch[:, ::-1]),
        ((0, far), patch[::-1, :]),
        ((far, far), patch[::-1, ::-1]),
    ]
    return [
        AnnotatedObject("non-cell", Bitmap(origin, np.ascontiguousarray(p)))
        for origin, p in placements
    ]


def _dark_blob(rng, config):
    radius = int(rng.integers(config.dark_blob_radius[0], config.dark_blob_radius[1] + 1))
    size = config.image_size
    cx = int(rng.integers(radius, size - radius))
    cy = int(rng.integers(radius, size - radius))
    patch = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.uint8)
    rr, cc = draw.disk((radius, radius), radius + 0.5, shape=patch.shape)
    patch[rr, cc] = 1
    return AnnotatedObject("dark", Bitmap((cx - radius, cy - radius), patch))


def sample_name(index):
    return "synth_%05d" % index


def generate_sample(config, index, class_set=None):
    """Generate sample `index`; the result depends only on (config.seed, index).

    Returns:
        SyntheticSample: Image, mask, per-class component counts and annotation.

    """
    config.validate()
    class_set = class_set or ClassSet()
    rng = np.random.default_rng([config.seed, index])
    size = config.image_size

    objects = [AnnotatedObject("busbar", Polygon(p)) for p in _busbar_polygons(config)]
    n_cracks = int(rng.integers(config.crack_count[0], config.crack_count[1] + 1))
    for k in range(n_cracks):
        band = size / n_cracks
        path = _crack_path(rng, config, k * band, (k + 1) * band)
        objects.append(AnnotatedObject("crack", Polyline(path, config.crack_thickness)))
    has_blob = rng.random() < config.dark_blob_probability
    if has_blob:
        objects.append(_dark_blob(rng, config))
    corners = _corner_objects(config)
    objects.extend(corners)

    annotation = Annotation(
        sample_name(index) + ".png", size, size, objects, source=SOURCE_TAG
    )
    mask = rasterize(annotation, class_set)
    planes = {name: mask[class_set.index(name)].astype(bool) for name in class_set}

    image = np.full((size, size), config.background, dtype=np.float64)
    image[planes["busbar"]] *= config.busbar_gain
    image[planes["crack"]] *= config.crack_gain
    image[planes["dark"]] *= config.dark_gain
    image[planes["non-cell"]] = config.non_cell_level
    image += rng.normal(0.0, config.noise_std, size=image.shape)
    image = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)

    components = {name: 0 for name in class_set}
    components.update(
        {
            "dark": int(has_blob),
            "busbar": config.busbar_count,
            "crack": n_cracks,
            "non-cell": len(corners),
        }
    )
    return SyntheticSample(image, mask, components, annotation)


def _write_sample(config, index, out_dir, class_set):
    sample = generate_sample(config, index, class_set)
    name = sample_name(index)
    try:
        io.imsave(str(out_dir / "images" / (name + ".png")), sample.image, check_contrast=False)
        (out_dir / "annotations" / (name + ".json")).write_text(sample.annotation.to_json())
    except OSError as e:
        raise StorageError("Could not write sample '%s': %s" % (name, e)) from e
    save_mask(sample.mask, out_dir / "masks" / (name + ".mssm"), class_set)
    return {
        "id": name,
        "image": "images/%s.png" % name,
        "annotation": "annotations/%s.json" % name,
        "mask": "masks/%s.mssm" % name,
        "components": sample.components,
        "pixels": dict(zip(class_set, sample.mask.sum(axis=(1, 2)).tolist())),
    }


def corpus_digest(out_dir, entries):
    """SHA-256 over every image, annotation and mask file in manifest order."""
    digest = hashlib.sha256()
    for entry in entries:
        for key in ("image", "annotation", "mask"):
            digest.update(entry[key].encode("utf-8"))
            digest.update((Path(out_dir) / entry[key]).read_bytes())
    return digest.hexdigest()


def generate_corpus(config, n, out_dir, class_set=None, jobs=1):
    """Write `n` samples plus `manifest.json` to `out_dir`.

    Layout: `images/*.png`, `annotations/*.json`, `masks/*.mssm`. The manifest lists every
    sample with its component counts and per-class pixel counts, and a digest of all files.

    Returns:
        dict: The manifest.

    """
    if n < 1:
        raise ConfigError("Corpus size must be >= 1, got %d" % n)
    config.validate()
    class_set = class_set or ClassSet()
    out_dir = Path(out_dir)
    try:
        for sub in ("images", "annotations", "masks"):
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError("Could not create corpus directory '%s': %s" % (out_dir, e)) from e

    logger.info("Generating %d synthetic samples in %s (seed %d)", n, out_dir, config.seed)
    entries = Parallel(n_jobs=jobs)(
        delayed(_write_sample)(config, i, out_dir, class_set) for i in range(n)
    )
    manifest = {
        "config": asdict(config),
        "class_names": list(class_set),
        "n": n,
        "samples": entries,
        "digest": corpus_digest(out_dir, entries),
    }
    try:
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as e:
        raise StorageError("Could not write manifest: %s" % e) from e
    logger.info("Corpus digest %s", manifest["digest"])
    return manifest
