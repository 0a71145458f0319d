"""Connected-component analysis of binarized defect planes."""
import csv
import logging
import math
from collections import OrderedDict, namedtuple
import numpy as np
from scipy import ndimage
from multiseg import ClassSet
from multiseg.errors import DatasetError, StorageError, ValidationError

logger = logging.getLogger(__name__)

GT_SOURCE = "GT"
EXPORT_FIELDS = ["image", "source", "count", "areas", "perimeters", "slopes"]

#: Geometry of one connected component. bbox is (min_row, min_col, max_row, max_col)
#: inclusive, centroid is (row, col) and slope is in radians within [-pi/2, pi/2).
Component = namedtuple(
    "Component", ["label", "area", "perimeter", "bbox", "centroid", "slope"]
)
#: counts maps source to per-image counts in image order, stats and geometry hold
#: distribution summaries per source, rows are the export rows.
CrackSummary = namedtuple("CrackSummary", ["images", "counts", "stats", "geometry", "rows"])


def _structure(connectivity):
    if connectivity not in (4, 8):
        raise ValidationError("Connectivity must be 4 or 8, got %r" % connectivity)
    return ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)


def connected_components(plane, connectivity=8):
    """Label the connected components of a binary plane.

    Labels are dense from 1 and ordered by each component's first pixel in a row-major scan.

    Returns:
        tuple (ndarray, list of Component): int32 label plane (0 = background) and components.

    """
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValidationError("Expected a 2D plane, got shape %s" % (plane.shape,))
    labels, n = ndimage.label(plane != 0, structure=_structure(connectivity))
    if n == 0:
        return labels.astype(np.int32), []
    found, first = np.unique(labels.ravel(), return_index=True)
    keep = found != 0
    order = found[keep][np.argsort(first[keep], kind="stable")]
    lookup = np.zeros(n + 1, dtype=np.int32)
    lookup[order] = np.arange(1, n + 1, dtype=np.int32)
    labels = lookup[labels]

    components = []
    for label, region in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = np.nonzero(labels[region] == label)
        rows = rows + region[0].start
        cols = cols + region[1].start
        components.append(component_geometry(rows, cols, label))
    return labels, components


def _perimeter(rows, cols):
    """Pixel edges facing background or the image border."""
    r0, c0 = rows.min(), cols.min()
    local = np.zeros((rows.max() - r0 + 3, cols.max() - c0 + 3), dtype=bool)
    local[rows - r0 + 1, cols - c0 + 1] = True
    inner = local[1:-1, 1:-1]
    exposed = 0
    for shifted in (local[:-2, 1:-1], local[2:, 1:-1], local[1:-1, :-2], local[1:-1, 2:]):
        exposed += np.count_nonzero(inner & ~shifted)
    return int(exposed)


def _slope(rows, cols):
    if len(rows) < 2:
        return 0.0
    x = cols.astype(np.float64)
    y = -rows.astype(np.float64)
    cov = np.cov(np.vstack([x, y]), bias=True)
    cxx, cyy, cxy = cov[0, 0], cov[1, 1], cov[0, 1]
    scale = max(cxx + cyy, 1.0)
    if abs(cxx - cyy) <= 1e-12 * scale and abs(cxy) <= 1e-12 * scale:
        return 0.0
    theta = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
    if theta >= math.pi / 2:
        theta -= math.pi
    return theta


def component_geometry(rows, cols, label=1):
    """Geometry of the pixel set given by `rows` and `cols`.

    Args:
        rows (ndarray): Row index of every member pixel.
        cols (ndarray): Column index of every member pixel.
        label (int, optional): Label to record. Defaults to 1.

    Returns:
        Component: Area, exposed-edge perimeter, bounding box, centroid and the angle of the
        first principal axis, measured counterclockwise from the column axis.

    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size == 0:
        raise ValidationError("A component needs at least one pixel")
    return Component(
        label=int(label),
        area=int(rows.size),
        perimeter=_perimeter(rows, cols),
        bbox=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
        centroid=(float(rows.mean()), float(cols.mean())),
        slope=_slope(rows, cols),
    )


def component_filter(components, min_area=1):
    """Components with at least `min_area` pixels."""
    return [c for c in components if c.area >= min_area]


def describe(values):
    """Count, mean, median, sample SD, quartiles and range of `values`."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        empty = {k: 0.0 for k in ("mean", "median", "sd", "q1", "q3", "min", "max")}
        empty["n"] = 0
        return empty
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        "n": int(values.size),
        "mean": float(values.mean()),
        "median": float(median),
        "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "q1": float(q1),
        "q3": float(q3),
        "min": float(values.min()),
        "max": float(values.max()),
    }


def crack_count_summary(
    gt_masks, predictions, class_set=None, class_name="crack", connectivity=8, min_area=1
):
    """Per-image component counts of one class for the ground truth and each model.

    Args:
        gt_masks (dict): Image id to ground-truth (C, H, W) mask.
        predictions (dict): Model name to a dict of image id to predicted (C, H, W) mask.
        class_set (ClassSet, optional): Channel order.
        class_name (str, optional): Class analyzed. Defaults to "crack".
        connectivity (int, optional): 4 or 8. Defaults to 8.
        min_area (int, optional): Smaller components are ignored. Defaults to 1.

    Returns:
        CrackSummary: Counts, count and geometry distributions per source, and export rows.

    Raises:
        DatasetError: A model's image ids differ from the ground truth's.

    """
    class_set = class_set or ClassSet()
    channel = class_set.index(class_name)
    images = sorted(gt_masks)
    if not images:
        raise DatasetError("No ground-truth masks to analyze")
    sources = OrderedDict([(GT_SOURCE, gt_masks)])
    for name in predictions:
        if name == GT_SOURCE:
            raise ValidationError("Model name '%s' is reserved for the ground truth" % GT_SOURCE)
        if sorted(predictions[name]) != images:
            missing = sorted(set(images) ^ set(predictions[name]))
            raise DatasetError("Model '%s' is not aligned with the ground truth: %s" % (name, missing))
        sources[name] = predictions[name]

    counts, stats, geometry, rows = OrderedDict(), OrderedDict(), OrderedDict(), []
    for source, masks in sources.items():
        counts[source] = []
        found = []
        for image in images:
            _, components = connected_components(masks[image][channel], connectivity)
            components = component_filter(components, min_area)
            counts[source].append(len(components))
            found.extend(components)
            rows.append(
                {
                    "image": image,
                    "source": source,
                    "count": len(components),
                    "areas": ";".join(str(c.area) for c in components),
                    "perimeters": ";".join(str(c.perimeter) for c in components),
                    "slopes": ";".join("%.6f" % c.slope for c in components),
                }
            )
        stats[source] = describe(counts[source])
        geometry[source] = {
            "area": describe([c.area for c in found]),
            "perimeter": describe([c.perimeter for c in found]),
            "slope": describe([c.slope for c in found]),
        }
        logger.info("%s: mean %s count %.3f", source, class_name, stats[source]["mean"])
    return CrackSummary(images, counts, stats, geometry, rows)


def write_rows_csv(rows, path):
    """Write export rows, one per (image, source), as comma separated values."""
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=EXPORT_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        raise StorageError("Could not write '%s': %s" % (path, e)) from e
