"""Rasterization of annotations into multi-hot masks."""
import logging
import numpy as np
from skimage import draw
from multiseg import ClassSet
from multiseg.annotation import Bitmap, Polygon, Polyline

logger = logging.getLogger(__name__)


def _pixel_centers(rows, cols):
    return np.meshgrid(
        np.arange(rows.start, rows.stop, dtype=np.float64),
        np.arange(cols.start, cols.stop, dtype=np.float64),
        indexing="ij",
    )


def fill_polygon(points, height, width):
    """Boolean plane of the polygon: nonzero winding interior plus its outline.

    Args:
        points (ndarray): (n, 2) vertices as (x, y) pixel centers.
        height (int): Plane height.
        width (int): Plane width.

    Returns:
        ndarray: 2D bool array of shape (height, width).

    """
    plane = np.zeros((height, width), dtype=bool)
    xs, ys = points[:, 0], points[:, 1]
    rows = slice(max(int(np.floor(ys.min())), 0), min(int(np.ceil(ys.max())) + 1, height))
    cols = slice(max(int(np.floor(xs.min())), 0), min(int(np.ceil(xs.max())) + 1, width))
    py, px = _pixel_centers(rows, cols)

    winding = np.zeros(py.shape, dtype=np.int32)
    for (x0, y0), (x1, y1) in zip(points, np.roll(points, -1, axis=0)):
        is_left = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        winding += (y0 <= py) & (py < y1) & (is_left > 0)
        winding -= (y1 <= py) & (py < y0) & (is_left < 0)
    plane[rows, cols] = winding != 0

    rr, cc = draw.polygon_perimeter(ys, xs, shape=(height, width), clip=False)
    plane[rr, cc] = True
    return plane


def stroke_polyline(points, thickness, height, width):
    """Boolean plane of a polyline drawn with a round brush of diameter `thickness`.

    A pixel is set when its center lies within thickness / 2 of any segment.
    """
    plane = np.zeros((height, width), dtype=bool)
    radius = thickness / 2.0
    for a, b in zip(points[:-1], points[1:]):
        rows = slice(
            max(int(np.floor(min(a[1], b[1]) - radius)), 0),
            min(int(np.ceil(max(a[1], b[1]) + radius)) + 1, height),
        )
        cols = slice(
            max(int(np.floor(min(a[0], b[0]) - radius)), 0),
            min(int(np.ceil(max(a[0], b[0]) + radius)) + 1, width),
        )
        py, px = _pixel_centers(rows, cols)
        dx, dy = b[0] - a[0], b[1] - a[1]
        length2 = dx * dx + dy * dy
        if length2 > 0:
            t = np.clip(((px - a[0]) * dx + (py - a[1]) * dy) / length2, 0.0, 1.0)
        else:
            t = np.zeros_like(px)
        ex = px - (a[0] + t * dx)
        ey = py - (a[1] + t * dy)
        plane[rows, cols] |= ex * ex + ey * ey <= radius * radius
    return plane


def rasterize(annotation, class_set=None):
    """Rasterize all objects of an annotation into a multi-hot mask.

    Objects of different classes that overlap set several planes at the same pixel.

    Args:
        annotation (Annotation): Validated annotation.
        class_set (ClassSet, optional): Channel order. Defaults to the default class set.

    Returns:
        ndarray: uint8 mask of shape (len(class_set), height, width) with values in {0, 1}.

    """
    class_set = class_set or ClassSet()
    h, w = annotation.height, annotation.width
    mask = np.zeros((len(class_set), h, w), dtype=np.uint8)
    for obj in annotation.objects:
        channel = class_set.index(obj.class_name)
        geom = obj.geometry
        if isinstance(geom, Polygon):
            mask[channel] |= fill_polygon(geom.points, h, w)
        elif isinstance(geom, Polyline):
            mask[channel] |= stroke_polyline(geom.points, geom.thickness, h, w)
        elif isinstance(geom, Bitmap):
            x0, y0 = geom.origin
            p_h, p_w = geom.patch.shape
            mask[channel, y0 : y0 + p_h, x0 : x0 + p_w] |= geom.patch.astype(np.uint8)
        else:
            raise TypeError("Unsupported geometry %r" % (geom,))
    logger.debug(
        "Rasterized %d objects of '%s', active pixels per class: %s",
        len(annotation.objects),
        annotation.image,
        dict(zip(class_set, mask.sum(axis=(1, 2)).tolist())),
    )
    return mask
