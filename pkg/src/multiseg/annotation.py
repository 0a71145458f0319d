"""Annotation files: one JSON document per image.

Schema::

    {
      "image": "cell_0001.png", "height": 64, "width": 64, "source": "synthetic",
      "objects": [
        {"class": "busbar", "polygon": [[x, y], ...]},
        {"class": "crack", "polyline": [[x, y], ...], "thickness": 2},
        {"class": "dark", "bitmap": {"origin": [x, y], "height": h, "width": w,
                                     "data": "<base64 of row-major packed bits>"}}
      ]
    }

Coordinates are pixel centers, x is the column and y the row. Points outside the frame are
clamped onto it; bitmaps must fit entirely.
"""
import base64
import binascii
import json
import logging
from collections import namedtuple
from pathlib import Path
import numpy as np
from multiseg import ClassSet
from multiseg.errors import AnnotationError, GeometryError, StorageError

logger = logging.getLogger(__name__)

Polygon = namedtuple("Polygon", ["points"])
Polyline = namedtuple("Polyline", ["points", "thickness"])
Bitmap = namedtuple("Bitmap", ["origin", "patch"])
AnnotatedObject = namedtuple("AnnotatedObject", ["class_name", "geometry"])


class Annotation:
    """A validated annotation of one image."""

    def __init__(self, image, height, width, objects, source=""):
        #: str: Image file name, relative to the corpus image directory.
        self.image = image
        #: int: Image height in pixels.
        self.height = height
        #: int: Image width in pixels.
        self.width = width
        #: list of AnnotatedObject: Labeled geometries.
        self.objects = list(objects)
        #: str: Corpus or institution tag.
        self.source = source

    def to_dict(self):
        objects = []
        for obj in self.objects:
            entry = {"class": obj.class_name}
            geom = obj.geometry
            if isinstance(geom, Polygon):
                entry["polygon"] = geom.points.tolist()
            elif isinstance(geom, Polyline):
                entry["polyline"] = geom.points.tolist()
                entry["thickness"] = geom.thickness
            else:
                h, w = geom.patch.shape
                entry["bitmap"] = {
                    "origin": list(geom.origin),
                    "height": h,
                    "width": w,
                    "data": encode_bitmap(geom.patch),
                }
            objects.append(entry)
        return {
            "image": self.image,
            "height": self.height,
            "width": self.width,
            "source": self.source,
            "objects": objects,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def encode_bitmap(patch):
    """Base64 of the row-major packed bits of a 2D binary patch."""
    return base64.b64encode(np.packbits(patch.astype(bool).ravel()).tobytes()).decode(
        "ascii"
    )


def decode_bitmap(data, height, width):
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError, TypeError):
        raise GeometryError("Bitmap data is not valid base64") from None
    if len(raw) * 8 < height * width:
        raise GeometryError(
            "Bitmap data holds %d bits, %dx%d needs %d"
            % (len(raw) * 8, height, width, height * width)
        )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=height * width)
    return bits.reshape(height, width).astype(np.uint8)


def _require(entry, key, where):
    if key not in entry:
        raise AnnotationError("%s: missing field '%s'" % (where, key))
    return entry[key]


def _positive_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise AnnotationError("%s must be a positive integer, got %r" % (where, value))
    return value


def _points(raw, minimum, height, width, where):
    try:
        points = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise AnnotationError("%s: points must be [[x, y], ...]" % where) from None
    if points.ndim != 2 or points.shape[1] != 2:
        raise AnnotationError("%s: points must be [[x, y], ...]" % where)
    if len(points) < minimum:
        raise GeometryError("%s: needs at least %d points" % (where, minimum))
    if not np.all(np.isfinite(points)):
        raise GeometryError("%s: points must be finite" % where)
    points[:, 0] = np.clip(points[:, 0], 0, width - 1)
    points[:, 1] = np.clip(points[:, 1], 0, height - 1)
    return points


def _parse_object(entry, index, height, width, class_set):
    where = "objects[%d]" % index
    if not isinstance(entry, dict):
        raise AnnotationError("%s: must be an object" % where)
    class_name = _require(entry, "class", where)
    class_set.index(class_name)
    kinds = [k for k in ("polygon", "polyline", "bitmap") if k in entry]
    if len(kinds) != 1:
        raise AnnotationError(
            "%s: exactly one of polygon, polyline, bitmap expected, got %s" % (where, kinds)
        )
    kind = kinds[0]
    if kind == "polygon":
        geometry = Polygon(_points(entry[kind], 3, height, width, where + ".polygon"))
    elif kind == "polyline":
        thickness = entry.get("thickness", 1)
        if isinstance(thickness, bool) or not isinstance(thickness, (int, float)):
            raise GeometryError("%s.thickness must be a number" % where)
        if thickness < 1:
            raise GeometryError("%s.thickness must be >= 1, got %s" % (where, thickness))
        geometry = Polyline(
            _points(entry[kind], 2, height, width, where + ".polyline"), thickness
        )
    else:
        bitmap = entry[kind]
        if not isinstance(bitmap, dict):
            raise AnnotationError("%s.bitmap: must be an object" % where)
        origin = _require(bitmap, "origin", where + ".bitmap")
        if (
            not isinstance(origin, (list, tuple))
            or len(origin) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in origin)
        ):
            raise AnnotationError("%s.bitmap.origin must be [x, y] integers" % where)
        b_h = _positive_int(_require(bitmap, "height", where), where + ".bitmap.height")
        b_w = _positive_int(_require(bitmap, "width", where), where + ".bitmap.width")
        x0, y0 = origin
        if x0 < 0 or y0 < 0 or x0 + b_w > width or y0 + b_h > height:
            raise GeometryError(
                "%s.bitmap: %dx%d patch at (%d, %d) exceeds the %dx%d image"
                % (where, b_h, b_w, x0, y0, height, width)
            )
        patch = decode_bitmap(_require(bitmap, "data", where + ".bitmap"), b_h, b_w)
        geometry = Bitmap((x0, y0), patch)
    return AnnotatedObject(class_name, geometry)


def parse_annotation(text, class_set=None):
    """Parse and validate annotation text.

    Args:
        text (str): JSON document following the module schema.
        class_set (ClassSet, optional): Accepted classes. Defaults to the default class set.

    Returns:
        Annotation: The validated annotation.

    Raises:
        AnnotationError: Malformed JSON (with line and column) or missing/invalid fields.
        UnknownClassError: An object uses a class outside `class_set`.
        GeometryError: Degenerate or out-of-range geometry.

    """
    class_set = class_set or ClassSet()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AnnotationError(
            "Parse error at line %d column %d: %s" % (e.lineno, e.colno, e.msg)
        ) from None
    if not isinstance(doc, dict):
        raise AnnotationError("Annotation must be a JSON object")
    image = _require(doc, "image", "annotation")
    height = _positive_int(_require(doc, "height", "annotation"), "height")
    width = _positive_int(_require(doc, "width", "annotation"), "width")
    raw_objects = doc.get("objects", [])
    if not isinstance(raw_objects, list):
        raise AnnotationError("objects must be a list")
    objects = [
        _parse_object(entry, i, height, width, class_set)
        for i, entry in enumerate(raw_objects)
    ]
    return Annotation(str(image), height, width, objects, str(doc.get("source", "")))


def read_annotation(path, class_set=None):
    """Parse an annotation file, prefixing every error with the file name."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError("Could not read annotation '%s': %s" % (path, e)) from e
    try:
        return parse_annotation(text, class_set)
    except AnnotationError as e:
        raise type(e)("%s: %s" % (path, e)) from None
