"""Multi-hot mask validation and the "MSSM" mask container."""
import logging
import warnings
from collections import namedtuple
import numpy as np
from multiseg import ClassSet, container
from multiseg.errors import ClassNameWarning, CorruptHeaderError, ShapeError, StorageError

logger = logging.getLogger(__name__)

MASK_MAGIC = b"MSSM"
#: Masks larger than this many bytes are rejected as a dimension overflow.
MAX_MASK_BYTES = 2 ** 31

#: A loaded mask file: uint8 (C, H, W) mask and the class names stored in its header.
MaskFile = namedtuple("MaskFile", ["mask", "class_names"])


def validate_mask(mask, class_set=None):
    """Check a multi-hot mask: rank 3, binary, one plane per class.

    Returns:
        ndarray: The mask as uint8.

    """
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ShapeError("Mask must be (C, H, W), got shape %s" % (mask.shape,))
    if class_set is not None and mask.shape[0] != len(class_set):
        raise ShapeError(
            "Mask has %d planes, class set has %d classes" % (mask.shape[0], len(class_set))
        )
    if not np.all((mask == 0) | (mask == 1)):
        raise ShapeError("Mask values must be 0 or 1")
    return mask.astype(np.uint8, copy=False)


def save_mask(mask, path, class_set=None):
    """Write a mask container (magic "MSSM") with the class names in its header."""
    class_set = class_set or ClassSet()
    mask = validate_mask(mask, class_set)
    c, h, w = mask.shape
    writer = container.Writer(MASK_MAGIC)
    writer.u32(h)
    writer.u32(w)
    writer.u8(c)
    for name in class_set:
        writer.name(name)
    writer.raw(np.ascontiguousarray(mask).tobytes())
    container.write_file(path, writer.getvalue())


def load_mask(path, class_set=None):
    """Read a mask container.

    A class-name mismatch against `class_set` is surfaced as a `ClassNameWarning`; the mask
    is still returned together with the stored names.

    Raises:
        CorruptHeaderError: Bad magic, version, checksum, dimensions or payload size.

    Returns:
        MaskFile: Mask and stored class names.

    """
    reader = container.Reader(container.read_file(path), MASK_MAGIC, source=str(path))
    h, w, c = reader.u32(), reader.u32(), reader.u8()
    if h < 1 or w < 1 or c < 1:
        raise CorruptHeaderError("%s: empty mask dimensions %dx%dx%d" % (path, c, h, w))
    if c * h * w > MAX_MASK_BYTES:
        raise CorruptHeaderError("%s: dimension overflow %dx%dx%d" % (path, c, h, w))
    names = tuple(reader.name() for _ in range(c))
    if reader.remaining != c * h * w:
        raise CorruptHeaderError(
            "%s: payload holds %d bytes, header declares %d"
            % (path, reader.remaining, c * h * w)
        )
    mask = np.frombuffer(reader.raw(c * h * w), dtype=np.uint8).reshape(c, h, w).copy()
    if not np.all(mask <= 1):
        raise CorruptHeaderError("%s: mask values must be 0 or 1" % path)
    if class_set is not None and names != tuple(class_set):
        message = "%s: stored classes %s differ from expected %s" % (
            path,
            list(names),
            list(class_set),
        )
        logger.warning(message)
        warnings.warn(message, ClassNameWarning)
    return MaskFile(mask, names)


def import_array_mask(path, class_set=None):
    """Import a mask stored as a numpy array file, shaped (H, W, C) or (C, H, W).

    Any nonzero value counts as active.
    """
    class_set = class_set or ClassSet()
    try:
        array = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise StorageError("Could not read array mask '%s': %s" % (path, e)) from e
    if array.ndim != 3:
        raise ShapeError("Array mask must be rank 3, got shape %s" % (array.shape,))
    c = len(class_set)
    if array.shape[0] != c and array.shape[-1] == c:
        array = np.moveaxis(array, -1, 0)
    return validate_mask((array != 0).astype(np.uint8), class_set)
