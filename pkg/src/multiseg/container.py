"""Little-endian binary containers with a magic, a version and a trailing CRC32.

Both the weights file ("MSSW") and the mask file ("MSSM") are built from these helpers.
"""
import logging
import struct
import zlib
from pathlib import Path
from multiseg.errors import ChecksumError, CorruptHeaderError, StorageError

logger = logging.getLogger(__name__)

VERSION = 1
_CRC = struct.Struct("<I")


class Writer:
    """Accumulates little-endian fields in memory."""

    def __init__(self, magic):
        self._buf = bytearray(magic)
        self.u8(VERSION)

    def u8(self, value):
        self._buf += struct.pack("<B", value)

    def u16(self, value):
        self._buf += struct.pack("<H", value)

    def u32(self, value):
        self._buf += struct.pack("<I", value)

    def name(self, text):
        """u16 length followed by UTF-8 bytes."""
        encoded = text.encode("utf-8")
        self.u16(len(encoded))
        self._buf += encoded

    def raw(self, data):
        self._buf += data

    def getvalue(self):
        """The payload followed by the CRC32 of all preceding bytes."""
        return bytes(self._buf) + _CRC.pack(zlib.crc32(self._buf) & 0xFFFFFFFF)


class Reader:
    """Reads fields from a container, raising `CorruptHeaderError` on short data."""

    def __init__(self, data, magic, source="<bytes>"):
        self.source = source
        if len(data) < len(magic) + 1 + _CRC.size:
            raise CorruptHeaderError("%s: file is truncated" % source)
        if data[: len(magic)] != magic:
            raise CorruptHeaderError(
                "%s: bad magic %r, expected %r" % (source, bytes(data[: len(magic)]), magic)
            )
        version = data[len(magic)]
        if version != VERSION:
            raise CorruptHeaderError(
                "%s: unsupported version %d, expected %d" % (source, version, VERSION)
            )
        body, (crc,) = data[: -_CRC.size], _CRC.unpack(data[-_CRC.size :])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise ChecksumError("%s: CRC32 mismatch, file is corrupt or truncated" % source)
        self._data = body
        self._pos = len(magic) + 1

    def _take(self, size):
        if self._pos + size > len(self._data):
            raise CorruptHeaderError(
                "%s: unexpected end of data at byte %d" % (self.source, self._pos)
            )
        chunk = self._data[self._pos : self._pos + size]
        self._pos += size
        return chunk

    def u8(self):
        return self._take(1)[0]

    def u16(self):
        return struct.unpack("<H", self._take(2))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def name(self):
        raw = self._take(self.u16())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptHeaderError("%s: name is not valid UTF-8" % self.source) from None

    def raw(self, size):
        return self._take(size)

    @property
    def remaining(self):
        return len(self._data) - self._pos


def read_file(path):
    """Read a container file as bytes, wrapping OS errors into `StorageError`."""
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise StorageError("Could not read '%s': %s" % (path, e)) from e


def write_file(path, data):
    """Write container bytes, creating parent directories."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise StorageError("Could not write '%s': %s" % (path, e)) from e
    logger.debug("Wrote %d bytes to %s", len(data), path)
