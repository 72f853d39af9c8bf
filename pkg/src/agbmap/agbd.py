"""AGBD v1: the density-map binary raster format.

Layout (little-endian, bit-exact):

    offset  size  field
    0       4     magic bytes ``AGBD``
    4       1     version, currently 1
    5       3     reserved, must be zero on write (ignored on read)
    8       4     width  (u32 LE)
    12      4     height (u32 LE)
    16      4*w*h pixel values, IEEE-754 float32 LE, row-major, top-left origin

Decoding failures raise FormatError carrying the byte offset of the
problem, so truncated or foreign files are diagnosed positionally.
"""

import struct

import numpy as np

from .errors import FormatError
from .validation import check_density_map

__all__ = ["encode", "decode", "read", "write", "MAGIC", "VERSION"]

MAGIC = b"AGBD"
VERSION = 1
_HEADER = struct.Struct("<4sB3xII")


def encode(values):
    """Serialize a 2-D density raster to AGBD v1 bytes (stored as float32)."""
    arr = check_density_map(values)
    height, width = arr.shape
    header = _HEADER.pack(MAGIC, VERSION, width, height)
    return header + arr.astype("<f4").tobytes(order="C")


def decode(data):
    """Parse AGBD v1 bytes into a float32 array of shape (height, width)."""
    if len(data) < _HEADER.size:
        raise FormatError(
            f"file truncated inside the {_HEADER.size}-byte header"
            f" (got {len(data)} bytes)",
            offset=len(data),
        )
    magic, version, width, height = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}", offset=4)
    if width == 0 or height == 0:
        raise FormatError(f"invalid dimensions {width}x{height}", offset=8)
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "trailing data"
        raise FormatError(
            f"{kind}: payload for {width}x{height} map needs {expected} bytes,"
            f" got {len(data)}",
            offset=min(len(data), expected),
        )
    values = np.frombuffer(data, dtype="<f4", count=width * height, offset=_HEADER.size)
    return values.reshape(height, width).copy()


def write(path, values):
    with open(path, "wb") as fh:
        fh.write(encode(values))


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
