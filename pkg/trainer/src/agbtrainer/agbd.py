"""Minimal reader/writer for AGBD v1 float32 rasters.

This is the trainer's own implementation of the on-disk format used to
exchange density maps with the map-generation toolkit; the two packages
share files, not code. Layout: 16-byte header (magic ``AGBD``, version
byte 1, three reserved zero bytes, u32 LE width and height) followed by
row-major float32 LE pixel values, top-left origin.
"""

import struct
from pathlib import Path

import numpy as np

__all__ = ["encode", "decode", "read", "write"]

_MAGIC = b"AGBD"
_VERSION = 1
_HEADER = struct.Struct("<4sB3xII")


def encode(values):
    """Serialize a 2-D raster to AGBD bytes (stored as float32)."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D raster; got shape {arr.shape}")
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise ValueError("density values must be finite and non-negative")
    height, width = arr.shape
    return _HEADER.pack(_MAGIC, _VERSION, width, height) + arr.tobytes(order="C")


def decode(data):
    """Parse AGBD bytes into a float32 array of shape (height, width)."""
    if len(data) < _HEADER.size:
        raise ValueError(f"short header: only {len(data)} byte(s)")
    magic, version, width, height = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported version {version}, expected {_VERSION}")
    if width == 0 or height == 0:
        raise ValueError(f"invalid dimensions {width}x{height}")
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        raise ValueError(f"expected {expected} bytes for {width}x{height}, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", count=width * height, offset=_HEADER.size)
    return values.reshape(height, width).copy()


def read(path):
    """Read an AGBD file into a float32 array."""
    return decode(Path(path).read_bytes())


def write(path, values):
    """Write a raster to an AGBD file."""
    Path(path).write_bytes(encode(values))
