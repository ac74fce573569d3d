"""``STSC1`` raster files: a 17-byte header followed by little-endian float32 samples."""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError, ValidationError

MAGIC = b"STSC1"
_HEADER = struct.Struct("<5sIII")


def write_raster(path, values):
    """Write an (H, W, C) array row-major with channels innermost."""
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValidationError(f"rasters are (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w, h, c))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_raster(path):
    """Return the (H, W, C) float64 array stored at ``path``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(data)} bytes)")
    magic, w, h, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = w * h * c * 4
    payload = len(data) - _HEADER.size
    if payload != expected:
        raise ParseError(f"{path}: payload is {payload} bytes but the header ({w}x{h}x{c}) implies {expected}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w, c).astype(np.float64)
