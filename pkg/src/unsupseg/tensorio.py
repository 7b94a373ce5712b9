"""Binary container for dense float32 tensors (FTN1 format).

The format is deliberately trivial so that any producer (including
non-Python feature extractors) can emit it with a few lines of code:

    bytes 0..3   magic "FTN1"
    u32          dtype code, little-endian (1 = float32, the only code in v1)
    u32          ndim, little-endian
    ndim * u64   dimension sizes, little-endian
    payload      row-major little-endian float32 elements

Round-trips are bit-exact. Loading validates the header, the payload
length, and that every element is finite.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import TensorFormatError

MAGIC = b"FTN1"
DTYPE_FLOAT32 = 1


def write_feature_tensor(tensor: np.ndarray, path) -> None:
    """Write a float32 array to ``path`` in FTN1 format.

    Raises TensorFormatError for non-float32 input or non-finite elements;
    callers convert explicitly so precision loss is never silent.
    """
    arr = np.asarray(tensor)
    if arr.dtype != np.float32:
        raise TensorFormatError(
            f"unsupported dtype {arr.dtype}; FTN1 v1 stores float32 only"
        )
    if arr.size and not np.isfinite(arr).all():
        raise TensorFormatError("tensor contains non-finite elements")
    header = MAGIC + struct.pack("<II", DTYPE_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).astype("<f4", copy=False).tobytes())


def read_feature_tensor(path) -> np.ndarray:
    """Read an FTN1 file back into a float32 array.

    Raises TensorFormatError on bad magic, unknown dtype code, payload
    length mismatch, or non-finite elements.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic, not an FTN1 file")
    dtype_code, ndim = struct.unpack_from("<II", blob, 4)
    if dtype_code != DTYPE_FLOAT32:
        raise TensorFormatError(f"{path}: unknown dtype code {dtype_code}")
    dims_end = 12 + 8 * ndim
    if len(blob) < dims_end:
        raise TensorFormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 12)
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise TensorFormatError(
            f"{path}: payload length mismatch, expected {expected} bytes "
            f"got {len(blob)}"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=dims_end)
    arr = arr.reshape(shape).astype(np.float32, copy=True)
    if arr.size and not np.isfinite(arr).all():
        raise TensorFormatError(f"{path}: tensor contains non-finite elements")
    return arr
