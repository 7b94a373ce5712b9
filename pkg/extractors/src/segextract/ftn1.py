"""FTN1 tensor files: the byte-level contract shared with the engine.

Layout: magic "FTN1", little-endian u32 dtype code (1 = float32),
u32 ndim, ndim little-endian u64 dims, then the row-major float32 payload.
The writer is the whole point of the format being this simple.
"""

from __future__ import annotations

import struct

import numpy as np


def write_ftn1(tensor: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(b"FTN1" + struct.pack("<II", 1, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_ftn1(path) -> np.ndarray:
    """Reader used by the tests to confirm files honor the contract."""
    blob = open(path, "rb").read()
    if blob[:4] != b"FTN1":
        raise ValueError(f"{path}: bad magic")
    dtype_code, ndim = struct.unpack_from("<II", blob, 4)
    if dtype_code != 1:
        raise ValueError(f"{path}: unknown dtype code {dtype_code}")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 12)
    offset = 12 + 8 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    if len(blob) != offset + 4 * count:
        raise ValueError(f"{path}: payload size mismatch")
    return np.frombuffer(blob, dtype="<f4", count=count,
                         offset=offset).reshape(shape).copy()
