"""8-bit single-channel mask and saliency-map codecs (PNG and PGM P5).

Masks are 2-D uint8 arrays. Label semantics: 0 = background, 255 = ignore,
1..254 = foreground classes. Saliency maps use the same container with
intensity semantics (0 = least salient, 255 = most salient).

Pixel values round-trip exactly. The writer picks the container from the
file extension; the reader sniffs content, so either format loads from any
extension. Palette PNGs load as their raw 8-bit indices (the common
encoding for segmentation ground truth); RGB and 16-bit inputs are
rejected.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import MaskFormatError

IGNORE_LABEL = 255


def read_mask(path) -> np.ndarray:
    """Load an 8-bit single-channel PNG or PGM as a (height, width) uint8 array."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise MaskFormatError(f"{path}: cannot decode image ({exc})") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise MaskFormatError(f"{path}: bit depth is not 8")
    if img.mode not in ("L", "P"):
        raise MaskFormatError(
            f"{path}: expected single-channel 8-bit image, got mode {img.mode!r}"
        )
    # P mode decodes to its raw palette indices, which are the class labels.
    return np.asarray(img, dtype=np.uint8)


def write_mask(mask: np.ndarray, path) -> None:
    """Write a (height, width) uint8 array as PNG or PGM, chosen by extension."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskFormatError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise MaskFormatError(f"mask must be uint8, got dtype {arr.dtype}")
    suffix = str(path).lower().rsplit(".", 1)[-1]
    fmt = {"png": "PNG", "pgm": "PPM", "ppm": "PPM"}.get(suffix)
    if fmt is None:
        raise MaskFormatError(f"{path}: unsupported extension .{suffix}")
    Image.fromarray(arr, mode="L").save(path, format=fmt)


def validate_labels(mask: np.ndarray, num_classes: int) -> None:
    """Check that every label is in {0..num_classes-1, 255}."""
    labels = np.unique(mask)
    bad = labels[(labels >= num_classes) & (labels != IGNORE_LABEL)]
    if bad.size:
        raise MaskFormatError(
            f"labels {bad.tolist()} outside 0..{num_classes - 1} and not ignore (255)"
        )
