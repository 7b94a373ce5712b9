"""Object proposals from saliency maps.

One proposal per image: the thresholded saliency mask, its tight bounding
box, and a fixed-size crop specification handed to the feature extractor.
No connected-component splitting and no mask post-processing (holes and
satellites are kept as-is).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyProposalError
from .manifest import DatasetManifest
from .maskio import read_mask

DEFAULT_THETA = 0.5
DEFAULT_MIN_AREA_FRACTION = 0.001
DEFAULT_CROP_TARGET = 256


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with inclusive corners: (x0, y0) top-left, (x1, y1) bottom-right."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ValueError(f"degenerate bbox {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass(frozen=True)
class CropSpec:
    """Deterministic crop-and-resize instruction for the feature extractor."""

    bbox: BBox
    target_w: int = DEFAULT_CROP_TARGET
    target_h: int = DEFAULT_CROP_TARGET
    resampling: str = "bilinear"

    def to_dict(self) -> dict:
        return {
            "bbox": [self.bbox.x0, self.bbox.y0, self.bbox.x1, self.bbox.y1],
            "target_w": self.target_w,
            "target_h": self.target_h,
            "resampling": self.resampling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CropSpec":
        x0, y0, x1, y1 = d["bbox"]
        return cls(BBox(x0, y0, x1, y1), d["target_w"], d["target_h"],
                   d.get("resampling", "bilinear"))


@dataclass
class ProposalRecord:
    """One salient-object proposal: mask, box, and (once attached) its feature."""

    image_id: str
    binary_mask: np.ndarray  # uint8 in {0, 1}
    bbox: BBox
    area_fraction: float
    feature: Optional[np.ndarray] = None  # shape [D] float32

    @property
    def crop_spec(self) -> CropSpec:
        return make_crop_spec(self.bbox)


@dataclass(frozen=True)
class SkipRecord:
    image_id: str
    reason: str


def binarize_saliency(saliency: np.ndarray, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Threshold an 8-bit saliency map: pixel = 1 iff intensity/255 > theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    sal = np.asarray(saliency)
    return (sal.astype(np.float64) / 255.0 > theta).astype(np.uint8)


def tight_bbox(mask: np.ndarray) -> BBox:
    """Minimal axis-aligned box containing all foreground (nonzero) pixels."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise EmptyProposalError("mask has no foreground pixels")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def make_crop_spec(bbox: BBox, target: int = DEFAULT_CROP_TARGET) -> CropSpec:
    """Square crop-and-resize spec consumed by the extractor; bilinear resampling."""
    if target < 1:
        raise ValueError(f"crop target must be >= 1, got {target}")
    return CropSpec(bbox=bbox, target_w=target, target_h=target)


def build_proposals(
    manifest: DatasetManifest,
    theta: float = DEFAULT_THETA,
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
) -> tuple[list[ProposalRecord], list[SkipRecord]]:
    """Binarize every manifest entry's saliency map into a proposal.

    Entries whose mask is empty or below ``min_area_fraction``, or whose
    saliency file is missing/unreadable, land in the skip list with a
    reason; the run continues. Output order follows the manifest.
    """
    records: list[ProposalRecord] = []
    skips: list[SkipRecord] = []
    for entry in manifest:
        if entry.saliency_path is None:
            skips.append(SkipRecord(entry.image_id, "no saliency_path in manifest"))
            continue
        try:
            saliency = read_mask(entry.saliency_path)
        except Exception as exc:
            skips.append(SkipRecord(entry.image_id, f"saliency unreadable: {exc}"))
            continue
        mask = binarize_saliency(saliency, theta)
        fg = int(mask.sum())
        area_fraction = fg / mask.size
        if fg == 0:
            skips.append(SkipRecord(entry.image_id, "empty proposal mask"))
            continue
        if area_fraction < min_area_fraction:
            skips.append(SkipRecord(
                entry.image_id,
                f"area_fraction {area_fraction:.6f} < {min_area_fraction}"))
            continue
        records.append(ProposalRecord(
            image_id=entry.image_id,
            binary_mask=mask,
            bbox=tight_bbox(mask),
            area_fraction=area_fraction,
        ))
    return records, skips


def write_skip_log(skips: list[SkipRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in skips:
            fh.write(json.dumps({"image_id": s.image_id, "reason": s.reason}) + "\n")


def write_crop_specs(records: list[ProposalRecord], path,
                     target: int = DEFAULT_CROP_TARGET) -> None:
    """Extractor handshake: {image_id: crop spec} as JSON."""
    specs = {r.image_id: make_crop_spec(r.bbox, target).to_dict() for r in records}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(specs, fh, indent=2, sort_keys=True)
