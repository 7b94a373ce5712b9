"""Batch extraction: saliency maps, crop CLS features, dense feature maps.

Reads the engine's JSON-lines manifests and CropSpec JSON, writes 8-bit
grayscale PNG saliency maps and FTN1 tensors, and records everything in an
extractor manifest so the run is auditable. Per-image failures (corrupt
files, spec mismatches) are collected and reported; the batch keeps going.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import Backbone, load_image_rgb
from .ftn1 import write_ftn1
from .saliency import SaliencyModel


@dataclass
class ExtractionReport:
    backbone: str
    input_resolution: int | None
    feature_dim: int | None
    outputs: dict[str, str] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "input_resolution": self.input_resolution,
            "feature_dim": self.feature_dim,
            "outputs": dict(sorted(self.outputs.items())),
            "failures": dict(sorted(self.failures.items())),
        }

    def save(self, path) -> None:
        for out in self.outputs.values():
            if not Path(out).exists():
                raise RuntimeError(f"declared output {out} was not produced")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def read_engine_manifest(path) -> list[dict]:
    """The engine's JSON-lines manifest: image_id + paths per line."""
    base = Path(path).parent
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            if "image_id" not in raw or "image_path" not in raw:
                raise ValueError(f"{path}:{lineno}: need image_id and image_path")
            image_path = Path(raw["image_path"])
            if not image_path.is_absolute():
                image_path = base / image_path
            entries.append({"image_id": str(raw["image_id"]),
                            "image_path": image_path})
    return entries


def extract_saliency(entries: list[dict], model: SaliencyModel,
                     out_dir) -> ExtractionReport:
    """One 8-bit grayscale PNG per image, same dimensions as the input."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExtractionReport(backbone=model.name, input_resolution=None,
                              feature_dim=None)
    for entry in entries:
        image_id = entry["image_id"]
        try:
            image = load_image_rgb(entry["image_path"])
            saliency = model(image)
            assert saliency.shape == image.shape[:2]
            out_path = out_dir / f"{image_id}.png"
            Image.fromarray(saliency, mode="L").save(out_path, format="PNG")
            report.outputs[image_id] = str(out_path)
        except Exception as exc:
            report.failures[image_id] = str(exc)
    return report


def _crop_and_resize(image: np.ndarray, spec: dict) -> np.ndarray:
    x0, y0, x1, y1 = spec["bbox"]
    h, w = image.shape[:2]
    if not (0 <= x0 <= x1 < w and 0 <= y0 <= y1 < h):
        raise ValueError(f"crop bbox {spec['bbox']} outside image {w}x{h}")
    crop = Image.fromarray(image[y0:y1 + 1, x0:x1 + 1])
    resampling = {"bilinear": Image.BILINEAR,
                  "nearest": Image.NEAREST}[spec.get("resampling", "bilinear")]
    crop = crop.resize((spec["target_w"], spec["target_h"]), resampling)
    return np.asarray(crop, dtype=np.uint8)


def extract_proposal_features(entries: list[dict], crop_specs: dict,
                              backbone: Backbone, out_dir,
                              combined_path=None) -> ExtractionReport:
    """CLS feature of each image's crop; per-image [D] files plus an
    optional combined [n, D] tensor in manifest order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExtractionReport(backbone=backbone.name, input_resolution=None,
                              feature_dim=None)
    rows = []
    for entry in entries:
        image_id = entry["image_id"]
        try:
            if image_id not in crop_specs:
                raise ValueError("no crop spec for this image")
            image = load_image_rgb(entry["image_path"])
            crop = _crop_and_resize(image, crop_specs[image_id])
            feature = backbone.cls_features(crop[None])[0]
            if report.feature_dim is None:
                report.feature_dim = int(feature.shape[0])
                report.input_resolution = int(crop.shape[0])
            elif feature.shape[0] != report.feature_dim:
                raise ValueError(
                    f"feature dim {feature.shape[0]} != {report.feature_dim}")
            out_path = out_dir / f"{image_id}.ftn"
            write_ftn1(feature, out_path)
            report.outputs[image_id] = str(out_path)
            rows.append(feature)
        except Exception as exc:
            report.failures[image_id] = str(exc)
    if combined_path is not None and rows:
        write_ftn1(np.stack(rows), combined_path)
    return report


def extract_dense_features(entries: list[dict], backbone: Backbone, out_dir,
                           input_size: int = 256) -> ExtractionReport:
    """Per-pixel feature grid [H', W', D] per image at the patch stride."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExtractionReport(backbone=backbone.name,
                              input_resolution=input_size, feature_dim=None)
    if input_size % backbone.patch_size:
        raise ValueError(f"input_size {input_size} not divisible by patch "
                         f"size {backbone.patch_size}")
    for entry in entries:
        image_id = entry["image_id"]
        try:
            image = load_image_rgb(entry["image_path"])
            resized = np.asarray(
                Image.fromarray(image).resize((input_size, input_size),
                                              Image.BILINEAR),
                dtype=np.uint8)
            fmap = backbone.dense_features(resized[None])[0]
            if report.feature_dim is None:
                report.feature_dim = int(fmap.shape[-1])
            elif fmap.shape[-1] != report.feature_dim:
                raise ValueError(
                    f"feature dim {fmap.shape[-1]} != {report.feature_dim}")
            out_path = out_dir / f"{image_id}.ftn"
            write_ftn1(fmap, out_path)
            report.outputs[image_id] = str(out_path)
        except Exception as exc:
            report.failures[image_id] = str(exc)
    return report
