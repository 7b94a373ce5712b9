"""Shared synthetic dataset builder for pipeline-level tests.

The generated world: each image carries one rectangular object of one of
``n_categories`` planted categories. Rectangles are snapped to the
image-to-feature-grid stride so nearest-neighbor mask resizing is lossless
and IoU arithmetic stays exact. Proposal features sit on well-separated
per-category prototypes; dense per-pixel features do the same per label
(background included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from unsupseg.maskio import write_mask
from unsupseg.tensorio import write_feature_tensor


@dataclass
class SyntheticDataset:
    root: Path
    manifest_path: Path
    n_images: int
    n_categories: int
    image_size: int
    grid: int
    dim: int
    categories: list[int]          # planted category per image, 0-based
    gt_masks: dict[str, np.ndarray]
    dense_labels: dict[str, np.ndarray]  # gt at feature resolution

    def image_ids(self) -> list[str]:
        return [f"img{i:03d}" for i in range(self.n_images)]


def build_synthetic_dataset(
    root: Path,
    n_images: int = 60,
    n_categories: int = 3,
    image_size: int = 64,
    grid: int = 16,
    dim: int = 16,
    seed: int = 0,
    feature_noise: float = 0.05,
    dense_noise: float = 0.1,
    with_manifest: bool = True,
) -> SyntheticDataset:
    assert image_size % grid == 0
    stride = image_size // grid
    rng = np.random.default_rng(seed)
    root = Path(root)
    for sub in ("images", "saliency", "features", "dense", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    # Prototypes on scaled axes: far apart relative to the noise.
    proto_prop = 10.0 * np.eye(n_categories, dim, dtype=np.float64)
    proto_dense = 8.0 * np.eye(n_categories + 1, dim, dtype=np.float64)

    categories: list[int] = []
    gt_masks: dict[str, np.ndarray] = {}
    dense_labels: dict[str, np.ndarray] = {}
    entries = []
    for i in range(n_images):
        image_id = f"img{i:03d}"
        cat = i % n_categories
        categories.append(cat)

        # Rectangle snapped to the feature stride.
        max_cells = grid - 2
        h_cells = int(rng.integers(4, max_cells))
        w_cells = int(rng.integers(4, max_cells))
        y0_cells = int(rng.integers(0, grid - h_cells + 1))
        x0_cells = int(rng.integers(0, grid - w_cells + 1))
        y0, x0 = y0_cells * stride, x0_cells * stride
        h, w = h_cells * stride, w_cells * stride

        gt = np.zeros((image_size, image_size), dtype=np.uint8)
        gt[y0:y0 + h, x0:x0 + w] = cat + 1
        gt_masks[image_id] = gt

        image = rng.integers(20, 60, (image_size, image_size)).astype(np.uint8)
        image[y0:y0 + h, x0:x0 + w] = rng.integers(180, 220, (h, w)).astype(np.uint8)

        saliency = rng.integers(0, 60, (image_size, image_size)).astype(np.uint8)
        saliency[y0:y0 + h, x0:x0 + w] = rng.integers(190, 256, (h, w)).astype(np.uint8)

        label_lr = np.zeros((grid, grid), dtype=np.uint8)
        label_lr[y0_cells:y0_cells + h_cells, x0_cells:x0_cells + w_cells] = cat + 1
        dense_labels[image_id] = label_lr
        dense = (proto_dense[label_lr].astype(np.float64)
                 + rng.normal(0.0, dense_noise, (grid, grid, dim)))

        feature = proto_prop[cat] + rng.normal(0.0, feature_noise, dim)

        write_mask(image, root / "images" / f"{image_id}.png")
        write_mask(saliency, root / "saliency" / f"{image_id}.png")
        write_mask(gt, root / "gt" / f"{image_id}.png")
        write_feature_tensor(feature.astype(np.float32),
                             root / "features" / f"{image_id}.ftn")
        write_feature_tensor(dense.astype(np.float32),
                             root / "dense" / f"{image_id}.ftn")
        entries.append({
            "image_id": image_id,
            "image_path": f"images/{image_id}.png",
            "saliency_path": f"saliency/{image_id}.png",
            "feature_path": f"features/{image_id}.ftn",
            "dense_feature_path": f"dense/{image_id}.ftn",
            "gt_mask_path": f"gt/{image_id}.png",
        })

    manifest_path = root / "train.jsonl"
    if with_manifest:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(json.dumps(entry) + "\n")
        names = ["background"] + [f"category_{chr(ord('a') + c)}"
                                  for c in range(n_categories)]
        (root / "train.classes.txt").write_text("\n".join(names) + "\n",
                                                encoding="utf-8")
    return SyntheticDataset(
        root=root, manifest_path=manifest_path, n_images=n_images,
        n_categories=n_categories, image_size=image_size, grid=grid, dim=dim,
        categories=categories, gt_masks=gt_masks, dense_labels=dense_labels)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory) -> SyntheticDataset:
    """The 60-image, 3-category fixture shared by pipeline tests."""
    return build_synthetic_dataset(tmp_path_factory.mktemp("desk_dataset"))
