"""The whole engine end to end on a generated dataset.

Builds a small on-disk world (images, saliency maps, feature files,
ground truth), then drives the three pipeline stages exactly as the CLI
would: discover -> selftrain -> eval. Everything lands in a temporary
run directory whose artifacts are printed at the end.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from unsupseg import write_feature_tensor, write_mask
from unsupseg.cli import main

root = Path(tempfile.mkdtemp(prefix="unsupseg_demo_"))
rng = np.random.default_rng(0)

n_images, size, grid, dim, n_cats = 24, 64, 16, 16, 3
stride = size // grid
for sub in ("images", "saliency", "features", "dense", "gt"):
    (root / sub).mkdir(parents=True)

proto_feat = 10.0 * np.eye(n_cats, dim)
proto_dense = 8.0 * np.eye(n_cats + 1, dim)

entries = []
for i in range(n_images):
    image_id = f"img{i:03d}"
    cat = i % n_cats
    # One rectangular object per image, aligned to the feature stride.
    cells = rng.integers(4, grid - 2, 2)
    offs = [int(rng.integers(0, grid - c + 1)) for c in cells]
    y0, x0 = offs[0] * stride, offs[1] * stride
    h, w = int(cells[0]) * stride, int(cells[1]) * stride

    gt = np.zeros((size, size), dtype=np.uint8)
    gt[y0:y0 + h, x0:x0 + w] = cat + 1
    image = rng.integers(20, 60, (size, size)).astype(np.uint8)
    image[y0:y0 + h, x0:x0 + w] = 200
    saliency = np.where(gt > 0, 230, 20).astype(np.uint8)
    label_lr = gt[stride // 2::stride, stride // 2::stride]
    dense = proto_dense[label_lr] + 0.1 * rng.standard_normal((grid, grid, dim))
    feature = proto_feat[cat] + 0.05 * rng.standard_normal(dim)

    write_mask(image, root / "images" / f"{image_id}.png")
    write_mask(saliency, root / "saliency" / f"{image_id}.png")
    write_mask(gt, root / "gt" / f"{image_id}.png")
    write_feature_tensor(feature.astype(np.float32),
                         root / "features" / f"{image_id}.ftn")
    write_feature_tensor(dense.astype(np.float32),
                         root / "dense" / f"{image_id}.ftn")
    entries.append({"image_id": image_id,
                    "image_path": f"images/{image_id}.png",
                    "saliency_path": f"saliency/{image_id}.png",
                    "feature_path": f"features/{image_id}.ftn",
                    "dense_feature_path": f"dense/{image_id}.ftn",
                    "gt_mask_path": f"gt/{image_id}.png"})

manifest = root / "train.jsonl"
manifest.write_text("\n".join(json.dumps(e) for e in entries) + "\n")
(root / "train.classes.txt").write_text(
    "background\nthing_a\nthing_b\nthing_c\n")

config = root / "config.json"
config.write_text(json.dumps({
    "train_manifest": str(manifest),
    "eval_manifest": str(manifest),
    "k_neighbors": 5,
    "n_clusters": n_cats,
    "n_components": n_cats,
    "filter_fraction": 0.2,
    "learning_rate": 0.05,
    "epochs": [25, 10],
    "iterations": 2,
    "seed": 0,
}, indent=2))

print(f"dataset and config in {root}\n")
print("== discover ==")
assert main(["discover", "--config", str(config),
             "--output", str(root / "run_discover")]) == 0
print("\n== selftrain ==")
assert main(["selftrain", "--config", str(config),
             "--output", str(root / "run_selftrain"),
             "--pseudo-masks", str(root / "run_discover" / "pseudomasks")]) == 0
print("\n== eval (Hungarian matching of final masks vs ground truth) ==")
assert main(["eval", "--config", str(config),
             "--output", str(root / "run_eval"),
             "--predictions",
             str(root / "run_selftrain" / "iter_2" / "pseudomasks")]) == 0

print("\nartifacts:")
for path in sorted((root / "run_eval").glob("*")):
    print(f"  {path}")
