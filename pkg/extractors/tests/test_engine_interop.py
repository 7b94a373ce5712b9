"""Round-trip through the engine: every extractor output must be accepted
by the primary pipeline's own loaders. The engine is driven through its
CLI only; the two packages never import each other."""

import json
import shutil
import subprocess

import numpy as np
import pytest
from PIL import Image

from segextract.cli import main

pytestmark = pytest.mark.skipif(shutil.which("unsupseg") is None,
                                reason="unsupseg CLI not installed")


def engine(*args):
    return subprocess.run(["unsupseg", *args], capture_output=True, text=True)


def test_extracted_files_feed_the_engine(tmp_path):
    rng = np.random.default_rng(1)
    (tmp_path / "images").mkdir()
    ids = [f"img{i}" for i in range(8)]
    for i, image_id in enumerate(ids):
        arr = rng.integers(0, 60, (64, 64, 3)).astype(np.uint8)
        # A bright block so the contrast heuristic finds an object.
        y = 8 * (i % 3 + 1)
        arr[y:y + 24, 16:48] = [230, 230, 230]
        Image.fromarray(arr).save(tmp_path / "images" / f"{image_id}.png")

    base = [{"image_id": i, "image_path": f"images/{i}.png"} for i in ids]
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("\n".join(json.dumps(e) for e in base) + "\n")

    # Saliency from the adapter, then crop specs from the engine.
    assert main(["saliency", "--manifest", str(manifest),
                 "--out-dir", str(tmp_path / "sal")]) == 0
    for entry in base:
        entry["saliency_path"] = f"sal/{entry['image_id']}.png"
    manifest.write_text("\n".join(json.dumps(e) for e in base) + "\n")
    proc = engine("discover", "--manifest", str(manifest),
                  "--output", str(tmp_path / "run_specs"),
                  "--theta", "0.6", "--proposals-only")
    assert proc.returncode == 0, proc.stderr
    crop_specs = tmp_path / "run_specs" / "crop_specs.json"
    assert json.loads(crop_specs.read_text())

    # Features for those crops, then the full discovery stage.
    assert main(["features", "--manifest", str(manifest),
                 "--crop-specs", str(crop_specs),
                 "--out-dir", str(tmp_path / "feat")]) == 0
    assert main(["dense", "--manifest", str(manifest),
                 "--out-dir", str(tmp_path / "dense"),
                 "--input-size", "64"]) == 0
    for entry in base:
        entry["feature_path"] = f"feat/{entry['image_id']}.ftn"
        entry["dense_feature_path"] = f"dense/{entry['image_id']}.ftn"
    manifest.write_text("\n".join(json.dumps(e) for e in base) + "\n")

    proc = engine("discover", "--manifest", str(manifest),
                  "--output", str(tmp_path / "run"),
                  "--theta", "0.6", "--k-neighbors", "3",
                  "--n-clusters", "2", "--n-components", "2")
    assert proc.returncode == 0, proc.stderr
    assignments = (tmp_path / "run" / "assignments.jsonl").read_text()
    assert len(assignments.splitlines()) == len(ids)

    proc = engine("selftrain", "--manifest", str(manifest),
                  "--output", str(tmp_path / "run_st"),
                  "--pseudo-masks", str(tmp_path / "run" / "pseudomasks"),
                  "--iterations", "1", "--n-clusters", "2")
    assert proc.returncode == 0, proc.stderr
    masks = list((tmp_path / "run_st" / "iter_1" / "pseudomasks").glob("*.png"))
    assert len(masks) == len(ids)
