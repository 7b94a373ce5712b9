"""Subprocess contract for plugging in a real segmentation trainer.

The engine materializes a workspace (images/, pseudomasks/), invokes the
configured command, and validates what comes back in predictions/. Any
trainer that reads the workspace layout and writes one prediction mask per
input image can slot in, no Python coupling required.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from PIL import Image

from .errors import ExternalTrainerError
from .manifest import DatasetManifest
from .maskio import IGNORE_LABEL, read_mask, write_mask

IMAGES_DIR = "images"
PSEUDOMASKS_DIR = "pseudomasks"
PREDICTIONS_DIR = "predictions"


@dataclass(frozen=True)
class ExternalTrainerContract:
    """Command template plus the workspace expectations it must honor.

    ``command`` elements may contain ``{workspace}`` and ``{num_classes}``
    placeholders; the same values are exported as the WORKSPACE and
    NUM_CLASSES environment variables.
    """

    command: tuple[str, ...]
    timeout_s: Optional[float] = None
    expected_exit_codes: tuple[int, ...] = (0,)

    def to_dict(self) -> dict:
        return {
            "command": list(self.command),
            "timeout_s": self.timeout_s,
            "expected_exit_codes": list(self.expected_exit_codes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExternalTrainerContract":
        return cls(
            command=tuple(d["command"]),
            timeout_s=d.get("timeout_s"),
            expected_exit_codes=tuple(d.get("expected_exit_codes", (0,))),
        )

    @classmethod
    def load(cls, path) -> "ExternalTrainerContract":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def run_external_trainer(
    contract: ExternalTrainerContract,
    train_manifest: DatasetManifest,
    pseudo_masks: Mapping[str, np.ndarray],
    workspace,
    n_labels: int,
) -> Path:
    """Materialize the workspace, run the trainer, validate predictions/.

    Returns the predictions directory. Raises ExternalTrainerError on
    nonzero exit (with captured output), timeout, or a missing/misshaped/
    out-of-range prediction, naming the offending image_id.
    """
    workspace = Path(workspace)
    images_dir = workspace / IMAGES_DIR
    masks_dir = workspace / PSEUDOMASKS_DIR
    preds_dir = workspace / PREDICTIONS_DIR
    for d in (images_dir, masks_dir, preds_dir):
        d.mkdir(parents=True, exist_ok=True)

    sizes: dict[str, tuple[int, int]] = {}
    for entry in train_manifest:
        dst = images_dir / f"{entry.image_id}.png"
        shutil.copyfile(entry.image_path, dst)
        with Image.open(dst) as img:
            sizes[entry.image_id] = (img.size[1], img.size[0])
        if entry.image_id in pseudo_masks:
            write_mask(np.asarray(pseudo_masks[entry.image_id], dtype=np.uint8),
                       masks_dir / f"{entry.image_id}.png")

    env_extra = {"WORKSPACE": str(workspace), "NUM_CLASSES": str(n_labels)}
    command = [
        arg.format(workspace=str(workspace), num_classes=n_labels)
        for arg in contract.command
    ]
    try:
        proc = subprocess.run(
            command,
            capture_output=True,
            text=True,
            timeout=contract.timeout_s,
            env={**os.environ, **env_extra},
        )
    except subprocess.TimeoutExpired as exc:
        raise ExternalTrainerError(
            f"trainer timed out after {contract.timeout_s}s: {command}") from exc
    except FileNotFoundError as exc:
        raise ExternalTrainerError(f"trainer command not found: {command}") from exc
    if proc.returncode not in contract.expected_exit_codes:
        raise ExternalTrainerError(
            f"trainer exited with {proc.returncode} (expected "
            f"{contract.expected_exit_codes}); stdout:\n{proc.stdout}\n"
            f"stderr:\n{proc.stderr}")

    for image_id, (h, w) in sorted(sizes.items()):
        pred_path = preds_dir / f"{image_id}.png"
        if not pred_path.exists():
            raise ExternalTrainerError(f"{image_id}: no prediction mask written")
        pred = read_mask(pred_path)
        if pred.shape != (h, w):
            raise ExternalTrainerError(
                f"{image_id}: prediction shape {pred.shape} != image shape {(h, w)}")
        bad = np.unique(pred[(pred >= n_labels) & (pred != IGNORE_LABEL)])
        if bad.size:
            raise ExternalTrainerError(
                f"{image_id}: prediction labels {bad.tolist()} out of range "
                f"0..{n_labels - 1}")
    return preds_dir
