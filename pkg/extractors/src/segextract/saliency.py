"""Saliency estimators producing 8-bit grayscale maps.

Pretrained salient-object detectors plug in as TorchScript checkpoints
mapping [B, 3, H, W] to a single-channel response; "contrast" is a
checkpoint-free center-surround heuristic good enough for dry runs and
tests.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .backbones import IMAGENET_MEAN, IMAGENET_STD

SALIENCY_HINT = (
    "export the pretrained saliency net (e.g. a boundary-aware detector "
    "distilled from an unsupervised teacher) with torch.jit.trace so it "
    "maps [B, 3, H, W] to [B, 1, H, W] responses, then pass it via "
    "--checkpoint"
)


class SaliencyError(RuntimeError):
    pass


class SaliencyModel:
    def __init__(self, fn, name: str):
        self._fn = fn
        self.name = name

    def __call__(self, image: np.ndarray) -> np.ndarray:
        """[H, W, 3] uint8 -> [H, W] uint8 saliency (255 = most salient)."""
        out = self._fn(image)
        out = np.asarray(out, dtype=np.float64)
        lo, hi = out.min(), out.max()
        if hi > lo:
            out = (out - lo) / (hi - lo)
        else:
            out = np.zeros_like(out)
        return np.round(out * 255.0).astype(np.uint8)


def _box_blur(gray: np.ndarray, radius: int) -> np.ndarray:
    pad = np.pad(gray, radius, mode="edge")
    csum = np.cumsum(np.cumsum(pad, axis=0), axis=1)
    csum = np.pad(csum, ((1, 0), (1, 0)))
    size = 2 * radius + 1
    h, w = gray.shape
    total = (csum[size:size + h, size:size + w]
             - csum[size:size + h, :w]
             - csum[:h, size:size + w]
             + csum[:h, :w])
    return total / (size * size)


def _center_surround(image: np.ndarray) -> np.ndarray:
    gray = image.astype(np.float64).mean(axis=2)
    radius = max(2, min(gray.shape) // 8)
    return np.abs(_box_blur(gray, 2) - _box_blur(gray, radius))


def load_saliency_model(name: str, checkpoint: str | None = None) -> SaliencyModel:
    if name == "contrast":
        return SaliencyModel(_center_surround, "contrast")
    if name == "torchscript":
        if checkpoint is None:
            raise SaliencyError(
                f"saliency 'torchscript' needs --checkpoint; {SALIENCY_HINT}")
        path = Path(checkpoint)
        if not path.exists():
            raise SaliencyError(f"checkpoint {path} not found; {SALIENCY_HINT}")
        try:
            module = torch.jit.load(str(path), map_location="cpu").eval()
        except Exception as exc:
            raise SaliencyError(
                f"cannot load saliency checkpoint {path} ({exc}); "
                f"{SALIENCY_HINT}") from exc

        @torch.no_grad()
        def run(image: np.ndarray) -> np.ndarray:
            x = torch.from_numpy(image.astype(np.float32) / 255.0)
            x = x.permute(2, 0, 1)[None]
            mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
            std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
            out = module((x - mean) / std)
            if out.ndim == 4:
                out = out[0, 0]
            elif out.ndim == 3:
                out = out[0]
            else:
                raise SaliencyError(
                    f"saliency checkpoint returned shape {tuple(out.shape)}, "
                    "expected [B, 1, H, W]")
            return out.numpy()

        return SaliencyModel(run, f"torchscript:{path.name}")
    raise SaliencyError(f"unknown saliency model {name!r}; "
                        "use 'contrast' or 'torchscript'")
