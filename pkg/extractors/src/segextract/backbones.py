"""Feature backbones behind one token-sequence contract.

A backbone maps a normalized image batch [B, 3, H, W] to a token sequence
[B, 1 + N, D]: token 0 is the global (CLS) summary, the remaining N tokens
tile the image as an (H / patch) x (W / patch) grid. Self-distilled vision
transformers export to this shape directly via TorchScript; a small
randomly initialized transformer ("toy") covers tests and dry runs without
any checkpoint.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CHECKPOINT_HINT = (
    "export your pretrained backbone with torch.jit.trace/script so its "
    "forward maps [B, 3, H, W] to tokens [B, 1 + N, D] (CLS first), then "
    "pass the file via --checkpoint; the self-distilled ViT releases on the "
    "model hubs all wrap this way"
)


class BackboneError(RuntimeError):
    pass


def _sincos_pos_embed(h: int, w: int, dim: int) -> torch.Tensor:
    """2-D sine/cosine positional embeddings for an h x w token grid."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0)
                      * torch.arange(0, half, 2, dtype=torch.float32) / half)
    ys = torch.arange(h, dtype=torch.float32)[:, None] * freqs[None, :]
    xs = torch.arange(w, dtype=torch.float32)[:, None] * freqs[None, :]
    y_emb = torch.cat([torch.sin(ys), torch.cos(ys)], dim=1)  # [h, half]
    x_emb = torch.cat([torch.sin(xs), torch.cos(xs)], dim=1)  # [w, half]
    grid = torch.cat([
        y_emb[:, None, :].expand(h, w, half),
        x_emb[None, :, :].expand(h, w, half),
    ], dim=2)
    return grid.reshape(h * w, dim)


class ToyViT(torch.nn.Module):
    """Tiny deterministic vision transformer with a CLS token.

    Random weights (fixed seed), so features are meaningless semantically
    but honor every shape/determinism contract of a real backbone.
    """

    def __init__(self, patch_size: int = 8, dim: int = 32, depth: int = 2,
                 heads: int = 4, seed: int = 0):
        super().__init__()
        self.patch_size = patch_size
        self.dim = dim
        generator_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        try:
            self.patch_embed = torch.nn.Conv2d(3, dim, kernel_size=patch_size,
                                               stride=patch_size)
            self.cls_token = torch.nn.Parameter(torch.randn(1, 1, dim) * 0.02)
            layer = torch.nn.TransformerEncoderLayer(
                d_model=dim, nhead=heads, dim_feedforward=2 * dim,
                batch_first=True, dropout=0.0)
            self.encoder = torch.nn.TransformerEncoder(layer, num_layers=depth)
            self.norm = torch.nn.LayerNorm(dim)
        finally:
            torch.random.set_rng_state(generator_state)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        patches = self.patch_embed(x)                    # [B, D, h, w]
        b, d, h, w = patches.shape
        tokens = patches.flatten(2).transpose(1, 2)      # [B, N, D]
        tokens = tokens + _sincos_pos_embed(h, w, d).to(tokens)
        cls = self.cls_token.expand(b, -1, -1)
        tokens = torch.cat([cls, tokens], dim=1)
        return self.norm(self.encoder(tokens))


class Backbone:
    """Inference wrapper: image arrays in, CLS / dense features out."""

    def __init__(self, module: torch.nn.Module, patch_size: int, name: str):
        self.module = module.eval()
        self.patch_size = patch_size
        self.name = name

    @torch.no_grad()
    def tokens(self, images: np.ndarray) -> torch.Tensor:
        """images [B, H, W, 3] uint8 -> tokens [B, 1 + N, D]."""
        x = torch.from_numpy(images.astype(np.float32) / 255.0).permute(0, 3, 1, 2)
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        out = self.module((x - mean) / std)
        if out.ndim != 3:
            raise BackboneError(
                f"backbone {self.name!r} returned shape {tuple(out.shape)}, "
                "expected [B, 1 + N, D] tokens")
        return out

    def cls_features(self, images: np.ndarray) -> np.ndarray:
        return self.tokens(images)[:, 0].numpy().astype(np.float32)

    def dense_features(self, images: np.ndarray) -> np.ndarray:
        """[B, H, W, 3] -> [B, H / patch, W / patch, D]."""
        tokens = self.tokens(images)
        b = images.shape[0]
        h = images.shape[1] // self.patch_size
        w = images.shape[2] // self.patch_size
        if tokens.shape[1] != 1 + h * w:
            raise BackboneError(
                f"backbone {self.name!r} produced {tokens.shape[1] - 1} patch "
                f"tokens for a {h}x{w} grid")
        return tokens[:, 1:].reshape(b, h, w, -1).numpy().astype(np.float32)

    @property
    def dim(self) -> int:
        probe = np.zeros((1, self.patch_size * 2, self.patch_size * 2, 3),
                         dtype=np.uint8)
        return int(self.tokens(probe).shape[-1])


def load_backbone(name: str, checkpoint: str | None = None,
                  patch_size: int = 8, dim: int = 32, seed: int = 0) -> Backbone:
    """Backbone registry: "toy" (random, no checkpoint) or "torchscript".

    TorchScript checkpoints carry the real pretrained models; a missing or
    unreadable file raises with an actionable hint.
    """
    if name == "toy":
        return Backbone(ToyViT(patch_size=patch_size, dim=dim, seed=seed),
                        patch_size, "toy")
    if name == "torchscript":
        if checkpoint is None:
            raise BackboneError(
                f"backbone 'torchscript' needs --checkpoint; {CHECKPOINT_HINT}")
        path = Path(checkpoint)
        if not path.exists():
            raise BackboneError(
                f"checkpoint {path} not found; {CHECKPOINT_HINT}")
        try:
            module = torch.jit.load(str(path), map_location="cpu")
        except Exception as exc:
            raise BackboneError(
                f"cannot load TorchScript checkpoint {path} ({exc}); "
                f"{CHECKPOINT_HINT}") from exc
        return Backbone(module, patch_size, f"torchscript:{path.name}")
    raise BackboneError(f"unknown backbone {name!r}; use 'toy' or 'torchscript'")


def load_image_rgb(path) -> np.ndarray:
    """Decode any image file to [H, W, 3] uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
