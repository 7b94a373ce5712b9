"""Teacher/student self-training on noisy pseudo-masks.

The internal model is a linear per-pixel head over precomputed dense
feature maps: logits(x) = W f(x) + b with W of shape (C+1, D). That keeps
one self-training round exact, fast, and testable; full segmentation
networks plug in through the external-trainer contract instead
(see ``unsupseg.external``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import TrainingError
from .manifest import DatasetManifest
from .maskio import IGNORE_LABEL
from .tensorio import read_feature_tensor

DEFAULT_LEARNING_RATE = 6e-5
DEFAULT_BATCH_IMAGES = 56


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_pixels: Optional[int] = None  # None: 56 feature maps' worth of pixels
    epochs: int = 10
    seed: int = 0
    ignore_label: int = IGNORE_LABEL
    optimizer: str = "adam"  # "adam" or "sgd" (plain gradient descent)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Random subwindow sampling of feature maps, the desk-scale stand-in for
    # crop-scale augmentation; None disables it.
    crop_scale: Optional[tuple[float, float]] = (0.5, 1.0)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.crop_scale is not None:
            lo, hi = self.crop_scale
            if not (0 < lo <= hi <= 1):
                raise ValueError(f"crop_scale must satisfy 0 < lo <= hi <= 1, got {self.crop_scale}")


@dataclass
class HeadModel:
    """Linear per-pixel classifier: logits = W f + b."""

    W: np.ndarray  # [C+1, D]
    b: np.ndarray  # [C+1]

    @property
    def n_labels(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]

    def logits(self, feats: np.ndarray) -> np.ndarray:
        """feats [..., D] -> logits [..., C+1]."""
        if feats.shape[-1] != self.feature_dim:
            raise TrainingError(
                f"feature dim {feats.shape[-1]} != model dim {self.feature_dim}")
        return feats @ self.W.T + self.b

    def save(self, path) -> None:
        np.savez(path, W=self.W, b=self.b)

    @classmethod
    def load(cls, path) -> "HeadModel":
        data = np.load(path)
        return cls(W=data["W"], b=data["b"])


def softmax_xent(W: np.ndarray, b: np.ndarray, feats: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over a pixel batch, plus gradients.

    Returns (loss, dW, db). Stable log-sum-exp; gradient of the mean loss
    w.r.t. the logits is (softmax - onehot) / batch.
    """
    logits = feats @ W.T + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = feats.shape[0]
    loss = float(-(shifted[np.arange(n), labels]
                   - np.log(exp.sum(axis=1))).mean())
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.T @ feats, dlogits.sum(axis=0)


def resize_mask_nearest(mask: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize with pixel-center sampling (labels stay exact)."""
    h_out, w_out = out_hw
    h_in, w_in = mask.shape
    ys = np.minimum((np.arange(h_out) + 0.5) * h_in / h_out, h_in - 1).astype(np.int64)
    xs = np.minimum((np.arange(w_out) + 0.5) * w_in / w_out, w_in - 1).astype(np.int64)
    return mask[np.ix_(ys, xs)]


def _flatten_dataset(dense_features, pseudo_masks, ignore_label):
    """Sorted-id canonical flattening into pixel arrays (order-independent)."""
    ids = sorted(dense_features)
    feats_list, labels_list, image_index, coords = [], [], [], []
    dim = None
    for i, image_id in enumerate(ids):
        fmap = np.asarray(dense_features[image_id], dtype=np.float64)
        if fmap.ndim != 3:
            raise TrainingError(f"{image_id}: dense features must be [H, W, D]")
        if dim is None:
            dim = fmap.shape[2]
        elif fmap.shape[2] != dim:
            raise TrainingError(
                f"{image_id}: feature dim {fmap.shape[2]} != {dim} seen earlier")
        mask = np.asarray(pseudo_masks[image_id])
        if mask.shape != fmap.shape[:2]:
            raise TrainingError(
                f"{image_id}: mask {mask.shape} does not match feature map "
                f"{fmap.shape[:2]}; downsample with resize_mask_nearest first")
        valid = mask != ignore_label
        if not valid.any():
            continue
        ys, xs = np.nonzero(valid)
        feats_list.append(fmap[ys, xs])
        labels_list.append(mask[ys, xs].astype(np.int64))
        image_index.append(np.full(ys.size, i, dtype=np.int64))
        coords.append(np.stack([ys, xs], axis=1))
    if not feats_list:
        raise TrainingError("all pixels are ignore-labeled; nothing to train on")
    shapes = {ids[i]: np.asarray(dense_features[ids[i]]).shape[:2] for i in range(len(ids))}
    return (ids, shapes, np.concatenate(feats_list),
            np.concatenate(labels_list), np.concatenate(image_index),
            np.concatenate(coords), dim)


def train_head(
    dense_features: Mapping[str, np.ndarray],
    pseudo_masks: Mapping[str, np.ndarray],
    n_labels: int,
    cfg: TrainConfig,
) -> tuple[HeadModel, list[float]]:
    """Fit the linear head by minimizing mean per-pixel cross-entropy.

    ``dense_features`` maps image_id -> [H', W', D]; ``pseudo_masks`` maps
    image_id -> [H', W'] uint8 labels at feature resolution (ignore = 255).
    Deterministic given cfg.seed regardless of dict insertion order.
    Returns the model and the per-epoch mean batch loss trace.
    """
    missing = set(dense_features) - set(pseudo_masks)
    if missing:
        raise TrainingError(f"no pseudo-mask for images: {sorted(missing)[:5]}")
    ids, shapes, X, y, image_index, coords, dim = _flatten_dataset(
        dense_features, pseudo_masks, cfg.ignore_label)
    if y.max() >= n_labels:
        raise TrainingError(f"label {int(y.max())} >= n_labels {n_labels}")

    total = X.shape[0]
    batch = cfg.batch_pixels
    if batch is None:
        batch = max(1, DEFAULT_BATCH_IMAGES * (total // max(1, len(ids))))
    batch = min(batch, max(1, total))
    steps_per_epoch = math.ceil(total / batch)

    rng = np.random.default_rng(cfg.seed)
    W = np.zeros((n_labels, dim))
    b = np.zeros(n_labels)
    m_w = np.zeros_like(W); v_w = np.zeros_like(W)
    m_b = np.zeros_like(b); v_b = np.zeros_like(b)
    t = 0
    trace: list[float] = []

    for _ in range(cfg.epochs):
        if cfg.crop_scale is not None:
            pool = _subwindow_pool(rng, ids, shapes, image_index, coords, cfg.crop_scale)
        else:
            pool = np.arange(total)
        epoch_losses = []
        for _ in range(steps_per_epoch):
            if pool.size == total and batch >= total:
                take = np.arange(total)  # exact full-batch pass
            else:
                take = pool[rng.integers(0, pool.size, size=batch)]
            loss, dW, db = softmax_xent(W, b, X[take], y[take])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss {loss}")
            epoch_losses.append(loss)
            t += 1
            if cfg.optimizer == "adam":
                m_w = cfg.beta1 * m_w + (1 - cfg.beta1) * dW
                v_w = cfg.beta2 * v_w + (1 - cfg.beta2) * dW ** 2
                m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * db
                v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * db ** 2
                bc1 = 1 - cfg.beta1 ** t
                bc2 = 1 - cfg.beta2 ** t
                W -= cfg.learning_rate * (m_w / bc1) / (np.sqrt(v_w / bc2) + cfg.eps)
                b -= cfg.learning_rate * (m_b / bc1) / (np.sqrt(v_b / bc2) + cfg.eps)
            else:
                W -= cfg.learning_rate * dW
                b -= cfg.learning_rate * db
        trace.append(float(np.mean(epoch_losses)))
    return HeadModel(W=W, b=b), trace


def _subwindow_pool(rng, ids, shapes, image_index, coords, crop_scale):
    """Candidate pixel indices restricted to one random subwindow per image."""
    lo, hi = crop_scale
    keep = np.zeros(image_index.shape[0], dtype=bool)
    for i, image_id in enumerate(ids):
        h, w = shapes[image_id]
        sy = rng.uniform(lo, hi)
        sx = rng.uniform(lo, hi)
        wh = max(1, round(h * sy))
        ww = max(1, round(w * sx))
        y0 = int(rng.integers(0, h - wh + 1))
        x0 = int(rng.integers(0, w - ww + 1))
        mine = image_index == i
        inside = (
            (coords[:, 0] >= y0) & (coords[:, 0] < y0 + wh)
            & (coords[:, 1] >= x0) & (coords[:, 1] < x0 + ww)
        )
        keep |= mine & inside
    pool = np.nonzero(keep)[0]
    return pool if pool.size else np.arange(image_index.shape[0])


def predict_masks(
    model: HeadModel,
    dense_features: Mapping[str, np.ndarray],
    out_sizes: Optional[Mapping[str, tuple[int, int]]] = None,
) -> dict[str, np.ndarray]:
    """Per-pixel argmax over the head's logits, optionally nearest-upsampled.

    Ties resolve to the lowest class index. ``out_sizes`` maps image_id to
    the target (height, width); images not listed stay at feature
    resolution.
    """
    masks: dict[str, np.ndarray] = {}
    for image_id in sorted(dense_features):
        fmap = np.asarray(dense_features[image_id], dtype=np.float64)
        if fmap.ndim != 3 or fmap.shape[2] != model.feature_dim:
            raise TrainingError(
                f"{image_id}: dense features {fmap.shape} incompatible with "
                f"model dim {model.feature_dim}")
        labels = np.argmax(model.logits(fmap), axis=-1).astype(np.uint8)
        if out_sizes is not None and image_id in out_sizes:
            labels = resize_mask_nearest(labels, out_sizes[image_id])
        masks[image_id] = labels
    return masks


def _image_size(path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size[1], img.size[0]  # (height, width)


def load_dense_features(manifest: DatasetManifest,
                        ids: Optional[Sequence[str]] = None) -> dict[str, np.ndarray]:
    wanted = set(ids) if ids is not None else None
    out = {}
    for entry in manifest:
        if wanted is not None and entry.image_id not in wanted:
            continue
        if entry.dense_feature_path is None:
            raise TrainingError(f"{entry.image_id}: manifest has no dense_feature_path")
        out[entry.image_id] = read_feature_tensor(entry.dense_feature_path)
    return out


def self_train_round(
    train_manifest: DatasetManifest,
    pseudo_masks: Mapping[str, np.ndarray],
    extend_manifest: Optional[DatasetManifest],
    cfg: TrainConfig,
    n_labels: int,
) -> tuple[dict[str, np.ndarray], HeadModel, list[float]]:
    """One teacher round: fit on the given masks, re-predict a larger set.

    Trains on the train-manifest images covered by ``pseudo_masks`` (masks
    are downsampled to feature resolution), then predicts masks for every
    image of train + extend at full image resolution. The returned masks
    are the next round's training set.
    """
    covered = [e.image_id for e in train_manifest if e.image_id in pseudo_masks]
    if not covered:
        raise TrainingError("pseudo_masks cover no image of the train manifest")
    train_feats = load_dense_features(train_manifest, covered)
    masks_at_feat = {
        i: resize_mask_nearest(np.asarray(pseudo_masks[i]), train_feats[i].shape[:2])
        for i in covered
    }
    model, trace = train_head(train_feats, masks_at_feat, n_labels, cfg)

    all_entries = list(train_manifest)
    if extend_manifest is not None:
        known = {e.image_id for e in all_entries}
        all_entries += [e for e in extend_manifest if e.image_id not in known]
    feats = dict(train_feats)
    sizes: dict[str, tuple[int, int]] = {}
    for entry in all_entries:
        if entry.image_id not in feats:
            if entry.dense_feature_path is None:
                raise TrainingError(
                    f"{entry.image_id}: manifest has no dense_feature_path")
            feats[entry.image_id] = read_feature_tensor(entry.dense_feature_path)
        sizes[entry.image_id] = _image_size(entry.image_path)
    new_masks = predict_masks(model, feats, sizes)
    return new_masks, model, trace
