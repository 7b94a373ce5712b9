"""Dataset-level IoU accounting and cluster-to-class matching.

Intersections are counted once over the whole dataset (pooled pixels, not
per-image averages, matching the standard segmentation-benchmark protocol).
Prediction labels are matched to ground-truth classes either one-to-one
(Hungarian, K == C) or many-to-one (majority voting, for over-clustering).
Pixels labeled 255 in either mask contribute to no count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import zip_longest
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import spearmanr

from .errors import EvaluationError
from .maskio import IGNORE_LABEL

DISCOVERED_IOU_THRESHOLD = 0.20


@dataclass
class OverlapTable:
    """C x K pixel intersection counts between gt classes and predicted labels.

    Row/column marginals are the per-class and per-prediction pixel totals,
    so intersections can never exceed either total.
    """

    intersections: np.ndarray  # [C, K] int64

    @property
    def n_classes(self) -> int:
        return self.intersections.shape[0]

    @property
    def n_pred_labels(self) -> int:
        return self.intersections.shape[1]

    @property
    def class_totals(self) -> np.ndarray:
        return self.intersections.sum(axis=1)

    @property
    def pred_totals(self) -> np.ndarray:
        return self.intersections.sum(axis=0)

    def __add__(self, other: "OverlapTable") -> "OverlapTable":
        if self.intersections.shape != other.intersections.shape:
            raise EvaluationError("cannot add overlap tables of different shapes")
        return OverlapTable(self.intersections + other.intersections)

    def iou_matrix(self) -> np.ndarray:
        """iou[c, k] = inter / union with 0/0 defined as 0."""
        inter = self.intersections.astype(np.float64)
        union = (self.class_totals[:, None] + self.pred_totals[None, :]
                 - self.intersections).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            iou = np.where(union > 0, inter / union, 0.0)
        return iou


def accumulate_overlaps(
    preds: Iterable[np.ndarray],
    gts: Iterable[np.ndarray],
    n_classes: int,
    n_pred_labels: int,
    ids: Optional[Sequence[str]] = None,
) -> OverlapTable:
    """Stream exact pixel counts into a C x K table (bounded memory).

    Raises EvaluationError on per-pair shape mismatch or labels outside
    range (255 is always allowed and ignored).
    """
    inter = np.zeros((n_classes, n_pred_labels), dtype=np.int64)
    sentinel = object()
    for count, (pred, gt) in enumerate(zip_longest(preds, gts, fillvalue=sentinel)):
        if pred is sentinel or gt is sentinel:
            raise EvaluationError(
                f"prediction/gt streams differ in length (short at pair {count})")
        name = ids[count] if ids is not None else f"pair {count}"
        inter += _pair_counts(pred, gt, n_classes, n_pred_labels, name)
    return OverlapTable(inter)


def _pair_counts(pred, gt, n_classes, n_pred_labels, name):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise EvaluationError(
            f"{name}: prediction {pred.shape} != ground truth {gt.shape}")
    valid = (gt != IGNORE_LABEL) & (pred != IGNORE_LABEL)
    g = gt[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    if g.size and g.max() >= n_classes:
        raise EvaluationError(f"{name}: gt label {int(g.max())} >= C={n_classes}")
    if p.size and p.max() >= n_pred_labels:
        raise EvaluationError(f"{name}: pred label {int(p.max())} >= K={n_pred_labels}")
    return np.bincount(
        g * n_pred_labels + p, minlength=n_classes * n_pred_labels
    ).reshape(n_classes, n_pred_labels)


@dataclass(frozen=True)
class Matching:
    """Prediction label -> ground-truth class map; prediction 0 is pinned to class 0."""

    mode: str                 # "hungarian" | "majority"
    label_map: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mode": self.mode,
                "label_map": {str(k): v for k, v in sorted(self.label_map.items())}}


def hungarian_match(table: OverlapTable) -> Matching:
    """One-to-one assignment of foreground predictions to foreground classes.

    Maximizes the total IoU (Kuhn-Munkres on negated IoU); requires K == C.
    Background is pre-assigned 0 <-> 0 and excluded from the search.
    """
    if table.n_pred_labels != table.n_classes:
        raise EvaluationError(
            f"Hungarian matching needs K == C, got K={table.n_pred_labels} "
            f"C={table.n_classes}; use majority voting for over-clustering")
    iou = table.iou_matrix()[1:, 1:]
    rows, cols = linear_sum_assignment(-iou)
    label_map = {0: 0}
    for r, c in zip(rows, cols):
        label_map[int(c) + 1] = int(r) + 1
    return Matching(mode="hungarian", label_map=label_map)


def majority_vote(table: OverlapTable) -> Matching:
    """Map each foreground prediction to its highest-IoU class (ties: lowest class).

    Many-to-one: several predictions may land on the same class and are
    merged before per-class IoU is recomputed. Over-clustering (K > C) is
    the intended use.
    """
    iou = table.iou_matrix()
    label_map = {0: 0}
    for k in range(1, table.n_pred_labels):
        label_map[k] = int(np.argmax(iou[:, k]))
    return Matching(mode="majority", label_map=label_map)


@dataclass
class EvalReport:
    per_class_iou: np.ndarray     # [C] after matching
    miou: float                   # mean over all classes (or fg only, per flag)
    discovered_count: int         # foreground classes with IoU >= 0.20
    miou_discovered: float
    has_cluster_count: int        # foreground classes with IoU > 0
    miou_has_cluster: float
    matching: Optional[Matching] = None
    includes_background: bool = True

    def to_dict(self) -> dict:
        return {
            "per_class_iou": [round(float(v), 6) for v in self.per_class_iou],
            "miou": round(float(self.miou), 6),
            "discovered_count": self.discovered_count,
            "miou_discovered": round(float(self.miou_discovered), 6),
            "has_cluster_count": self.has_cluster_count,
            "miou_has_cluster": round(float(self.miou_has_cluster), 6),
            "matching": self.matching.to_dict() if self.matching else None,
            "includes_background": self.includes_background,
        }


def matched_class_iou(table: OverlapTable, matching: Matching) -> np.ndarray:
    """Per-class IoU after rewriting predictions through the matching.

    Prediction labels mapped to one class act as a single merged mask:
    their intersections and totals add up (labels are mutually exclusive
    per pixel, so the sums stay exact).
    """
    inter = table.intersections
    class_totals = table.class_totals
    pred_totals = table.pred_totals
    n_classes = table.n_classes
    iou = np.zeros(n_classes, dtype=np.float64)
    for c in range(n_classes):
        preds = [k for k, cls in matching.label_map.items() if cls == c]
        merged_inter = int(sum(inter[c, k] for k in preds))
        merged_pred = int(sum(pred_totals[k] for k in preds))
        union = int(class_totals[c]) + merged_pred - merged_inter
        iou[c] = merged_inter / union if union > 0 else 0.0
    return iou


def report(table: OverlapTable, matching: Matching,
           include_background: bool = True) -> EvalReport:
    """Apply a matching and derive the per-class / summary IoU statistics.

    ``include_background`` controls whether class 0 enters the headline
    mIoU; discovery counts always run over foreground classes only.
    """
    iou = matched_class_iou(table, matching)
    fg = iou[1:]
    headline = iou if include_background else fg
    discovered = fg >= DISCOVERED_IOU_THRESHOLD
    has_cluster = fg > 0.0
    return EvalReport(
        per_class_iou=iou,
        miou=float(headline.mean()) if headline.size else 0.0,
        discovered_count=int(discovered.sum()),
        miou_discovered=float(fg[discovered].mean()) if discovered.any() else 0.0,
        has_cluster_count=int(has_cluster.sum()),
        miou_has_cluster=float(fg[has_cluster].mean()) if has_cluster.any() else 0.0,
        matching=matching,
        includes_background=include_background,
    )


def transfer_remap(masks: Iterable[np.ndarray],
                   class_map: Mapping[int, int]) -> Iterable[np.ndarray]:
    """Rewrite mask labels through ``class_map`` (unlisted classes -> background).

    255 passes through untouched. A mask label that is neither mapped,
    background, nor ignore raises EvaluationError, because silent drops
    would skew the IoU totals.
    """
    lut = np.zeros(256, dtype=np.uint8)
    known = np.zeros(256, dtype=bool)
    known[0] = known[IGNORE_LABEL] = True
    lut[IGNORE_LABEL] = IGNORE_LABEL
    for src, dst in class_map.items():
        if not (0 <= src < 256 and 0 <= dst < 256):
            raise EvaluationError(f"class_map entry {src}->{dst} out of 8-bit range")
        lut[src] = dst
        known[src] = True
    for mask in masks:
        mask = np.asarray(mask, dtype=np.uint8)
        present = np.unique(mask)
        unknown = present[~known[present]]
        if unknown.size:
            raise EvaluationError(
                f"mask contains labels {unknown.tolist()} not covered by class_map")
        yield lut[mask]


def spearman_size_iou(sizes: Sequence[float], ious: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks on ties) of size vs IoU."""
    sizes = np.asarray(sizes, dtype=np.float64)
    ious = np.asarray(ious, dtype=np.float64)
    if sizes.shape != ious.shape or sizes.ndim != 1:
        raise EvaluationError("sizes and ious must be 1-D and equally long")
    if sizes.size < 3:
        raise EvaluationError(f"need at least 3 points, got {sizes.size}")
    rho = spearmanr(sizes, ious).statistic
    return float(rho)


def format_text_report(rep: EvalReport, class_names: Sequence[str]) -> str:
    """Aligned per-class IoU table (percent, one decimal) plus the summary row."""
    if len(class_names) != rep.per_class_iou.size:
        raise EvaluationError(
            f"{len(class_names)} class names for {rep.per_class_iou.size} classes")
    headers = list(class_names) + ["mIoU"]
    values = [f"{100 * v:.1f}" for v in rep.per_class_iou] + [f"{100 * rep.miou:.1f}"]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    line2 = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    extra = (
        f"discovered (IoU>={100 * DISCOVERED_IOU_THRESHOLD:.0f}%): "
        f"{rep.discovered_count}  mIoU discovered: {100 * rep.miou_discovered:.1f}  "
        f"has cluster: {rep.has_cluster_count}  mIoU has cluster: "
        f"{100 * rep.miou_has_cluster:.1f}"
    )
    return "\n".join([line1, line2, extra])


def write_report_json(rep: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
