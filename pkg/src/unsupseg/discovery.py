"""Cluster filtering and pseudo-mask synthesis.

After k-means in the spectral embedding, the least certain members of each
cluster (largest distance to their centroid) are discarded, and each
surviving proposal paints its cluster id (+1, background stays 0) into its
binary mask to form the initial pseudo-label for self-training.
"""

from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np

from .kmeans import ClusterModel
from .proposals import ProposalRecord

DEFAULT_FILTER_FRACTION = 0.2


def filter_uncertain(model: ClusterModel, p: float = DEFAULT_FILTER_FRACTION) -> np.ndarray:
    """Keep all but the ceil(p * n_c) largest-distance members of each cluster.

    Distance ties drop the higher index first. Returns the kept indices in
    ascending order; a cluster may end up empty (ceil rounds up).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"filter fraction must be in [0, 1), got {p}")
    kept: list[int] = []
    for cid in range(model.n_clusters):
        members = model.members(cid)
        if members.size == 0:
            continue
        n_drop = math.ceil(p * members.size)
        if n_drop == 0:
            kept.extend(members.tolist())
            continue
        order = np.lexsort((members, model.distances[members]))
        kept.extend(members[order[: members.size - n_drop]].tolist())
    return np.asarray(sorted(kept), dtype=np.int64)


def build_cluster_report(
    model: ClusterModel,
    kept: np.ndarray,
    ids: Sequence[str] | None = None,
) -> list[dict]:
    """Per-cluster summary with emptied-cluster flags; serializable as JSON."""
    kept_set = set(int(i) for i in kept)
    name = (lambda i: ids[i]) if ids is not None else (lambda i: int(i))
    rows = []
    for cid in range(model.n_clusters):
        members = model.members(cid)
        dropped = [int(i) for i in members if int(i) not in kept_set]
        rows.append({
            "cluster_id": cid,
            "size": int(members.size),
            "kept": int(members.size - len(dropped)),
            "dropped_ids": [name(i) for i in dropped],
            "mean_distance": float(model.distances[members].mean()) if members.size else 0.0,
            "emptied": bool(members.size > 0 and members.size == len(dropped)),
        })
    return rows


def synthesize_pseudo_masks(
    proposals: Sequence[ProposalRecord],
    assignments: np.ndarray,
    kept: np.ndarray,
) -> dict[str, np.ndarray]:
    """Paint cluster id + 1 inside each kept proposal's binary mask.

    Images whose proposal was filtered out are absent from the result, so
    they contribute nothing to self-training.
    """
    if len(assignments) != len(proposals):
        raise ValueError(
            f"{len(assignments)} assignments for {len(proposals)} proposals")
    masks: dict[str, np.ndarray] = {}
    for idx in np.asarray(kept, dtype=np.int64):
        rec = proposals[idx]
        label = int(assignments[idx]) + 1
        if label > 254:
            raise ValueError(f"cluster id {label - 1} exceeds the 8-bit label budget")
        mask = np.where(rec.binary_mask > 0, np.uint8(label), np.uint8(0))
        masks[rec.image_id] = mask
    return masks


def write_assignments(
    path,
    proposals: Sequence[ProposalRecord],
    model: ClusterModel,
    kept: np.ndarray,
) -> None:
    """JSON-lines: {image_id, cluster_id, distance, kept} in proposal order."""
    kept_set = set(int(i) for i in kept)
    with open(path, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(proposals):
            fh.write(json.dumps({
                "image_id": rec.image_id,
                "cluster_id": int(model.assignments[i]),
                "distance": round(float(model.distances[i]), 12),
                "kept": i in kept_set,
            }) + "\n")
