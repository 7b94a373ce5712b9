"""Deterministic Lloyd k-means with k-means++ seeding.

Points are the spectral-embedding rows scaled to unit length (rows that
are all zero, e.g. isolated graph nodes, stay zero). Given a seed the
result is bit-reproducible: all randomness flows from one Generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralEmbedding

DEFAULT_N_INIT = 10
MAX_LLOYD_ITERATIONS = 300
CENTROID_SHIFT_TOL = 1e-6


@dataclass
class ClusterModel:
    """Cluster ids, centroids, and per-point distance to the own centroid."""

    assignments: np.ndarray  # [n] int, values in 0..K-1
    centroids: np.ndarray    # [K, d]
    distances: np.ndarray    # [n] Euclidean distance to own centroid
    inertia: float           # sum of squared distances

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster_id: int) -> np.ndarray:
        return np.nonzero(self.assignments == cluster_id)[0]


def normalize_rows(points: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; all-zero rows are left untouched."""
    pts = np.asarray(points, dtype=np.float64)
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return pts / safe


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = rng.integers(n)
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = (
        np.sum(points ** 2, axis=1)[:, None]
        + np.sum(centroids ** 2, axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def _lloyd(points: np.ndarray, init: np.ndarray, rng: np.random.Generator):
    k = init.shape[0]
    centroids = init.copy()
    labels, d2 = _assign(points, centroids)
    for _ in range(MAX_LLOYD_ITERATIONS):
        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                # Documented behavior, not an error: an emptied cluster is
                # re-seeded at the point farthest from its current centroid.
                new_centroids[j] = points[np.argmax(d2)]
        shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
        centroids = new_centroids
        labels, d2 = _assign(points, centroids)
        if shift < CENTROID_SHIFT_TOL:
            break
    return labels, centroids, d2


def cluster_kmeans(
    embedding: SpectralEmbedding | np.ndarray,
    n_clusters: int,
    n_init: int = DEFAULT_N_INIT,
    seed: int = 0,
) -> ClusterModel:
    """Best-inertia result of ``n_init`` k-means++ initialized Lloyd runs."""
    raw = embedding.vectors if isinstance(embedding, SpectralEmbedding) else np.asarray(embedding)
    if raw.ndim != 2:
        raise ValueError(f"points must be [n, d], got shape {raw.shape}")
    n = raw.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if n_init < 1:
        raise ValueError(f"n_init must be >= 1, got {n_init}")
    points = normalize_rows(raw)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        init = _kmeanspp_init(points, n_clusters, rng)
        labels, centroids, d2 = _lloyd(points, init, rng)
        inertia = float(d2.sum())
        if best is None or inertia < best[3]:
            best = (labels, centroids, d2, inertia)
    labels, centroids, _, _ = best
    # Exact final distances (difference norms); the gram-matrix shortcut in
    # the inner loop can leave ~1e-16 residue on coincident points.
    distances = np.linalg.norm(points - centroids[labels], axis=1)
    return ClusterModel(
        assignments=labels.astype(np.int64),
        centroids=centroids,
        distances=distances,
        inertia=float(np.sum(distances ** 2)),
    )
