"""Symmetric k-nearest-neighbor affinity graphs over feature rows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GraphError

DEFAULT_K_NEIGHBORS = 30


@dataclass(frozen=True)
class AffinityGraph:
    """Sparse symmetric nonnegative connectivity weights with zero diagonal."""

    weights: sp.csr_matrix
    isolated: np.ndarray  # bool per node, True when the node has no edge

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()


def build_knn_affinity(features: np.ndarray, k: int = DEFAULT_K_NEIGHBORS) -> AffinityGraph:
    """Connectivity graph: w_ij = 1 iff j is among i's k nearest (Euclidean) or vice versa.

    Self-edges are excluded, distance ties break toward the lower index,
    and the directed k-NN relation is symmetrized with max (i.e. union).
    When n <= k the neighbor count drops to n-1 with a warning; n < 2 is an
    error.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise GraphError(f"features must be [n, D], got shape {X.shape}")
    if not np.isfinite(X).all():
        raise GraphError("features contain non-finite values")
    n = X.shape[0]
    if n < 2:
        raise GraphError(f"need at least 2 rows to build a graph, got {n}")
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    if k >= n:
        warnings.warn(f"k={k} >= n={n}; reducing to k={n - 1}", stacklevel=2)
        k = n - 1

    # Exact all-pairs distances; fine at the scales this engine targets.
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    # Stable full argsort keeps tie-breaking at the lower index.
    order = np.argsort(d2, axis=1, kind="stable")
    neighbors = order[:, :k]

    rows = np.repeat(np.arange(n), k)
    cols = neighbors.ravel()
    w = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    w = w.maximum(w.T)
    w.setdiag(0.0)
    w.eliminate_zeros()
    isolated = np.asarray(w.sum(axis=1)).ravel() == 0
    return AffinityGraph(weights=w.tocsr(), isolated=isolated)
