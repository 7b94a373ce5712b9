"""Spectral embedding: eigenvectors of the symmetric normalized Laplacian.

L_sym = I - D^{-1/2} W D^{-1/2}; the embedding keeps the eigenvectors of
the d smallest eigenvalues. Eigenvalues of L_sym live in [0, 2] and the
multiplicity of 0 equals the number of connected components, which the
tests exploit as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenSolverError
from .graph import AffinityGraph

# Above this node count the dense solver gives way to shift-invert Lanczos.
DENSE_EIGEN_LIMIT = 4096


@dataclass(frozen=True)
class SpectralEmbedding:
    """n x d eigenvector matrix plus the ascending eigenvalues."""

    vectors: np.ndarray      # [n, d] float64
    eigenvalues: np.ndarray  # [d] ascending
    isolated: np.ndarray     # bool per node; their rows are all-zero

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first entry with |v| > 1e-12 is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def normalized_laplacian(graph: AffinityGraph) -> sp.csr_matrix:
    """L_sym over the non-isolated nodes (isolated rows/cols stay zero)."""
    w = graph.weights
    deg = graph.degrees()
    inv_sqrt = np.zeros_like(deg)
    live = deg > 0
    inv_sqrt[live] = 1.0 / np.sqrt(deg[live])
    d_half = sp.diags(inv_sqrt)
    lap = sp.eye(w.shape[0], format="csr") - d_half @ w @ d_half
    # Isolated nodes keep an identity row from eye(); zero it so they do not
    # masquerade as extra components.
    if graph.isolated.any():
        lap = lap.tolil()
        for i in np.nonzero(graph.isolated)[0]:
            lap[i, i] = 0.0
        lap = lap.tocsr()
    return lap


def spectral_embed(graph: AffinityGraph, d: int) -> SpectralEmbedding:
    """Embedding from the d smallest eigenpairs of L_sym, sign-normalized.

    Isolated nodes get zero embedding rows and are reported via the
    ``isolated`` flags. Dense solve below DENSE_EIGEN_LIMIT nodes,
    shift-invert Lanczos above.
    """
    n = graph.n
    n_live = int(n - graph.isolated.sum())
    if d < 1 or d > n_live:
        raise EigenSolverError(
            f"d={d} outside [1, {n_live}] (n={n}, isolated={n - n_live})")
    live = ~graph.isolated
    w_live = graph.weights[live][:, live]
    sub = AffinityGraph(weights=w_live.tocsr(),
                        isolated=np.zeros(n_live, dtype=bool))
    lap = normalized_laplacian(sub)

    if n_live <= DENSE_EIGEN_LIMIT or d >= n_live - 1:
        dense = lap.toarray()
        dense = 0.5 * (dense + dense.T)
        vals, vecs = np.linalg.eigh(dense)
        vals, vecs = vals[:d], vecs[:, :d]
    else:
        try:
            # Shift-invert targets the smallest eigenvalues directly; ARPACK
            # is a restarted Lanczos iteration under the hood.
            vals, vecs = spla.eigsh(lap.tocsc(), k=d, sigma=-1e-5, which="LM")
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            deg = sub.degrees()
            raise EigenSolverError(
                f"eigensolver failed on graph with n={n_live}, "
                f"edges={sub.weights.nnz // 2}, mean degree={deg.mean():.2f}: {exc}"
            ) from exc
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]

    # Round-off can push eigenvalues slightly outside [0, 2]; clamp it away.
    vals = np.clip(vals, 0.0, 2.0)
    vecs = _sign_normalize(vecs)

    vectors = np.zeros((n, d))
    vectors[live] = vecs
    return SpectralEmbedding(vectors=vectors, eigenvalues=vals,
                             isolated=graph.isolated.copy())
