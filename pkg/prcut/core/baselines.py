"""
Baselines: vanilla (unnormalized) spectral clustering and k-means.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from prcut import config
from prcut.core.graph import Partition, SparseSimilarity, laplacian
from prcut.errors import EigenSolverError, GraphError, PartitionError, ShapeError

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-8
_RESIDUAL_TOL = 1e-8
_EIGENVALUE_FLOOR = -1e-10


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class KMeansResult:
    partition: Partition
    centroids: np.ndarray
    inertia: float
    n_iter: int


def _dense_laplacian(S: SparseSimilarity) -> np.ndarray:
    if S.n > config.DENSE_EIGEN_MAX_N:
        raise GraphError(f"dense eigendecomposition is limited to n <= {config.DENSE_EIGEN_MAX_N}, got {S.n}")
    return laplacian(S).toarray()


def _checked(S: SparseSimilarity, L: np.ndarray, values: np.ndarray, vectors: np.ndarray) -> EigenResult:
    # Gershgorin: the spectral radius of L_un is at most twice the largest degree
    scale = max(2.0 * float(S.degree.max(initial=0.0)), 1.0)
    residual = np.linalg.norm(L @ vectors - vectors * values[None, :], axis=0)
    if np.any(residual > _RESIDUAL_TOL * scale):
        raise EigenSolverError(f"eigenpair residual {residual.max():.3g} above tolerance")
    if np.any(values < _EIGENVALUE_FLOOR * scale):
        raise EigenSolverError(f"negative Laplacian eigenvalue {values.min():.3g}")
    gram = vectors.T @ vectors
    if not np.allclose(gram, np.eye(gram.shape[0]), atol=1e-8):
        raise EigenSolverError("eigenvectors are not orthonormal")
    values = np.maximum(values, 0.0)
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenResult(values, vectors)


def laplacian_spectrum(S: SparseSimilarity) -> EigenResult:
    """Full eigendecomposition of L_un = D - W, eigenvalues ascending."""
    L = _dense_laplacian(S)
    values, vectors = np.linalg.eigh(L)
    return _checked(S, L, values, vectors)


def smallest_eigvecs(S: SparseSimilarity, k: int) -> EigenResult:
    """The k smoothest eigenpairs of L_un orthogonal to the constant vector.

    L is shifted by c·11ᵀ/n with c above the spectral radius, which pushes the
    constant eigenvector to the top of the spectrum; on disconnected graphs the
    excluded vector is then exactly 1/√n and not an arbitrary null-space mix.
    """
    if k < 1:
        raise PartitionError("k must be >= 1")
    if S.n < k + 1:
        raise PartitionError(f"need n >= k + 1 vertices, got n={S.n}, k={k}")
    L = _dense_laplacian(S)
    shift = 2.0 * float(S.degree.max(initial=0.0)) + 1.0
    values, vectors = np.linalg.eigh(L + shift / S.n)
    values, vectors = values[:k], np.ascontiguousarray(vectors[:, :k])
    return _checked(S, L, values, vectors)


def _assign(X: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    d2 = cdist(X, centers, "sqeuclidean")
    labels = np.argmin(d2, axis=1)
    closest = d2[np.arange(X.shape[0]), labels]
    return labels, float(closest.sum()), closest


def _update(X: np.ndarray, labels: np.ndarray, closest: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    centers = sums / np.maximum(counts, 1)[:, None]
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        dist = closest.copy()
        for j in empty:
            far = int(np.argmax(dist))
            logger.warning("k-means: cluster %d emptied, reseeding at point %d", j, far)
            centers[j] = X[far]
            dist[far] = -1.0
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, float, int]:
    labels, inertia, closest = _assign(X, centers)
    n_iter = 0
    for n_iter in range(1, KMEANS_MAX_ITER + 1):
        centers = _update(X, labels, closest, k)
        labels, new_inertia, closest = _assign(X, centers)
        change = abs(inertia - new_inertia) / max(inertia, np.finfo(float).tiny)
        inertia = new_inertia
        if change < KMEANS_REL_TOL:
            break
    return labels, centers, inertia, n_iter


def kmeans(X: np.ndarray, k: int, n_init: int = 10, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds; the restart with the lowest inertia wins."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected an n×d matrix, got shape {X.shape}")
    if k < 1 or X.shape[0] < k:
        raise PartitionError(f"k-means needs 1 <= k <= n, got k={k}, n={X.shape[0]}")
    if n_init < 1:
        raise PartitionError("n_init must be >= 1")

    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        init, _ = kmeans_plusplus(X, n_clusters=k, random_state=int(child.generate_state(1)[0]))
        labels, centers, inertia, n_iter = _lloyd(X, init, k)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, n_iter)
    labels, centers, inertia, n_iter = best
    return KMeansResult(Partition(labels, k=k), centers, inertia, n_iter)


def spectral_embedding(S: SparseSimilarity, k: int) -> np.ndarray:
    """n×k matrix of the k smoothest eigenvectors orthogonal to the constant vector."""
    return smallest_eigvecs(S, k).eigenvectors


def spectral_clustering(S: SparseSimilarity, k: int, n_init: int = 10, seed: int = 0) -> Partition:
    if k == S.n:
        return Partition(np.arange(S.n), k=k)
    if k == 1:
        return Partition(np.zeros(S.n, dtype=np.int64), k=1)
    embedding = spectral_embedding(S, k)
    result = kmeans(embedding, k, n_init=n_init, seed=seed)
    logger.info("spectral clustering: k=%d, best inertia %.6g after %d iterations", k, result.inertia, result.n_iter)
    return result.partition
