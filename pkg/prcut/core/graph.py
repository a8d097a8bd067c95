"""
Similarity graphs: storage, k-NN construction, batch kernels and the
deterministic ratio-cut.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
from pydantic import model_validator
from scipy.spatial.distance import cdist
from sklearn.neighbors import BallTree

from prcut.errors import GraphError, KernelError, PartitionError, ShapeError
from prcut.schema import StrictModel

logger = logging.getLogger(__name__)

KERNEL_KINDS = ("knn-adjacency", "exp-cosine", "label-equality")
KNN_METRICS = ("euclidean", "cosine")
KNN_METHODS = ("brute", "tree")

# Rows of the pairwise-distance matrix materialized at once by the brute path
_BRUTE_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class SparseSimilarity:
    """Symmetric nonnegative graph stored as its upper triangle (i < j)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    k_neighbors: int = 0
    metric: str = "none"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == weights.shape):
            raise GraphError("rows, cols and weights must have the same length")
        if self.n < 1:
            raise GraphError(f"graph needs at least one vertex, got n={self.n}")
        if rows.size:
            if rows.min() < 0 or cols.max() >= self.n:
                raise GraphError("edge endpoint out of range")
            if np.any(rows >= cols):
                raise GraphError("entries must satisfy i < j (no self-loops)")
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise GraphError("weights must be finite and nonnegative")
            keys = rows * self.n + cols
            if np.unique(keys).size != keys.size:
                raise GraphError("duplicate edge entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Tuple[int, int, float]],
        k_neighbors: int = 0,
        metric: str = "none",
    ) -> "SparseSimilarity":
        triples = [(int(i), int(j), float(w)) for i, j, w in edges]
        if any(i == j for i, j, _ in triples):
            raise GraphError("self-loops are not allowed (W_ii = 0)")
        rows = np.array([min(i, j) for i, j, _ in triples], dtype=np.int64)
        cols = np.array([max(i, j) for i, j, _ in triples], dtype=np.int64)
        weights = np.array([w for _, _, w in triples], dtype=np.float64)
        return cls(n, rows, cols, weights, k_neighbors, metric)

    @classmethod
    def from_dense(cls, W: np.ndarray, atol: float = 0.0) -> "SparseSimilarity":
        """Build from a dense symmetric matrix; the diagonal is dropped."""
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ShapeError(f"expected a square matrix, got shape {W.shape}")
        if not np.allclose(W, W.T, rtol=0.0, atol=atol):
            raise GraphError("similarity matrix is not symmetric")
        rows, cols = np.triu_indices(W.shape[0], k=1)
        weights = W[rows, cols]
        keep = weights != 0
        return cls(W.shape[0], rows[keep], cols[keep], weights[keep])

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Full symmetric CSR matrix (both directions stored)."""
        data = np.concatenate([self.weights, self.weights])
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        return sp.csr_matrix((data, (r, c)), shape=(self.n, self.n))

    @property
    def num_edges(self) -> int:
        return int(self.weights.size)

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.bincount(self.rows, weights=self.weights, minlength=self.n)
        deg += np.bincount(self.cols, weights=self.weights, minlength=self.n)
        return deg

    @property
    def total_weight(self) -> float:
        """‖W‖₁ = Σ_ij W_ij, each undirected edge counted twice."""
        return float(2.0 * self.weights.sum())

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def block(self, left_idx: np.ndarray, right_idx: np.ndarray) -> np.ndarray:
        """Dense W[left_idx, right_idx]; repeated vertices get 0 since W_ii = 0."""
        return self.matrix[np.asarray(left_idx)][:, np.asarray(right_idx)].toarray()

    def to_networkx(self) -> nx.Graph:
        G = nx.Graph()
        G.add_nodes_from(range(self.n))
        G.add_weighted_edges_from(
            zip(self.rows.tolist(), self.cols.tolist(), self.weights.tolist())
        )
        return G


class KernelConfig(StrictModel):
    kind: str = "knn-adjacency"
    k_neighbors: int = 100
    temperature: float = 0.5
    metric: str = "euclidean"

    @model_validator(mode="after")
    def _check(self) -> "KernelConfig":
        if self.kind not in KERNEL_KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}, expected one of {KERNEL_KINDS}")
        if self.k_neighbors < 1:
            raise KernelError("k_neighbors must be >= 1")
        if not self.temperature > 0:
            raise KernelError("temperature must be > 0")
        if self.metric not in KNN_METRICS:
            raise KernelError(f"unknown metric {self.metric!r}")
        return self


@dataclass(frozen=True, eq=False)
class Partition:
    """Hard clustering: one id in {0..k-1} per vertex."""

    labels: np.ndarray
    k: Optional[int] = None
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise PartitionError("partition needs a non-empty 1-D label array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise PartitionError("cluster ids must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise PartitionError("cluster ids must be nonnegative")
        k = int(labels.max()) + 1 if self.k is None else int(self.k)
        if labels.max() >= k:
            raise PartitionError(f"cluster id {labels.max()} out of range for k={k}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "_sizes", np.bincount(labels, minlength=k))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    def indicator(self) -> sp.csr_matrix:
        """n×k one-hot membership matrix."""
        ones = np.ones(self.n)
        return sp.csr_matrix((ones, (np.arange(self.n), self.labels)), shape=(self.n, self.k))


def _as_features(features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"features must be a 2-D matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        raise GraphError("empty input")
    if not np.all(np.isfinite(X)):
        raise GraphError("features contain non-finite values")
    return X


def unit_rows(X: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; a zero row has no cosine and is an error."""
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise KernelError(f"row {bad} has zero norm, cosine similarity undefined")
    return X / norms[:, None]


def _brute_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    n = X.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _BRUTE_CHUNK):
        stop = min(start + _BRUTE_CHUNK, n)
        D = cdist(X[start:stop], X, metric="euclidean")
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps the smaller index first among equal distances
        out[start:stop] = np.argsort(D, axis=1, kind="stable")[:, :k]
    return out


def _tree_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    n = X.shape[0]
    tree = BallTree(X)
    dist, _ = tree.query(X, k=k + 1)
    # (k+1)-th smallest including the query itself = k-th smallest other point
    radii = dist[:, k] * (1.0 + 1e-9) + 1e-12
    candidates = tree.query_radius(X, r=radii)
    out = np.empty((n, k), dtype=np.int64)
    for i, cand in enumerate(candidates):
        cand = np.sort(cand[cand != i])
        d = cdist(X[i : i + 1], X[cand], metric="euclidean")[0]
        out[i] = cand[np.argsort(d, kind="stable")[:k]]
    return out


def knn_graph(
    features: np.ndarray,
    k_neighbors: int,
    metric: str = "euclidean",
    method: str = "brute",
) -> SparseSimilarity:
    """Unit-weight k-NN graph, symmetrized by union.

    Cosine neighbors are found as euclidean neighbors of the unit-normalized
    rows (same ordering). Distance ties go to the smaller vertex index.
    """
    X = _as_features(features)
    n = X.shape[0]
    if n < 2:
        raise GraphError("k-NN graph needs at least 2 points")
    if not 1 <= k_neighbors < n:
        raise GraphError(f"k_neighbors must be in [1, n-1], got {k_neighbors} for n={n}")
    if metric not in KNN_METRICS:
        raise GraphError(f"unknown metric {metric!r}")
    if method not in KNN_METHODS:
        raise GraphError(f"unknown k-NN method {method!r}")
    if metric == "cosine":
        X = unit_rows(X)

    nbrs = _brute_neighbors(X, k_neighbors) if method == "brute" else _tree_neighbors(X, k_neighbors)
    src = np.repeat(np.arange(n, dtype=np.int64), k_neighbors)
    dst = nbrs.ravel()
    keys = np.unique(np.minimum(src, dst) * n + np.maximum(src, dst))
    rows, cols = np.divmod(keys, n)
    logger.debug("k-NN graph (%s, %s): n=%d, k=%d, %d edges", method, metric, n, k_neighbors, keys.size)
    return SparseSimilarity(n, rows, cols, np.ones(keys.size), k_neighbors, metric)


def _zero_self_pairs(
    W: np.ndarray,
    same_batch: bool,
    left_index: Optional[np.ndarray],
    right_index: Optional[np.ndarray],
) -> np.ndarray:
    if left_index is not None and right_index is not None:
        W[np.asarray(left_index)[:, None] == np.asarray(right_index)[None, :]] = 0.0
    elif same_batch:
        if W.shape[0] != W.shape[1]:
            raise ShapeError("same_batch needs equally sized left and right batches")
        np.fill_diagonal(W, 0.0)
    return W


def kernel_block(
    left: np.ndarray,
    right: np.ndarray,
    cfg: KernelConfig,
    same_batch: bool = False,
    left_index: Optional[np.ndarray] = None,
    right_index: Optional[np.ndarray] = None,
) -> np.ndarray:
    """exp(cos(z_i, z_j) / τ) between two batches.

    Pairs that are the same vertex (diagonal when `same_batch`, or equal
    dataset indices when given) are zeroed.
    """
    if cfg.kind != "exp-cosine":
        raise KernelError(f"kernel_block evaluates exp-cosine kernels, got {cfg.kind!r}")
    L = unit_rows(np.asarray(left, dtype=np.float64))
    R = unit_rows(np.asarray(right, dtype=np.float64))
    if L.shape[1] != R.shape[1]:
        raise ShapeError("left and right batches have different feature widths")
    cos = np.clip(L @ R.T, -1.0, 1.0)
    W = np.exp(cos / cfg.temperature)
    return _zero_self_pairs(W, same_batch, left_index, right_index)


def label_block(
    labels_l: np.ndarray,
    labels_r: np.ndarray,
    same_batch: bool = False,
    left_index: Optional[np.ndarray] = None,
    right_index: Optional[np.ndarray] = None,
) -> np.ndarray:
    """1 where the labels agree, 0 elsewhere (self pairs zeroed)."""
    yl = np.asarray(labels_l).ravel()
    yr = np.asarray(labels_r).ravel()
    W = (yl[:, None] == yr[None, :]).astype(np.float64)
    return _zero_self_pairs(W, same_batch, left_index, right_index)


def laplacian(S: SparseSimilarity) -> sp.csr_matrix:
    """Unnormalized Laplacian L_un = D - W."""
    return (sp.diags(S.degree) - S.matrix).tocsr()


def _check_partition(S: SparseSimilarity, part: Partition) -> None:
    if part.n != S.n:
        raise PartitionError(f"partition has {part.n} labels for a graph of {S.n} vertices")


def cut_masses(S: SparseSimilarity, part: Partition) -> np.ndarray:
    """Per-cluster boundary weight Σ_{i∈C, j∉C} W_ij."""
    _check_partition(S, part)
    li = part.labels[S.rows]
    lj = part.labels[S.cols]
    boundary = li != lj
    w = S.weights[boundary]
    return np.bincount(li[boundary], weights=w, minlength=part.k) + np.bincount(
        lj[boundary], weights=w, minlength=part.k
    )


def ratio_cut(S: SparseSimilarity, part: Partition) -> float:
    """(1/2) Σ_ℓ cut(C_ℓ) / |C_ℓ|."""
    _check_partition(S, part)
    if np.any(part.sizes == 0):
        empty = np.flatnonzero(part.sizes == 0).tolist()
        raise PartitionError(f"empty clusters {empty}")
    return float(0.5 * np.sum(cut_masses(S, part) / part.sizes))


def ratio_cut_trace(S: SparseSimilarity, part: Partition) -> float:
    """(1/2) Tr[Fᵀ L_un F] with F the ratio-assignment matrix."""
    _check_partition(S, part)
    if np.any(part.sizes == 0):
        raise PartitionError("empty clusters")
    F = part.indicator().toarray() / np.sqrt(part.sizes)[None, :]
    return float(0.5 * np.sum(F * (laplacian(S) @ F)))


def write_graph(path: Union[str, Path], S: SparseSimilarity) -> None:
    lines = [f"{S.n} {S.k_neighbors} {S.metric}"]
    lines += [f"{i} {j} {w:.17g}" for i, j, w in zip(S.rows.tolist(), S.cols.tolist(), S.weights.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_graph(path: Union[str, Path]) -> SparseSimilarity:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise GraphError(f"{path}: empty graph file")
    header = text[0].split()
    if len(header) != 3:
        raise GraphError(f"{path}: header must be 'n k_neighbors metric'")
    try:
        n, k_neighbors = int(header[0]), int(header[1])
    except ValueError as exc:
        raise GraphError(f"{path}: bad header {text[0]!r}") from exc
    edges = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphError(f"{path}:{lineno}: expected 'i j w'")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from exc
    return SparseSimilarity.from_edges(n, edges, k_neighbors, header[2])
