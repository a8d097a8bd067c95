"""
Agreement metrics between ground-truth classes and predicted clusters,
plus the ratio-cut of a clustering on the raw graph.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from prcut.core.graph import Partition, SparseSimilarity, ratio_cut
from prcut.errors import PartitionError, ShapeError

logger = logging.getLogger(__name__)

LabelsLike = Union[Partition, np.ndarray, List[int]]


@dataclass
class MetricsReport:
    n: int
    k: int
    acc: Optional[float] = None
    nmi: Optional[float] = None
    ari: Optional[float] = None
    rcut: Optional[float] = None
    degenerate_flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _labels(values: LabelsLike) -> np.ndarray:
    if isinstance(values, Partition):
        return values.labels
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise PartitionError("labels must be integers")
    return arr.astype(np.int64)


def _pair(y: LabelsLike, c: LabelsLike) -> Tuple[np.ndarray, np.ndarray]:
    y, c = _labels(y), _labels(c)
    if y.size != c.size:
        raise ShapeError(f"label vectors differ in length: {y.size} vs {c.size}")
    if y.size == 0:
        raise ShapeError("empty label vectors")
    return y, c


def contingency(y: LabelsLike, c: LabelsLike, k: Optional[int] = None) -> np.ndarray:
    """k×k counts: rows are classes, columns are clusters."""
    y, c = _pair(y, c)
    if min(y.min(), c.min()) < 0:
        raise PartitionError("ids must be nonnegative")
    size = int(max(y.max(), c.max())) + 1 if k is None else int(k)
    if y.max() >= size or c.max() >= size:
        raise PartitionError(f"ids must be < k={size}")
    return np.bincount(y * size + c, minlength=size * size).reshape(size, size)


def unsupervised_accuracy(y: LabelsLike, c: LabelsLike, k: int) -> float:
    """Best accuracy over cluster-to-class matchings (Hungarian algorithm)."""
    table = contingency(y, c, k)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def nmi(y: LabelsLike, c: LabelsLike) -> float:
    """I(y, c) / max(H(y), H(c)), natural logs; 1 when both are constant, 0 when only one is."""
    y, c = _pair(y, c)
    return float(normalized_mutual_info_score(y, c, average_method="max"))


def ari(y: LabelsLike, c: LabelsLike) -> float:
    y, c = _pair(y, c)
    return float(adjusted_rand_score(y, c))


def rcut_with_flags(S: SparseSimilarity, c: LabelsLike) -> Tuple[float, List[str]]:
    labels = _labels(c)
    if labels.size != S.n:
        raise ShapeError(f"{labels.size} labels for a graph of {S.n} vertices")
    flags: List[str] = []
    used, compact = np.unique(labels, return_inverse=True)
    k = c.k if isinstance(c, Partition) else int(labels.max()) + 1
    if used.size < k:
        logger.warning("dropping %d empty clusters before the ratio-cut", k - used.size)
        flags.append("empty-clusters")
    if used.size == 1:
        logger.warning("all vertices share one cluster; ratio-cut is 0")
        flags.append("single-cluster")
        return 0.0, flags
    return ratio_cut(S, Partition(compact, k=int(used.size))), flags


def rcut_metric(S: SparseSimilarity, c: LabelsLike) -> float:
    return rcut_with_flags(S, c)[0]


def evaluate(
    y: Optional[LabelsLike],
    c: LabelsLike,
    k: int,
    graph: Optional[SparseSimilarity] = None,
) -> MetricsReport:
    labels = _labels(c)
    report = MetricsReport(n=int(labels.size), k=int(k))
    if y is not None:
        truth, labels = _pair(y, labels)
        report.acc = unsupervised_accuracy(truth, labels, k)
        report.nmi = nmi(truth, labels)
        report.ari = ari(truth, labels)
        if np.unique(truth).size == 1:
            report.degenerate_flags.append("constant-classes")
        if np.unique(labels).size == 1:
            report.degenerate_flags.append("constant-clusters")
    if graph is not None:
        report.rcut, flags = rcut_with_flags(graph, Partition(labels, k=k))
        report.degenerate_flags.extend(flags)
    return report
