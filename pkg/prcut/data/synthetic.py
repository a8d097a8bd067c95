"""Desk-scale synthetic datasets with ground-truth labels."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.datasets import make_blobs, make_circles, make_moons

from prcut.data.loaders import Dataset
from prcut.errors import ConfigError

logger = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("blobs", "two-moons", "rings")
BLOB_SEPARATION = 10.0


def blob_centers(k: int, n_features: int) -> np.ndarray:
    """10·e_ℓ when there are enough dimensions, otherwise k points on a circle of radius 10."""
    if n_features >= k:
        return BLOB_SEPARATION * np.eye(k, n_features)
    if n_features < 2:
        raise ConfigError(f"{k} blobs need at least 2 feature dimensions")
    angles = 2.0 * np.pi * np.arange(k) / k
    centers = np.zeros((k, n_features))
    centers[:, 0] = BLOB_SEPARATION * np.cos(angles)
    centers[:, 1] = BLOB_SEPARATION * np.sin(angles)
    return centers


def make_synthetic(
    kind: str,
    n: int,
    noise: float = 0.05,
    seed: int = 0,
    k: int = 3,
    n_features: int = 2,
) -> Dataset:
    """`k` and `n_features` only apply to blobs; moons and rings are two 2-D classes."""
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}, expected one of {SYNTHETIC_KINDS}")
    if n < 10:
        raise ConfigError("synthetic datasets need n >= 10")
    if noise < 0:
        raise ConfigError("noise must be >= 0")

    if kind == "blobs":
        X, y = make_blobs(
            n_samples=n, centers=blob_centers(k, n_features), cluster_std=noise, random_state=seed
        )
    elif kind == "two-moons":
        X, y = make_moons(n_samples=n, noise=noise or None, random_state=seed)
    else:
        X, y = make_circles(n_samples=n, noise=noise or None, factor=0.5, random_state=seed)
    logger.info("generated %s: n=%d, noise=%g, seed=%d", kind, n, noise, seed)
    return Dataset(X, y, f"{kind}-{n}", f"synthetic:{kind}:n={n}:noise={noise}:seed={seed}")
