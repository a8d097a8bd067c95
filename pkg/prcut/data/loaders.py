"""
Dataset readers and writers: IDX (MNIST-style), CSV and the PRCEMB1
embedding format.
"""
from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from prcut.errors import (
    CsvFormatError,
    DataFormatError,
    EmbeddingFormatError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    ShapeError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IDX_IMAGE_MAGIC = 0x00000803  # unsigned bytes, rank 3
IDX_LABEL_MAGIC = 0x00000801  # unsigned bytes, rank 1
EMBEDDING_MAGIC = b"PRCEMB1\0"


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    source: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ShapeError(f"features must be a non-empty n×p matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataFormatError(f"{self.name}: features contain non-finite values")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels).astype(np.int64).ravel()
            if y.size != X.shape[0]:
                raise ShapeError(f"{self.name}: {y.size} labels for {X.shape[0]} points")
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def head(self, limit: Optional[int]) -> "Dataset":
        if limit is None or limit >= self.n:
            return self
        labels = None if self.labels is None else self.labels[:limit]
        return Dataset(self.features[:limit], labels, self.name, f"{self.source}[:{limit}]")


def _read_be32(data: bytes, offset: int, path: PathLike) -> int:
    if len(data) < offset + 4:
        raise IdxTruncatedError(f"{path}: header cut short at byte {len(data)}")
    return struct.unpack(">i", data[offset : offset + 4])[0]


def _read_idx_images(path: PathLike) -> np.ndarray:
    # Data format (big endian): magic | count | rows | cols | u8 pixels row-wise
    data = Path(path).read_bytes()
    magic = _read_be32(data, 0, path)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxMagicError(f"{path}: magic {magic} is not an IDX image file ({IDX_IMAGE_MAGIC})")
    count, rows, cols = (_read_be32(data, off, path) for off in (4, 8, 12))
    expected = count * rows * cols
    if len(data) - 16 < expected:
        raise IdxTruncatedError(f"{path}: expected {expected} pixel bytes, found {len(data) - 16}")
    if len(data) - 16 > expected:
        raise DataFormatError(f"{path}: {len(data) - 16 - expected} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows * cols)


def _read_idx_labels(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = _read_be32(data, 0, path)
    if magic != IDX_LABEL_MAGIC:
        raise IdxMagicError(f"{path}: magic {magic} is not an IDX label file ({IDX_LABEL_MAGIC})")
    count = _read_be32(data, 4, path)
    if len(data) - 8 < count:
        raise IdxTruncatedError(f"{path}: expected {count} labels, found {len(data) - 8}")
    if len(data) - 8 > count:
        raise DataFormatError(f"{path}: {len(data) - 8 - count} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def load_idx(images_path: PathLike, labels_path: Optional[PathLike] = None) -> Dataset:
    """Uncompressed IDX images (and optional labels); pixels scaled to [0, 1]."""
    pixels = _read_idx_images(images_path)
    labels = None
    if labels_path is not None:
        labels = _read_idx_labels(labels_path)
        if labels.size != pixels.shape[0]:
            raise IdxCountMismatchError(f"{pixels.shape[0]} images but {labels.size} labels")
    logger.info("loaded IDX %s: %d images of %d pixels", images_path, pixels.shape[0], pixels.shape[1])
    return Dataset(pixels / 255.0, labels, Path(images_path).stem, f"idx:{images_path}")


def write_idx(images_path: PathLike, labels_path: Optional[PathLike], pixels: np.ndarray, labels=None) -> None:
    """Write uint8 images of shape (count, rows, cols) and optional uint8 labels."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3:
        raise ShapeError("IDX images must have shape (count, rows, cols)")
    header = struct.pack(">iiii", IDX_IMAGE_MAGIC, *pixels.shape)
    Path(images_path).write_bytes(header + pixels.tobytes())
    if labels_path is not None and labels is not None:
        labels = np.asarray(labels, dtype=np.uint8).ravel()
        Path(labels_path).write_bytes(struct.pack(">ii", IDX_LABEL_MAGIC, labels.size) + labels.tobytes())


_LINE_RE = re.compile(r"line (\d+)")


def _locate_bad_cell(path: PathLike) -> CsvFormatError:
    raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    for row_idx, row in enumerate(raw.itertuples(index=False), start=1):
        for cell in row:
            try:
                float(cell)
            except (TypeError, ValueError):
                return CsvFormatError(f"{path}: row {row_idx}: non-numeric cell {cell!r}", row_idx)
    return CsvFormatError(f"{path}: could not parse numeric data")


def load_csv(path: PathLike, has_labels: bool = True) -> Dataset:
    """Rectangular numeric CSV without a header; labels in the last column when flagged."""
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise CsvFormatError(f"{path}: empty file") from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        row = int(match.group(1)) if match else None
        raise CsvFormatError(f"{path}: ragged row {row}: {exc}", row) from exc
    except ValueError as exc:
        raise _locate_bad_cell(path) from exc

    values = frame.to_numpy()
    missing = np.isnan(values).any(axis=1)
    if missing.any():
        row = int(np.flatnonzero(missing)[0]) + 1
        raise CsvFormatError(f"{path}: row {row} is short or holds an empty/NaN cell", row)
    if has_labels:
        if values.shape[1] < 2:
            raise CsvFormatError(f"{path}: a labelled CSV needs at least two columns")
        y = values[:, -1]
        bad = np.flatnonzero((y != np.round(y)) | (y < 0))
        if bad.size:
            row = int(bad[0]) + 1
            raise CsvFormatError(f"{path}: row {row}: label {y[bad[0]]!r} is not a nonnegative integer", row)
        features, labels = values[:, :-1], y.astype(np.int64)
    else:
        features, labels = values, None
    logger.info("loaded CSV %s: %d×%d, labels=%s", path, features.shape[0], features.shape[1], has_labels)
    return Dataset(features, labels, Path(path).stem, f"csv:{path}")


def write_dataset_csv(path: PathLike, dataset: Dataset) -> None:
    """Features with 17 significant digits (lossless), labels as a trailing integer column."""
    frame = pd.DataFrame(dataset.features)
    if dataset.labels is not None:
        frame[frame.shape[1]] = dataset.labels
    frame.to_csv(path, header=False, index=False, float_format="%.17g", lineterminator="\n")


def load_embeddings(path: PathLike) -> Dataset:
    """PRCEMB1 file: magic, u32 n, u32 p (little endian), n·p float32 rows, optional n u32 labels."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(f"{path}: missing PRCEMB1 header")
    n, p = struct.unpack("<II", data[8:16])
    body = 4 * n * p
    if len(data) == 16 + body:
        labels = None
    elif len(data) == 16 + body + 4 * n:
        labels = np.frombuffer(data, dtype="<u4", count=n, offset=16 + body).astype(np.int64)
    else:
        raise EmbeddingFormatError(
            f"{path}: {len(data)} bytes does not match n={n}, p={p} ({16 + body} or {16 + body + 4 * n} expected)"
        )
    features = np.frombuffer(data, dtype="<f4", count=n * p, offset=16).reshape(n, p).astype(np.float64)
    logger.info("loaded embeddings %s: %d×%d, labels=%s", path, n, p, labels is not None)
    return Dataset(features, labels, Path(path).stem, f"embeddings:{path}")


def write_embeddings(path: PathLike, dataset: Dataset) -> None:
    blob = EMBEDDING_MAGIC + struct.pack("<II", dataset.n, dataset.p)
    blob += np.ascontiguousarray(dataset.features, dtype="<f4").tobytes()
    if dataset.labels is not None:
        blob += np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes()
    Path(path).write_bytes(blob)


def read_labels(path: PathLike) -> np.ndarray:
    """One integer per line (the format `write_labels` produces)."""
    try:
        frame = pd.read_csv(path, header=None, dtype=np.int64)
    except (pd.errors.EmptyDataError, pd.errors.ParserError, ValueError) as exc:
        raise CsvFormatError(f"{path}: expected one integer label per line ({exc})") from exc
    if frame.shape[1] != 1:
        raise CsvFormatError(f"{path}: expected a single column, got {frame.shape[1]}")
    return frame[0].to_numpy()


def write_labels(path: PathLike, labels: np.ndarray) -> None:
    pd.Series(np.asarray(labels, dtype=np.int64)).to_csv(path, header=False, index=False, lineterminator="\n")
