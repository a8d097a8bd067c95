"""
Online PRCut training loop.

Each step draws two independent batches, evaluates the similarity block
between them, pushes both through the network, refreshes the moving-average
cluster masses and injects ∂L/∂P (ratio-cut bound plus γ·KL) into backprop.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import Field, field_validator, model_validator

from prcut import config
from prcut.core.graph import KernelConfig, Partition, SparseSimilarity, kernel_block, knn_graph, label_block
from prcut.core.neural_model import (
    OPTIMIZERS,
    MlpModel,
    MlpSpec,
    OptimizerState,
    backward,
    forward,
    init_mlp,
    optimizer_step,
)
from prcut.core.objective import (
    GRAD_MODE_ALIASES,
    GRAD_MODES,
    AssignmentMatrix,
    ClusterMassState,
    LossBreakdown,
    kl_regularizer,
    lrc_grad,
    lrc_loss,
    update_pbar,
)
from prcut.errors import CollapseError, ConfigError, NonFiniteError, ShapeError, TrainingAborted
from prcut.schema import StrictModel

logger = logging.getLogger(__name__)

SimilarityFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_PREDICT_CHUNK = 4096

OBJECTIVES = ("prcut", "cross-entropy")


class TrainConfig(StrictModel):
    k: int = 2
    batch_size: int = config.BATCH_SIZE
    steps: int = config.STEPS
    beta: float = config.BETA
    gamma: float = config.GAMMA
    kernel: KernelConfig = Field(default_factory=lambda: KernelConfig(k_neighbors=config.KNN_NEIGHBORS))
    optimizer: str = "adam"
    lr: float = config.LEARNING_RATE
    weight_decay: float = config.WEIGHT_DECAY
    seed: int = 0
    normalize_by_w_norm: bool = True
    grad_mode: str = "analytic"
    hidden_layers: Tuple[int, ...] = Field(default=(), strict=False)
    weight_norm: bool = False
    early_stop: bool = False
    log_every: int = config.LOG_EVERY
    objective: str = "prcut"

    @field_validator("grad_mode", mode="before")
    @classmethod
    def _canonical_grad_mode(cls, value):
        return GRAD_MODE_ALIASES.get(value, value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (0, 1]")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_mode not in GRAD_MODES:
            raise ConfigError(f"unknown gradient mode {self.grad_mode!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}, expected one of {OBJECTIVES}")
        return self

    def model_spec(self, p: int) -> MlpSpec:
        return MlpSpec((p,) + self.hidden_layers + (self.k,), weight_norm_first_last=self.weight_norm)


@dataclass
class TrainHistory:
    records: List[LossBreakdown] = field(default_factory=list)
    wall_clock: List[float] = field(default_factory=list)
    final_pbar: Optional[np.ndarray] = None
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def write_jsonl(self, path: Union[str, Path]) -> None:
        """One JSON object per step; timing is left out so equal runs give equal files."""
        lines = [json.dumps(r.to_record()) for r in self.records]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_history(path: Union[str, Path]) -> List[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _similarity_fn(dataset, cfg: TrainConfig, graph: Optional[SparseSimilarity]) -> SimilarityFn:
    X = np.asarray(dataset.features, dtype=np.float64)
    kind = cfg.kernel.kind
    if kind == "knn-adjacency":
        if graph is None:
            graph = knn_graph(X, cfg.kernel.k_neighbors, cfg.kernel.metric)
        elif graph.n != X.shape[0]:
            raise ShapeError(f"graph has {graph.n} vertices, dataset has {X.shape[0]} points")
        return graph.block
    if kind == "exp-cosine":
        return lambda left, right: kernel_block(X[left], X[right], cfg.kernel, left_index=left, right_index=right)
    if dataset.labels is None:
        raise ConfigError("the label-equality kernel needs a labelled dataset")
    y = np.asarray(dataset.labels)
    return lambda left, right: label_block(y[left], y[right], left_index=left, right_index=right)


def _plateaued(history: TrainHistory) -> bool:
    w = config.PLATEAU_WINDOW
    if len(history) < 2 * w:
        return False
    totals = history.totals()
    prev, cur = totals[-2 * w : -w].mean(), totals[-w:].mean()
    return abs(prev - cur) / max(abs(prev), 1e-12) < config.PLATEAU_REL_TOL


def train(
    dataset,
    cfg: TrainConfig,
    model: Optional[MlpModel] = None,
    graph: Optional[SparseSimilarity] = None,
) -> Tuple[MlpModel, TrainHistory]:
    """Run `cfg.steps` PRCut steps; raises TrainingAborted (with the history so far) on collapse."""
    X = np.asarray(dataset.features, dtype=np.float64)
    n, p = X.shape
    b, k = cfg.batch_size, cfg.k
    if n < 2 * b:
        raise ConfigError(f"dataset of {n} points is too small for batch size {b} (needs >= {2 * b})")
    similarity = _similarity_fn(dataset, cfg, graph)
    if model is None:
        model = init_mlp(cfg.model_spec(p), cfg.seed)
    if model.spec.layer_widths[0] != p or model.spec.layer_widths[-1] != k:
        raise ShapeError(f"model maps {model.spec.layer_widths[0]} -> {model.spec.layer_widths[-1]}, need {p} -> {k}")

    opt = OptimizerState(cfg.optimizer, cfg.lr, cfg.weight_decay)
    state = ClusterMassState.uniform(k, cfg.beta)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    logger.info("training: n=%d, p=%d, k=%d, b=%d, steps=%d, kernel=%s", n, p, k, b, cfg.steps, cfg.kernel.kind)

    for t in range(1, cfg.steps + 1):
        tic = time.perf_counter()
        left = rng.choice(n, size=b, replace=False)
        right = rng.choice(n, size=b, replace=False)
        W = similarity(left, right)
        try:
            P_l, cache_l = forward(model, X[left])
            P_r, cache_r = forward(model, X[right])
            state = update_pbar(state, 0.5 * (P_l.mean(axis=0) + P_r.mean(axis=0)))

            lrc = lrc_loss(W, P_l, P_r, state.pbar, cfg.normalize_by_w_norm)
            dP_l, dP_r = lrc_grad(W, P_l, P_r, state.pbar, b, cfg.grad_mode, cfg.normalize_by_w_norm)
            kl, kl_grad = kl_regularizer(np.vstack([P_l, P_r]).mean(axis=0), k)
            dP_l = dP_l + cfg.gamma * kl_grad / (2 * b)
            dP_r = dP_r + cfg.gamma * kl_grad / (2 * b)
            total = lrc + cfg.gamma * kl
            if not np.isfinite(total):
                raise NonFiniteError(f"non-finite loss {total}")

            grads = backward(model, cache_l, dP_l)
            for name, g in backward(model, cache_r, dP_r).items():
                grads[name] = grads[name] + g
            optimizer_step(opt, model, grads)
        except (CollapseError, NonFiniteError) as exc:
            history.final_pbar = state.pbar
            logger.error("training aborted at step %d: %s", t, exc)
            raise TrainingAborted(f"step {t}: {exc}", history, exc) from exc

        history.records.append(
            LossBreakdown(t, float(lrc), float(kl), float(total), float(W.sum()), tuple(state.pbar.tolist()))
        )
        history.wall_clock.append(time.perf_counter() - tic)
        if cfg.log_every and t % cfg.log_every == 0:
            logger.info(
                "step %d: lrc=%.6g kl=%.6g total=%.6g pbar=%s",
                t, lrc, kl, total, np.array2string(state.pbar, precision=3),
            )
        if cfg.early_stop and _plateaued(history):
            logger.info("loss plateaued, stopping at step %d", t)
            history.stopped_early = True
            break

    history.final_pbar = state.pbar
    return model, history


def _class_indices(labels: np.ndarray, k: int) -> np.ndarray:
    classes, index = np.unique(np.asarray(labels), return_inverse=True)
    if classes.size > k:
        raise ConfigError(f"{classes.size} classes do not fit a model with k={k} outputs")
    return index


def train_supervised(dataset, cfg: TrainConfig, model: Optional[MlpModel] = None) -> Tuple[MlpModel, TrainHistory]:
    """Cross-entropy baseline on the labels, same network, optimizer and batching as `train`.

    One batch of `cfg.batch_size` points per step. History records keep the
    cross-entropy in `total`, with `lrc` and `kl` at 0 and the batch mean of
    the predictions as `pbar`.
    """
    X = np.asarray(dataset.features, dtype=np.float64)
    n, p = X.shape
    b, k = cfg.batch_size, cfg.k
    if dataset.labels is None:
        raise ConfigError("cross-entropy training needs a labelled dataset")
    if n < b:
        raise ConfigError(f"dataset of {n} points is too small for batch size {b}")
    y = _class_indices(dataset.labels, k)
    if model is None:
        model = init_mlp(cfg.model_spec(p), cfg.seed)
    if model.spec.layer_widths[0] != p or model.spec.layer_widths[-1] != k:
        raise ShapeError(f"model maps {model.spec.layer_widths[0]} -> {model.spec.layer_widths[-1]}, need {p} -> {k}")

    opt = OptimizerState(cfg.optimizer, cfg.lr, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    logger.info("cross-entropy training: n=%d, p=%d, k=%d, b=%d, steps=%d", n, p, k, b, cfg.steps)

    for t in range(1, cfg.steps + 1):
        tic = time.perf_counter()
        batch = rng.choice(n, size=b, replace=False)
        try:
            P, cache = forward(model, X[batch])
            picked = np.maximum(P[np.arange(b), y[batch]], np.finfo(np.float64).tiny)
            ce = -float(np.mean(np.log(picked)))
            if not np.isfinite(ce):
                raise NonFiniteError(f"non-finite loss {ce}")
            dP = np.zeros_like(P)
            dP[np.arange(b), y[batch]] = -1.0 / (b * picked)
            optimizer_step(opt, model, backward(model, cache, dP))
        except NonFiniteError as exc:
            if history.records:
                history.final_pbar = np.array(history.records[-1].pbar)
            logger.error("cross-entropy training aborted at step %d: %s", t, exc)
            raise TrainingAborted(f"step {t}: {exc}", history, exc) from exc

        pbar = P.mean(axis=0)
        history.records.append(LossBreakdown(t, 0.0, 0.0, ce, 0.0, tuple(pbar.tolist())))
        history.wall_clock.append(time.perf_counter() - tic)
        if cfg.log_every and t % cfg.log_every == 0:
            logger.info("step %d: cross-entropy=%.6g", t, ce)
        if cfg.early_stop and _plateaued(history):
            logger.info("loss plateaued, stopping at step %d", t)
            history.stopped_early = True
            break

    history.final_pbar = pbar
    return model, history


def fit(
    dataset,
    cfg: TrainConfig,
    model: Optional[MlpModel] = None,
    graph: Optional[SparseSimilarity] = None,
) -> Tuple[MlpModel, TrainHistory]:
    """Dispatch on `cfg.objective`; the graph only matters for the PRCut objective."""
    if cfg.objective == "cross-entropy":
        return train_supervised(dataset, cfg, model)
    return train(dataset, cfg, model, graph)


def predict(model: MlpModel, features: np.ndarray) -> Tuple[Partition, AssignmentMatrix]:
    """Row-wise argmax of the assignment probabilities (ties go to the smaller id)."""
    X = np.asarray(features, dtype=np.float64)
    chunks = [forward(model, X[i : i + _PREDICT_CHUNK])[0] for i in range(0, X.shape[0], _PREDICT_CHUNK)]
    P = np.vstack(chunks).astype(np.float64)
    P = P / P.sum(axis=1, keepdims=True)
    return Partition(np.argmax(P, axis=1), k=model.spec.layer_widths[-1]), AssignmentMatrix(P)
