"""
Run configuration: one JSON document describing the dataset, model, kernel,
training hyperparameters and outputs of a `prcut train` run.

Every run writes the resolved document (all defaults filled in) next to its
outputs; loading that echo back reproduces the run.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import Field, model_validator

from prcut import config
from prcut.core.graph import KernelConfig
from prcut.core.trainer import TrainConfig
from prcut.data.loaders import Dataset, load_csv, load_embeddings, load_idx
from prcut.data.synthetic import make_synthetic
from prcut.errors import ConfigError
from prcut.schema import StrictModel

logger = logging.getLogger(__name__)

DATASET_KINDS = ("synthetic", "csv", "idx", "embeddings")
MODEL_PRESETS = ("linear", "mlp")
DEFAULT_OUTPUT_DIR = str(Path(config.RUNS_DIR) / "latest")

# CLI flag name -> (section, field)
OVERRIDE_FIELDS = {
    "k": ("train", "k"),
    "batch_size": ("train", "batch_size"),
    "steps": ("train", "steps"),
    "beta": ("train", "beta"),
    "gamma": ("train", "gamma"),
    "seed": ("train", "seed"),
    "lr": ("train", "lr"),
    "weight_decay": ("train", "weight_decay"),
    "optimizer": ("train", "optimizer"),
    "grad_mode": ("train", "grad_mode"),
    "objective": ("train", "objective"),
    "kernel": ("kernel", "kind"),
    "tau": ("kernel", "temperature"),
    "knn_k": ("kernel", "k_neighbors"),
}

# [train] fields filled from [kernel] and [model]
_DERIVED_TRAIN_FIELDS = ("kernel", "hidden_layers", "weight_norm")


class DatasetSource(StrictModel):
    kind: str = "synthetic"
    path: Optional[str] = None
    labels_path: Optional[str] = None
    has_labels: bool = True
    synthetic_kind: str = "two-moons"
    n: int = 2000
    noise: float = 0.05
    seed: int = 0
    blobs: int = 3
    n_features: int = 2
    limit: Optional[int] = None

    @model_validator(mode="after")
    def _check(self) -> "DatasetSource":
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}, expected one of {DATASET_KINDS}")
        if self.kind != "synthetic" and not self.path:
            raise ConfigError(f"dataset kind {self.kind!r} needs a path")
        return self


class ModelConfig(StrictModel):
    preset: str = "linear"
    hidden: int = 512
    depth: int = 3

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.preset not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset {self.preset!r}, expected one of {MODEL_PRESETS}")
        if self.depth < 2 or self.hidden < 1:
            raise ConfigError("the mlp preset needs depth >= 2 and hidden >= 1")
        return self

    def hidden_layers(self) -> tuple:
        return () if self.preset == "linear" else (self.hidden,) * (self.depth - 1)

    def default_optimizer(self) -> str:
        return "adam" if self.preset == "linear" else "rmsprop"


class MetricToggles(StrictModel):
    supervised: bool = True
    rcut: bool = True
    rcut_knn_k: int = 10
    spectral_baseline: bool = False
    baseline_restarts: int = 5


class RunConfig(StrictModel):
    dataset: DatasetSource = Field(default_factory=DatasetSource)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: str = DEFAULT_OUTPUT_DIR
    metrics: MetricToggles = Field(default_factory=MetricToggles)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dataset": self.dataset.model_dump(),
            "model": self.model.model_dump(),
            "train": self.train.model_dump(exclude=set(_DERIVED_TRAIN_FIELDS)),
            "kernel": self.train.kernel.model_dump(),
            "output_dir": self.output_dir,
            "metrics": self.metrics.model_dump(),
        }

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _section(cls, values: Optional[dict], name: str):
    values = _section_values(values, name)
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def run_config_from_dict(doc: Dict[str, Any]) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(doc) - {"dataset", "model", "train", "kernel", "output_dir", "metrics"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    model = _section(ModelConfig, doc.get("model"), "model")
    kernel = _section(KernelConfig, doc.get("kernel"), "kernel")
    train_values = dict(_section_values(doc.get("train"), "train"))
    train_values.setdefault("optimizer", model.default_optimizer())
    for derived in _DERIVED_TRAIN_FIELDS:
        if derived in train_values:
            raise ConfigError(f"[train] must not set {derived!r}; it comes from [kernel]/[model]")
    train_values.update(kernel=kernel, hidden_layers=model.hidden_layers(), weight_norm=model.preset == "mlp")
    return _section(
        RunConfig,
        dict(
            dataset=_section(DatasetSource, doc.get("dataset"), "dataset"),
            model=model,
            train=_section(TrainConfig, train_values, "train"),
            output_dir=doc.get("output_dir", DEFAULT_OUTPUT_DIR),
            metrics=_section(MetricToggles, doc.get("metrics"), "metrics"),
        ),
        "run",
    )


def _section_values(values, name: str) -> dict:
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ConfigError(f"[{name}] must be a JSON object")
    return values


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = run_config_from_dict(doc)
    check_files(cfg)
    logger.debug("loaded run config %s", path)
    return cfg


def check_files(cfg: RunConfig) -> None:
    for attr in ("path", "labels_path"):
        value = getattr(cfg.dataset, attr)
        if value and not Path(value).is_file():
            raise ConfigError(f"dataset {attr} {value} does not exist")


def apply_overrides(cfg: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Replace fields named by CLI flags; None values are ignored."""
    train_updates: Dict[str, Any] = {}
    kernel_updates: Dict[str, Any] = {}
    for flag, value in overrides.items():
        if value is None:
            continue
        if flag not in OVERRIDE_FIELDS:
            raise ConfigError(f"no run-config field for override {flag!r}")
        section, name = OVERRIDE_FIELDS[flag]
        (train_updates if section == "train" else kernel_updates)[name] = value
    if not train_updates and not kernel_updates:
        return cfg
    if kernel_updates:
        train_updates["kernel"] = cfg.train.kernel.updated(**kernel_updates)
    return cfg.updated(train=cfg.train.updated(**train_updates))


def load_dataset(source: DatasetSource) -> Dataset:
    if source.kind == "synthetic":
        dataset = make_synthetic(
            source.synthetic_kind, source.n, source.noise, source.seed, source.blobs, source.n_features
        )
    elif source.kind == "csv":
        dataset = load_csv(source.path, source.has_labels)
    elif source.kind == "idx":
        dataset = load_idx(source.path, source.labels_path)
    else:
        dataset = load_embeddings(source.path)
    return dataset.head(source.limit)
