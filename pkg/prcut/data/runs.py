"""
Layout of a run folder and read access for the run browser.

    <runs_dir>/<run>/run_config.json      resolved configuration echo
                     history.jsonl        one loss record per step
                     model.ckpt           trained parameters
                     predictions.txt      one cluster id per point
                     projection.csv       x, y, cluster[, label]
                     metrics.json         MetricsReport
                     baseline_metrics.json  spectral baseline (optional)
                     graph.txt            k-NN graph used for the ratio-cut (optional)
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from prcut.core.graph import SparseSimilarity, read_graph
from prcut.core.trainer import read_history
from prcut.errors import PrcutError

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.json"
HISTORY_FILE = "history.jsonl"
CHECKPOINT_FILE = "model.ckpt"
PREDICTIONS_FILE = "predictions.txt"
PROJECTION_FILE = "projection.csv"
METRICS_FILE = "metrics.json"
BASELINE_METRICS_FILE = "baseline_metrics.json"
GRAPH_FILE = "graph.txt"


@dataclass
class RunArtifacts:
    name: str
    path: Path
    config: Dict = field(default_factory=dict)
    history: List[Dict] = field(default_factory=list)
    metrics: Optional[Dict] = None
    baseline: Optional[Dict] = None
    projection: Optional[pd.DataFrame] = None
    graph: Optional[SparseSimilarity] = None
    problems: List[str] = field(default_factory=list)


def list_runs(runs_dir: Union[str, Path]) -> List[Path]:
    """Sub-folders holding at least a config echo or a history, newest name last."""
    root = Path(runs_dir)
    if not root.is_dir():
        return []
    return sorted(
        p for p in root.iterdir() if p.is_dir() and ((p / RUN_CONFIG_FILE).is_file() or (p / HISTORY_FILE).is_file())
    )


def _read_json(path: Path) -> Optional[Dict]:
    return json.loads(path.read_text(encoding="utf-8")) if path.is_file() else None


def load_run(path: Union[str, Path]) -> RunArtifacts:
    """Read whatever artifacts exist; unreadable files are reported in `problems`, not raised."""
    path = Path(path)
    run = RunArtifacts(name=path.name, path=path)
    loaders = {
        RUN_CONFIG_FILE: lambda p: setattr(run, "config", _read_json(p) or {}),
        HISTORY_FILE: lambda p: setattr(run, "history", read_history(p)),
        METRICS_FILE: lambda p: setattr(run, "metrics", _read_json(p)),
        BASELINE_METRICS_FILE: lambda p: setattr(run, "baseline", _read_json(p)),
        PROJECTION_FILE: lambda p: setattr(run, "projection", pd.read_csv(p)),
        GRAPH_FILE: lambda p: setattr(run, "graph", read_graph(p)),
    }
    for name, load in loaders.items():
        file = path / name
        if not file.is_file():
            continue
        try:
            load(file)
        except (OSError, ValueError, PrcutError) as exc:
            logger.warning("could not read %s: %s", file, exc)
            run.problems.append(f"{name}: {exc}")
    return run
