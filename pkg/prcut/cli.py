"""
Command-line entry point: `prcut <command> [options]`.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from prcut import __version__, config
from prcut.components.charts import project_2d, projection_frame
from prcut.core.baselines import kmeans, spectral_clustering
from prcut.core.graph import KNN_METHODS, KNN_METRICS, KERNEL_KINDS, SparseSimilarity, knn_graph, read_graph, write_graph
from prcut.core.metrics import MetricsReport, evaluate
from prcut.core.neural_model import OPTIMIZERS, load_checkpoint, save_checkpoint
from prcut.core.objective import GRAD_MODE_ALIASES, GRAD_MODES
from prcut.core.trainer import OBJECTIVES, fit, predict
from prcut.data import runs
from prcut.data.loaders import Dataset, load_csv, load_embeddings, load_idx, read_labels, write_dataset_csv, write_embeddings, write_labels
from prcut.data.run_config import OVERRIDE_FIELDS, RunConfig, apply_overrides, load_dataset, load_run_config
from prcut.data.synthetic import SYNTHETIC_KINDS, make_synthetic
from prcut.errors import ConfigError, NumericalError, TrainingAborted, ValidationError
from prcut.launcher import launch
from prcut.verify import SUITES, run_suites

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 (argparse's default is 2, our numerical-failure code)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def configure_logging(level: str) -> None:
    logging.basicConfig(format="%(asctime)s %(levelname)-7s %(name)s: %(message)s")
    logging.getLogger("prcut").setLevel(level.upper())


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("dataset")
    source = group.add_mutually_exclusive_group()
    source.add_argument("--csv", help="numeric CSV, labels in the last column")
    source.add_argument("--idx", metavar="IMAGES", help="uncompressed IDX image file")
    source.add_argument("--embeddings", help="PRCEMB1 embedding file")
    group.add_argument("--idx-labels", metavar="LABELS", help="IDX label file to go with --idx")
    group.add_argument("--no-labels", action="store_true", help="the CSV has no label column")
    group.add_argument("--limit", type=int, help="keep only the first N points")


def _load_data(args) -> Optional[Dataset]:
    if args.csv:
        dataset = load_csv(args.csv, has_labels=not args.no_labels)
    elif args.idx:
        dataset = load_idx(args.idx, args.idx_labels)
    elif args.embeddings:
        dataset = load_embeddings(args.embeddings)
    else:
        return None
    return dataset.head(args.limit)


def _require_data(args) -> Dataset:
    dataset = _load_data(args)
    if dataset is None:
        raise ConfigError("this command needs a dataset (--csv, --idx or --embeddings)")
    return dataset


def _emit(report: MetricsReport, out: Optional[str] = None) -> None:
    text = report.to_json()
    print(text)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, {flag: getattr(args, flag) for flag in OVERRIDE_FIELDS})
    if args.output:
        cfg = cfg.updated(output_dir=args.output)
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.write(run_dir / runs.RUN_CONFIG_FILE)

    dataset = load_dataset(cfg.dataset)
    kernel = cfg.train.kernel
    graph = None
    if cfg.train.objective == "prcut" and kernel.kind == "knn-adjacency":
        graph = knn_graph(dataset.features, kernel.k_neighbors, kernel.metric)

    try:
        model, history = fit(dataset, cfg.train, graph=graph)
    except TrainingAborted as exc:
        if exc.history is not None:
            exc.history.write_jsonl(run_dir / runs.HISTORY_FILE)
        raise
    history.write_jsonl(run_dir / runs.HISTORY_FILE)
    save_checkpoint(run_dir / runs.CHECKPOINT_FILE, model, len(history))

    part, _ = predict(model, dataset.features)
    write_labels(run_dir / runs.PREDICTIONS_FILE, part.labels)
    projection_frame(project_2d(dataset.features), part.labels, dataset.labels).to_csv(
        run_dir / runs.PROJECTION_FILE, index=False, float_format="%.17g", lineterminator="\n"
    )

    metric_graph = None
    if cfg.metrics.rcut:
        if graph is not None and kernel.k_neighbors == cfg.metrics.rcut_knn_k:
            metric_graph = graph
        else:
            metric_graph = knn_graph(dataset.features, cfg.metrics.rcut_knn_k, kernel.metric)
        write_graph(run_dir / runs.GRAPH_FILE, metric_graph)
    truth = dataset.labels if cfg.metrics.supervised else None
    report = evaluate(truth, part, cfg.train.k, metric_graph)
    (run_dir / runs.METRICS_FILE).write_text(report.to_json() + "\n", encoding="utf-8")

    if cfg.metrics.spectral_baseline:
        sc_graph = metric_graph or knn_graph(dataset.features, cfg.metrics.rcut_knn_k, kernel.metric)
        baseline = spectral_clustering(sc_graph, cfg.train.k, cfg.metrics.baseline_restarts, cfg.train.seed)
        sc_report = evaluate(truth, baseline, cfg.train.k, metric_graph)
        (run_dir / runs.BASELINE_METRICS_FILE).write_text(sc_report.to_json() + "\n", encoding="utf-8")

    logger.info("run written to %s", run_dir)
    print(report.to_json())
    return 0


def _cmd_predict(args) -> int:
    model, step = load_checkpoint(args.checkpoint)
    dataset = _require_data(args)
    part, _ = predict(model, dataset.features)
    logger.info("predicted %d points with a model trained for %d steps", dataset.n, step)
    if args.out:
        write_labels(args.out, part.labels)
    _emit(evaluate(dataset.labels, part, part.k), args.metrics_out)
    return 0


def _graph_for(args, dataset: Optional[Dataset]) -> SparseSimilarity:
    if args.graph:
        return read_graph(args.graph)
    if dataset is None:
        raise ConfigError("give a dataset or --graph")
    return knn_graph(dataset.features, args.knn_k, args.metric, args.method)


def _cmd_spectral(args) -> int:
    dataset = _load_data(args)
    graph = _graph_for(args, dataset)
    part = spectral_clustering(graph, args.k, args.n_init, args.seed)
    if args.out:
        write_labels(args.out, part.labels)
    truth = dataset.labels if dataset is not None else None
    _emit(evaluate(truth, part, args.k, graph), args.metrics_out)
    return 0


def _cmd_kmeans(args) -> int:
    dataset = _require_data(args)
    result = kmeans(dataset.features, args.k, args.n_init, args.seed)
    logger.info("k-means inertia %.6g", result.inertia)
    if args.out:
        write_labels(args.out, result.partition.labels)
    _emit(evaluate(dataset.labels, result.partition, args.k), args.metrics_out)
    return 0


def _cmd_metrics(args) -> int:
    pred = read_labels(args.pred)
    truth = read_labels(args.truth) if args.truth else None
    graph = read_graph(args.graph) if args.graph else None
    k = args.k
    if k is None:
        k = int(max(pred.max(), truth.max() if truth is not None else 0)) + 1
    _emit(evaluate(truth, pred, k, graph), args.out)
    return 0


def _cmd_knn_graph(args) -> int:
    dataset = _require_data(args)
    graph = knn_graph(dataset.features, args.knn_k, args.metric, args.method)
    write_graph(args.out, graph)
    logger.info("wrote %d edges over %d vertices to %s", graph.num_edges, graph.n, args.out)
    return 0


def _cmd_verify(args) -> int:
    results = run_suites(args.seed, tuple(args.suite or ()))
    for result in results:
        print(result.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} suites passed")
    return 0 if passed == len(results) else 2


def _cmd_synth(args) -> int:
    dataset = make_synthetic(args.kind, args.n, args.noise, args.seed, args.blobs, args.features)
    if args.format == "embeddings":
        write_embeddings(args.out, dataset)
    else:
        write_dataset_csv(args.out, dataset)
    logger.info("wrote %s (%d×%d) to %s", dataset.name, dataset.n, dataset.p, args.out)
    return 0


def _cmd_dashboard(args) -> int:
    return launch(args.runs_dir, args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="prcut", description="Probabilistic ratio-cut clustering toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("train", help="train a PRCut model from a run config")
    p.add_argument("--config", help="run config JSON (defaults when omitted)")
    p.add_argument("--output", help="run folder (overrides output_dir)")
    p.add_argument("--k", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--kernel", choices=KERNEL_KINDS)
    p.add_argument("--tau", type=float, help="exp-cosine temperature")
    p.add_argument("--knn-k", type=int, help="neighbors of the k-NN kernel")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--grad-mode", choices=GRAD_MODES + tuple(GRAD_MODE_ALIASES))
    p.add_argument("--objective", choices=OBJECTIVES, help="prcut, or the supervised cross-entropy baseline")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="assign clusters with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_data_args(p)
    p.add_argument("--out", help="write one cluster id per line")
    p.add_argument("--metrics-out", help="also write the metrics JSON here")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("spectral", help="vanilla spectral clustering on a k-NN graph")
    _add_data_args(p)
    p.add_argument("--graph", help="precomputed graph file instead of building one")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--metric", choices=KNN_METRICS, default="euclidean")
    p.add_argument("--method", choices=KNN_METHODS, default="brute")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write one cluster id per line")
    p.add_argument("--metrics-out")
    p.set_defaults(handler=_cmd_spectral)

    p = sub.add_parser("kmeans", help="k-means on the raw features")
    _add_data_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--metrics-out")
    p.set_defaults(handler=_cmd_kmeans)

    p = sub.add_parser("metrics", help="score a clustering against labels and/or a graph")
    p.add_argument("--pred", required=True, help="cluster ids, one per line")
    p.add_argument("--truth", help="class ids, one per line")
    p.add_argument("--graph", help="graph file for the ratio-cut")
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_metrics)

    p = sub.add_parser("knn-graph", help="build and save a k-NN graph")
    _add_data_args(p)
    p.add_argument("--knn-k", type=int, default=config.KNN_NEIGHBORS)
    p.add_argument("--metric", choices=KNN_METRICS, default="euclidean")
    p.add_argument("--method", choices=KNN_METHODS, default="brute")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_knn_graph)

    p = sub.add_parser("verify", help="run the numerical self-check suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", choices=[name for name, _ in SUITES])
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blobs", type=int, default=3, help="number of blobs")
    p.add_argument("--features", type=int, default=2, help="blob dimensionality")
    p.add_argument("--format", choices=("csv", "embeddings"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("dashboard", help="open the Streamlit run browser")
    p.add_argument("--runs-dir", default=config.RUNS_DIR)
    p.add_argument("--port", type=int, default=config.DASHBOARD_PORT)
    p.set_defaults(handler=_cmd_dashboard)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except TrainingAborted as exc:
        logger.error("training aborted: %s", exc)
        return 2
    except ValidationError as exc:
        logger.error("%s", exc)
        return 1
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
