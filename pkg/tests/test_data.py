import json
import struct
from pathlib import Path

import numpy as np
import pytest
from sklearn.neighbors import NearestNeighbors

from prcut.data.loaders import (
    IDX_IMAGE_MAGIC,
    Dataset,
    load_csv,
    load_embeddings,
    load_idx,
    read_labels,
    write_dataset_csv,
    write_embeddings,
    write_idx,
    write_labels,
)
from prcut.data.run_config import (
    RunConfig,
    apply_overrides,
    load_dataset,
    load_run_config,
    run_config_from_dict,
)
from prcut.data.runs import HISTORY_FILE, METRICS_FILE, RUN_CONFIG_FILE, list_runs, load_run
from prcut.data.synthetic import make_synthetic
from prcut.errors import (
    ConfigError,
    CsvFormatError,
    DataFormatError,
    EmbeddingFormatError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    ShapeError,
)

EXAMPLE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "example_run.json"


class TestDataset:
    def test_label_count(self):
        with pytest.raises(ShapeError):
            Dataset(np.zeros((3, 2)), np.array([0, 1]))

    def test_non_finite(self):
        with pytest.raises(DataFormatError):
            Dataset(np.array([[np.inf, 0.0]]))

    def test_head(self):
        data = Dataset(np.arange(10.0).reshape(5, 2), np.arange(5))
        head = data.head(2)
        assert head.n == 2 and head.labels.tolist() == [0, 1]
        assert data.head(None) is data


class TestCsv:
    def test_with_labels(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,4,1")
        data = load_csv(path)
        assert data.features.tolist() == [[1.0, 2.0], [3.0, 4.0]]
        assert data.labels.tolist() == [0, 1]
        assert data.features.dtype == np.float64

    def test_without_labels(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,4,1\n")
        data = load_csv(path, has_labels=False)
        assert data.p == 3 and data.labels is None

    def test_scientific_notation(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1e-3,2,0\n")
        assert load_csv(path).features[0, 0] == 0.001

    def test_short_row(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,4\n5,6,1\n")
        with pytest.raises(CsvFormatError) as info:
            load_csv(path)
        assert info.value.row == 2

    def test_long_row(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,4,1\n5,6,7,8\n")
        with pytest.raises(CsvFormatError) as info:
            load_csv(path)
        assert info.value.row == 3

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,abc,1\n")
        with pytest.raises(CsvFormatError) as info:
            load_csv(path)
        assert info.value.row == 2

    def test_fractional_label(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,0\n3,4,0.5\n")
        with pytest.raises(CsvFormatError) as info:
            load_csv(path)
        assert info.value.row == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("")
        with pytest.raises(CsvFormatError):
            load_csv(path)

    def test_write_is_lossless(self, tmp_path, rng):
        data = Dataset(rng.normal(size=(10, 3)), rng.integers(0, 3, size=10))
        path = tmp_path / "out.csv"
        write_dataset_csv(path, data)
        loaded = load_csv(path)
        assert np.array_equal(loaded.features, data.features)
        assert np.array_equal(loaded.labels, data.labels)


class TestIdx:
    def _write(self, tmp_path, pixels, labels=None):
        images, label_file = tmp_path / "images.idx", tmp_path / "labels.idx"
        write_idx(images, label_file if labels is not None else None, pixels, labels)
        return images, label_file

    def test_magic_constant(self):
        assert IDX_IMAGE_MAGIC == 2051

    def test_round_trip_and_scaling(self, tmp_path):
        pixels = np.zeros((3, 2, 2), dtype=np.uint8)
        pixels[1, 0, 1] = 255
        images, labels = self._write(tmp_path, pixels, [7, 1, 3])
        data = load_idx(images, labels)
        assert data.features.shape == (3, 4)
        assert data.features[1, 1] == 1.0
        assert data.features.max() == 1.0
        assert data.labels.tolist() == [7, 1, 3]

    def test_count_mismatch(self, tmp_path):
        images, labels = self._write(tmp_path, np.zeros((3, 2, 2)), [0, 1])
        with pytest.raises(IdxCountMismatchError):
            load_idx(images, labels)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "images.idx"
        path.write_bytes(struct.pack(">iiii", 2049, 1, 1, 1) + b"\x00")
        with pytest.raises(IdxMagicError):
            load_idx(path)

    def test_truncated_pixels(self, tmp_path):
        images, _ = self._write(tmp_path, np.zeros((2, 3, 3)))
        images.write_bytes(images.read_bytes()[:-1])
        with pytest.raises(IdxTruncatedError):
            load_idx(images)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "images.idx"
        path.write_bytes(struct.pack(">ii", IDX_IMAGE_MAGIC, 1))
        with pytest.raises(IdxTruncatedError):
            load_idx(path)


class TestEmbeddings:
    def test_zero_file(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(b"PRCEMB1\0" + struct.pack("<II", 2, 3) + bytes(4 * 6))
        data = load_embeddings(path)
        assert data.features.shape == (2, 3)
        assert not data.features.any()
        assert data.labels is None

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(b"PRCEMB1\0" + struct.pack("<II", 2, 3) + bytes(4 * 5))
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(b"PRCEMB2\0" + struct.pack("<II", 0, 0))
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(path)

    def test_round_trip_at_single_precision(self, tmp_path, rng):
        data = Dataset(rng.normal(size=(5, 4)), np.array([0, 1, 2, 1, 0]))
        path = tmp_path / "emb.bin"
        write_embeddings(path, data)
        loaded = load_embeddings(path)
        assert np.array_equal(loaded.features, data.features.astype(np.float32).astype(np.float64))
        assert loaded.labels.tolist() == [0, 1, 2, 1, 0]
        assert path.stat().st_size == 16 + 4 * 5 * 4 + 4 * 5


def test_labels_round_trip(tmp_path):
    path = tmp_path / "labels.txt"
    write_labels(path, np.array([2, 0, 1]))
    assert path.read_text() == "2\n0\n1\n"
    assert read_labels(path).tolist() == [2, 0, 1]


class TestSynthetic:
    def test_blobs_are_separable(self):
        data = make_synthetic("blobs", 300, noise=1.0, seed=0, k=3)
        _, idx = NearestNeighbors(n_neighbors=2).fit(data.features).kneighbors(data.features)
        assert np.array_equal(data.labels[idx[:, 1]], data.labels)

    def test_noiseless_moons_lie_on_arcs(self):
        data = make_synthetic("two-moons", 200, noise=0.0)
        x, y = data.features[:, 0], data.features[:, 1]
        outer, inner = data.labels == 0, data.labels == 1
        assert np.allclose(x[outer] ** 2 + y[outer] ** 2, 1.0)
        assert np.allclose((1 - x[inner]) ** 2 + (0.5 - y[inner]) ** 2, 1.0)

    @pytest.mark.parametrize("kind", ["blobs", "two-moons", "rings"])
    def test_same_seed_same_data(self, kind):
        a, b = make_synthetic(kind, 50, seed=3), make_synthetic(kind, 50, seed=3)
        assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)

    def test_high_dimensional_blobs(self):
        data = make_synthetic("blobs", 60, k=4, n_features=8)
        assert data.p == 8 and set(data.labels.tolist()) == {0, 1, 2, 3}

    def test_too_small(self):
        with pytest.raises(ConfigError):
            make_synthetic("blobs", 5)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_synthetic("spirals", 100)


class TestRunConfig:
    def test_example_config_loads(self):
        cfg = load_run_config(EXAMPLE_CONFIG)
        assert cfg.train.k == 2
        assert cfg.train.kernel.k_neighbors == 10
        assert cfg.train.hidden_layers == (128, 128)
        assert cfg.train.weight_norm
        assert cfg.metrics.spectral_baseline

    def test_echo_reproduces_config(self, tmp_path):
        cfg = load_run_config(EXAMPLE_CONFIG)
        path = tmp_path / "echo.json"
        cfg.write(path)
        assert load_run_config(path).to_dict() == cfg.to_dict()

    def test_defaults_are_expanded(self):
        doc = RunConfig().to_dict()
        assert set(doc) == {"dataset", "model", "train", "kernel", "output_dir", "metrics"}
        assert doc["train"]["beta"] == 0.8
        assert doc["kernel"]["kind"] == "knn-adjacency"

    def test_optimizer_follows_model_preset(self):
        assert run_config_from_dict({"model": {"preset": "mlp"}}).train.optimizer == "rmsprop"
        assert run_config_from_dict({}).train.optimizer == "adam"

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            run_config_from_dict({"train": {"learning_rate": 0.1}})
        with pytest.raises(ConfigError):
            run_config_from_dict({"trainer": {}})

    @pytest.mark.parametrize(
        "doc",
        [
            {"train": {"steps": 5.0}},
            {"train": {"normalize_by_w_norm": "false"}},
            {"dataset": {"n": "100"}},
            {"metrics": {"rcut": "yes"}},
            {"kernel": {"k_neighbors": 2.5}},
            {"model": {"hidden": 128.0}},
            {"train": []},
            {"output_dir": 3},
        ],
    )
    def test_mistyped_values_rejected(self, doc):
        with pytest.raises(ConfigError):
            run_config_from_dict(doc)

    def test_error_names_the_section(self):
        with pytest.raises(ConfigError, match=r"\[train\].*steps"):
            run_config_from_dict({"train": {"steps": 5.0}})

    def test_ints_accepted_for_floats(self):
        cfg = run_config_from_dict({"train": {"gamma": 0, "lr": 1}, "dataset": {"noise": 0}})
        assert cfg.train.gamma == 0.0 and cfg.train.lr == 1.0 and cfg.dataset.noise == 0.0

    def test_overrides_accept_grad_mode_alias_and_objective(self):
        cfg = apply_overrides(RunConfig(), {"grad_mode": "paper-literal", "objective": "cross-entropy"})
        assert cfg.train.grad_mode == "row-local" and cfg.train.objective == "cross-entropy"

    def test_invalid_override_value(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), {"k": 1})

    def test_derived_fields_rejected(self):
        with pytest.raises(ConfigError):
            run_config_from_dict({"train": {"weight_norm": True}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_referenced_files_must_exist(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"dataset": {"kind": "csv", "path": str(tmp_path / "nope.csv")}}))
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_overrides(self):
        cfg = apply_overrides(RunConfig(), {"k": 3, "tau": 0.25, "knn_k": 7, "steps": None})
        assert cfg.train.k == 3
        assert cfg.train.kernel.temperature == 0.25 and cfg.train.kernel.k_neighbors == 7
        assert cfg.train.steps == RunConfig().train.steps

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), {"momentum": 0.9})

    def test_load_dataset_with_limit(self):
        cfg = run_config_from_dict({"dataset": {"kind": "synthetic", "synthetic_kind": "rings", "n": 100, "limit": 30}})
        data = load_dataset(cfg.dataset)
        assert data.n == 30 and data.p == 2


class TestRuns:
    def test_list_runs(self, tmp_path):
        for name in ("b", "a"):
            (tmp_path / name).mkdir()
            (tmp_path / name / RUN_CONFIG_FILE).write_text("{}")
        (tmp_path / "empty").mkdir()
        assert [p.name for p in list_runs(tmp_path)] == ["a", "b"]
        assert list_runs(tmp_path / "missing") == []

    def test_load_run_reports_broken_files(self, tmp_path):
        (tmp_path / RUN_CONFIG_FILE).write_text(json.dumps({"train": {"k": 2}}))
        (tmp_path / HISTORY_FILE).write_text('{"step": 1, "lrc": 1.0, "kl": 0.0, "total": 1.0, "w_norm": 2.0, "pbar": [0.5, 0.5]}\n')
        (tmp_path / METRICS_FILE).write_text("{not json")
        run = load_run(tmp_path)
        assert run.config["train"]["k"] == 2
        assert len(run.history) == 1
        assert run.metrics is None
        assert len(run.problems) == 1 and run.problems[0].startswith(METRICS_FILE)
