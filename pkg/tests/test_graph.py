import numpy as np
import pytest
from sklearn.neighbors import NearestNeighbors

from prcut.core.graph import (
    KernelConfig,
    Partition,
    SparseSimilarity,
    cut_masses,
    kernel_block,
    knn_graph,
    label_block,
    laplacian,
    ratio_cut,
    ratio_cut_trace,
    read_graph,
    write_graph,
)
from prcut.errors import ConfigError, GraphError, KernelError, PartitionError


def edge_set(S):
    return set(zip(S.rows.tolist(), S.cols.tolist()))


class TestSparseSimilarity:
    def test_rejects_self_loops(self):
        with pytest.raises(GraphError):
            SparseSimilarity.from_edges(3, [(1, 1, 1.0)])

    def test_rejects_negative_weights(self):
        with pytest.raises(GraphError):
            SparseSimilarity.from_edges(3, [(0, 1, -1.0)])

    def test_rejects_duplicate_edges(self):
        with pytest.raises(GraphError):
            SparseSimilarity.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])

    def test_from_dense_requires_symmetry(self):
        with pytest.raises(GraphError):
            SparseSimilarity.from_dense(np.array([[0.0, 1.0], [2.0, 0.0]]))

    def test_matrix_is_symmetric_with_zero_diagonal(self, triangle):
        W = triangle.dense()
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 0)
        assert triangle.total_weight == 6.0
        assert triangle.degree.tolist() == [2.0, 2.0, 2.0]

    def test_block_gives_zero_on_repeated_vertices(self, path3):
        block = path3.block(np.array([0, 1, 1]), np.array([1, 1, 2]))
        assert block.tolist() == [[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]

    def test_to_networkx(self, two_cliques):
        G = two_cliques.to_networkx()
        assert G.number_of_nodes() == 8
        assert G.number_of_edges() == 12


class TestKnnGraph:
    def test_points_on_a_line(self):
        S = knn_graph(np.array([[0.0], [1.0], [10.0]]), 1)
        assert edge_set(S) == {(0, 1), (1, 2)}
        assert np.all(S.weights == 1.0)

    def test_symmetric_zero_diagonal(self, rng):
        S = knn_graph(rng.normal(size=(40, 3)), 4)
        W = S.dense()
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 0)
        # union symmetrization: every vertex keeps at least its own k neighbors
        assert np.all((W > 0).sum(axis=1) >= 4)

    def test_separated_blobs_have_no_cross_edges(self, rng):
        X = np.vstack([rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + 100.0])
        S = knn_graph(X, 5)
        assert not np.any((S.rows < 50) & (S.cols >= 50))

    def test_matches_sklearn_neighbors(self, rng):
        X = rng.normal(size=(60, 4))
        S = knn_graph(X, 3)
        _, idx = NearestNeighbors(n_neighbors=4).fit(X).kneighbors(X)
        expected = {(min(i, j), max(i, j)) for i in range(60) for j in idx[i, 1:]}
        assert edge_set(S) == expected

    @pytest.mark.parametrize("metric", ["euclidean", "cosine"])
    def test_tree_matches_brute(self, rng, metric):
        X = rng.normal(size=(80, 3))
        assert edge_set(knn_graph(X, 6, metric, "tree")) == edge_set(knn_graph(X, 6, metric, "brute"))

    def test_tree_matches_brute_with_ties(self):
        grid = np.array([[i, j] for i in range(6) for j in range(6)], dtype=float)
        X = np.vstack([grid, grid[:5]])
        assert edge_set(knn_graph(X, 4, method="tree")) == edge_set(knn_graph(X, 4, method="brute"))

    def test_permutation_invariance(self, rng):
        X = rng.normal(size=(30, 2))
        perm = rng.permutation(30)
        S = knn_graph(X, 3)
        Sp = knn_graph(X[perm], 3)
        relabeled = {tuple(sorted((int(perm[i]), int(perm[j])))) for i, j in edge_set(Sp)}
        assert relabeled == edge_set(S)

    @pytest.mark.parametrize("k", [0, 3])
    def test_k_out_of_range(self, k):
        with pytest.raises(GraphError):
            knn_graph(np.zeros((3, 2)), k)

    def test_empty_input(self):
        with pytest.raises(GraphError):
            knn_graph(np.zeros((0, 2)), 1)


class TestKernelBlock:
    def test_identical_unit_vectors(self):
        cfg = KernelConfig(kind="exp-cosine", temperature=1.0)
        W = kernel_block(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), cfg)
        assert W[0, 0] == pytest.approx(2.718281828, abs=1e-9)

    def test_orthogonal_vectors(self):
        cfg = KernelConfig(kind="exp-cosine", temperature=1.0)
        W = kernel_block(np.array([[1.0, 0.0]]), np.array([[0.0, 3.0]]), cfg)
        assert W[0, 0] == pytest.approx(1.0)

    def test_temperature(self):
        cfg = KernelConfig(kind="exp-cosine", temperature=0.5)
        W = kernel_block(np.array([[1.0, 0.0]]), np.array([[0.8, 0.6]]), cfg)
        assert W[0, 0] == pytest.approx(4.953032, abs=1e-6)

    def test_transpose_symmetry(self, rng):
        cfg = KernelConfig(kind="exp-cosine")
        A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        assert np.allclose(kernel_block(A, B, cfg), kernel_block(B, A, cfg).T)

    def test_same_batch_zeroes_diagonal(self, rng):
        cfg = KernelConfig(kind="exp-cosine")
        A = rng.normal(size=(4, 3))
        assert np.all(np.diag(kernel_block(A, A, cfg, same_batch=True)) == 0)

    def test_shared_indices_are_zeroed(self, rng):
        cfg = KernelConfig(kind="exp-cosine")
        X = rng.normal(size=(6, 2))
        left, right = np.array([0, 1, 2]), np.array([2, 3, 0])
        W = kernel_block(X[left], X[right], cfg, left_index=left, right_index=right)
        assert W[0, 2] == 0 and W[2, 0] == 0
        assert np.count_nonzero(W) == 7

    def test_zero_row_rejected(self):
        with pytest.raises(KernelError):
            kernel_block(np.zeros((1, 2)), np.ones((1, 2)), KernelConfig(kind="exp-cosine"))

    def test_wrong_kind(self):
        with pytest.raises(KernelError):
            kernel_block(np.ones((1, 2)), np.ones((1, 2)), KernelConfig())

    @pytest.mark.parametrize("values", [dict(kind="gaussian"), dict(k_neighbors=0), dict(temperature=0.0)])
    def test_config_ranges(self, values):
        with pytest.raises(KernelError):
            KernelConfig(**values)

    @pytest.mark.parametrize("values", [dict(k_neighbors="5"), dict(k_neighbors=5.0), dict(sigma=1.0)])
    def test_config_types_and_keys(self, values):
        with pytest.raises(ConfigError):
            KernelConfig(**values)


class TestLabelBlock:
    def test_same_batch(self):
        assert label_block([0, 1], [0, 1], same_batch=True).tolist() == [[0, 0], [0, 0]]

    def test_swapped(self):
        assert label_block([0, 1], [1, 0]).tolist() == [[0, 1], [1, 0]]

    def test_all_equal(self):
        W = label_block([3, 3, 3], [3, 3, 3], same_batch=True)
        assert np.array_equal(W, np.ones((3, 3)) - np.eye(3))


class TestRatioCut:
    def test_path(self, path3):
        assert ratio_cut(path3, Partition(np.array([0, 1, 1]))) == pytest.approx(0.75)

    def test_triangle(self, triangle):
        assert ratio_cut(triangle, Partition(np.array([0, 0, 1]))) == pytest.approx(1.5)

    def test_single_cluster(self, triangle):
        assert ratio_cut(triangle, Partition(np.zeros(3, dtype=int))) == 0.0

    def test_empty_cluster(self, triangle):
        with pytest.raises(PartitionError):
            ratio_cut(triangle, Partition(np.array([0, 0, 2])))

    def test_cut_masses(self, path3):
        assert cut_masses(path3, Partition(np.array([0, 1, 1]))).tolist() == [1.0, 1.0]

    def test_summation_and_trace_forms_agree(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 13))
            W = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
            W = np.triu(W, 1)
            S = SparseSimilarity.from_dense(W + W.T)
            k = int(rng.integers(1, n + 1))
            labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
            part = Partition(rng.permutation(labels), k=k)
            assert ratio_cut(S, part) == pytest.approx(ratio_cut_trace(S, part), abs=1e-10)

    def test_laplacian_rows_sum_to_zero(self, two_cliques):
        L = laplacian(two_cliques).toarray()
        assert np.allclose(L.sum(axis=1), 0.0)
        assert np.allclose(L, L.T)


def test_graph_file_round_trip(tmp_path, rng):
    S = knn_graph(rng.normal(size=(20, 2)), 3)
    path = tmp_path / "graph.txt"
    write_graph(path, S)
    loaded = read_graph(path)
    assert loaded.n == 20 and loaded.k_neighbors == 3 and loaded.metric == "euclidean"
    assert edge_set(loaded) == edge_set(S)
    assert path.read_text().splitlines()[0] == "20 3 euclidean"


def test_read_graph_rejects_bad_lines(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("3 1 euclidean\n0 1\n")
    with pytest.raises(GraphError):
        read_graph(path)
