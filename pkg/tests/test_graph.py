import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halocondense.errors import ParameterError, ParseError, RangeError, ShapeError
from halocondense.graph import (Graph, edge_cut, from_edges, generate_sbm, load_edge_list,
                                partition_graph, write_edge_list)


def path_graph(n=4, d=2):
    return from_edges(n, np.arange(n - 1), np.arange(1, n), np.arange(n * d, dtype=float).reshape(n, d),
                      np.zeros(n, dtype=int))


def two_cliques(size=10):
    src, dst = [], []
    for base in (0, size):
        for i in range(size):
            for j in range(i + 1, size):
                src.append(base + i)
                dst.append(base + j)
    n = 2 * size
    return from_edges(n, src, dst, np.zeros((n, 3)), np.repeat([0, 1], size))


class TestGraph:
    def test_csr_invariants_enforced(self):
        with pytest.raises(ShapeError):
            Graph(np.array([0, 2, 1]), np.array([1]), np.zeros((2, 1)), np.zeros(2, int),
                  *(np.zeros(2, bool),) * 3)
        with pytest.raises(RangeError):
            Graph(np.array([0, 1, 1]), np.array([5]), np.zeros((2, 1)), np.zeros(2, int),
                  *(np.zeros(2, bool),) * 3)

    def test_overlapping_masks_rejected(self):
        m = np.ones(2, bool)
        with pytest.raises(ParameterError):
            Graph(np.array([0, 0, 0]), np.array([], int), np.zeros((2, 1)), np.zeros(2, int), m, m, ~m)

    def test_immutable(self):
        g = path_graph()
        with pytest.raises(ValueError):
            g.features[0, 0] = 1.0

    def test_from_edges_symmetrizes_and_drops_self_loops(self):
        g = from_edges(3, [0, 1, 2], [1, 0, 2], np.zeros((3, 1)), [0, 0, 0])
        assert g.num_edges == 2
        assert g.degrees.tolist() == [1, 1, 0]
        assert g.is_symmetric()


class TestGenerateSbm:
    def test_degenerate_two_cliques(self):
        g = generate_sbm(4, 2, 1.0, 0.0, 2, 0.0, seed=0)
        assert g.num_edges == 4
        assert sorted(g.neighbors(0).tolist()) == [1]
        assert sorted(g.neighbors(2).tolist()) == [3]
        assert np.array_equal(g.features[0], g.features[1])
        assert np.array_equal(g.features[2], g.features[3])

    def test_intra_class_fraction(self):
        g = generate_sbm(200, 4, 0.2, 0.01, 16, 0.1, seed=7)
        src = g.edge_sources()
        intra = np.mean(g.labels[src] == g.labels[g.csr_targets])
        # independent expectation: 4 blocks of 50 -> 4*C(50,2)=4900 intra pairs, 15000 inter pairs
        expected = 0.2 * 4900 / (0.2 * 4900 + 0.01 * 15000)
        assert expected == pytest.approx(0.8673, abs=1e-4)
        assert intra > 0.8
        assert abs(intra - expected) < 0.05

    def test_deterministic(self):
        a = generate_sbm(200, 4, 0.2, 0.01, 16, 0.1, seed=7)
        b = generate_sbm(200, 4, 0.2, 0.01, 16, 0.1, seed=7)
        for name in ("csr_offsets", "csr_targets", "features", "labels", "train_mask", "val_mask", "test_mask"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_properties(self):
        g = generate_sbm(100, 3, 0.3, 0.05, 4, 1.0, seed=1)
        assert g.is_symmetric()
        src = g.edge_sources()
        assert not np.any(src == g.csr_targets)
        assert g.train_mask.sum() == 60 and g.val_mask.sum() == 20 and g.test_mask.sum() == 20
        assert np.all(g.train_mask.astype(int) + g.val_mask + g.test_mask == 1)

    @pytest.mark.parametrize("p_in,p_out", [(0.1, 0.2), (1.5, 0.1), (0.5, -0.1), (0.3, 0.3)])
    def test_invalid_probabilities(self, p_in, p_out):
        with pytest.raises(ParameterError):
            generate_sbm(10, 2, p_in, p_out, 2, 0.1, seed=0)


class TestLoadEdgeList:
    def write(self, tmp_path, edges, feats, labels):
        (tmp_path / "e.txt").write_text(edges)
        (tmp_path / "f.txt").write_text(feats)
        (tmp_path / "l.txt").write_text(labels)
        return tmp_path / "e.txt", tmp_path / "f.txt", tmp_path / "l.txt"

    def test_path_graph(self, tmp_path):
        g = load_edge_list(*self.write(tmp_path, "0 1\n1 2", "1 0\n0 1\n1 1\n", "0\n1\n0\n"))
        assert g.degrees.tolist() == [1, 2, 1]

    def test_duplicate_directions_collapse(self, tmp_path):
        g = load_edge_list(*self.write(tmp_path, "# header\n0 1\n1 0\n", "1\n2\n", "0\n1\n"))
        assert g.num_edges == 2

    def test_row_count_mismatch(self, tmp_path):
        with pytest.raises(ShapeError):
            load_edge_list(*self.write(tmp_path, "0 1\n1 2", "1 0\n0 1\n", "0\n1\n0\n"))
        with pytest.raises(ShapeError):
            load_edge_list(*self.write(tmp_path, "0 1", "1\n2\n", "0\n"))

    def test_malformed_line_reports_line_number(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_edge_list(*self.write(tmp_path, "0 1\n1 x\n", "1\n2\n", "0\n1\n"))
        assert info.value.lineno == 2

    def test_negative_id(self, tmp_path):
        with pytest.raises(RangeError):
            load_edge_list(*self.write(tmp_path, "0 -1\n", "1\n2\n", "0\n1\n"))

    def test_masks_file(self, tmp_path):
        paths = self.write(tmp_path, "0 1\n", "1\n2\n3\n", "0\n1\n0\n")
        (tmp_path / "m.txt").write_text("train\ntest\nval\n")
        g = load_edge_list(*paths, masks_path=tmp_path / "m.txt")
        assert g.train_mask.tolist() == [True, False, False]
        assert g.val_mask.tolist() == [False, False, True]

    def test_write_read_round_trip(self, tmp_path):
        g = generate_sbm(60, 3, 0.3, 0.05, 5, 0.5, seed=3)
        paths = [tmp_path / n for n in ("e", "f", "l", "m")]
        write_edge_list(g, *paths)
        h = load_edge_list(*paths[:3], masks_path=paths[3])
        for name in ("csr_offsets", "csr_targets", "features", "labels", "train_mask", "val_mask", "test_mask"):
            assert np.array_equal(getattr(g, name), getattr(h, name))


class TestPartition:
    def test_hash_path(self):
        p = partition_graph(path_graph(), 2, "hash")
        assert p.owner.tolist() == [0, 1, 0, 1]
        assert p.boundary_nodes[0].tolist() == [0, 2]
        assert p.boundary_nodes[1].tolist() == [1, 3]
        assert p.halo_nodes[0].tolist() == [1, 3]

    @pytest.mark.parametrize("method", ["hash", "bfs-greedy"])
    def test_single_worker_has_no_boundary(self, method):
        p = partition_graph(generate_sbm(50, 2, 0.3, 0.05, 2, 1.0, seed=0), 1, method)
        assert len(p.boundary_nodes[0]) == 0 and len(p.halo_nodes[0]) == 0

    def test_bfs_greedy_two_cliques_zero_cut(self):
        g = two_cliques()
        for seed in range(5):
            p = partition_graph(g, 2, "bfs-greedy", seed)
            # brute-force count of cross-owner edges
            cut = sum(1 for u in range(g.num_nodes) for v in g.neighbors(u) if u < v and p.owner[u] != p.owner[v])
            assert cut == 0 == p.edge_cut(g)

    def test_bfs_greedy_beats_hash_on_clustered_graph(self):
        g = generate_sbm(200, 4, 0.2, 0.005, 2, 1.0, seed=2)
        greedy = partition_graph(g, 4, "bfs-greedy", 0).edge_cut(g)
        hashed = partition_graph(g, 4, "hash").edge_cut(g)
        assert greedy < hashed

    def test_errors(self):
        g = path_graph()
        with pytest.raises(ParameterError):
            partition_graph(g, 5)
        with pytest.raises(ParameterError):
            partition_graph(g, 0)
        with pytest.raises(ParameterError):
            partition_graph(g, 2, "metis")


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 40), p=st.floats(0.05, 0.6), K=st.integers(1, 6), seed=st.integers(0, 1000),
       method=st.sampled_from(["hash", "bfs-greedy"]))
def test_partition_invariants(n, p, K, seed, method):
    K = min(K, n)
    g = generate_sbm(n, 1, p, 0.0, 3, 1.0, seed=seed)
    part = partition_graph(g, K, method, seed)
    cover = np.concatenate(part.local_nodes)
    assert sorted(cover.tolist()) == list(range(n))
    for k in range(K):
        for v in part.local_nodes[k]:
            remote = any(part.owner[u] != k for u in g.neighbors(v))
            assert (v in set(part.boundary_nodes[k].tolist())) == remote
        expected_halo = sorted({int(u) for v in part.local_nodes[k] for u in g.neighbors(v) if part.owner[u] != k})
        assert part.halo_nodes[k].tolist() == expected_halo
        assert np.all(part.owner[part.halo_nodes[k]] == part.halo_owner[k])
    src = g.edge_sources()
    for u, v in zip(src, g.csr_targets):
        if part.owner[u] != part.owner[v]:
            assert u in part.boundary_nodes[part.owner[u]] and v in part.boundary_nodes[part.owner[v]]
    # reassembling per-worker feature slices reproduces the full matrix
    rebuilt = np.empty_like(g.features)
    for k in range(K):
        rebuilt[part.local_nodes[k]] = g.features[part.local_nodes[k]]
    assert np.array_equal(rebuilt, g.features)
    assert part.edge_cut(g) == edge_cut(g, part.owner)
    again = partition_graph(g, K, method, seed)
    assert np.array_equal(part.owner, again.owner)
