import numpy as np
import pytest

import cpmetric.data as data
from cpmetric.cpnet import CPNet, CPTable, Variable, enumerate_cpnets
from cpmetric.encoding import (
    ENCODING_VERSION,
    adjacency_matrix,
    cpt_matrix,
    encode_pair,
    feature_dims,
    net_features,
    normalized_laplacian,
    read_records,
    record_width,
    split_features,
    write_records,
)

from conftest import make_fig1_net, make_independent_pair_net, make_single_net


class TestAdjacency:
    def test_fig1(self, fig1_net):
        adj = adjacency_matrix(fig1_net)
        expected = np.zeros((4, 4), dtype=np.int8)
        expected[0, 2] = expected[1, 2] = expected[2, 3] = 1
        assert np.array_equal(adj, expected)

    def test_edgeless(self):
        assert not adjacency_matrix(make_independent_pair_net()).any()

    def test_chain(self):
        net = CPNet(
            (Variable(0, "A", ("a", "-a")),
             Variable(1, "B", ("b", "-b")),
             Variable(2, "C", ("c", "-c"))),
            (CPTable(0, (), (0,)),
             CPTable(1, (0,), (0, 1)),
             CPTable(2, (1,), (0, 1))),
        )
        adj = adjacency_matrix(net)
        assert adj[0, 1] == 1 and adj[1, 2] == 1 and adj.sum() == 2


class TestLaplacian:
    def test_edgeless_is_zero(self):
        net = CPNet(
            tuple(Variable(i, f"V{i}", ("0", "1")) for i in range(3)),
            tuple(CPTable(i, (), (0,)) for i in range(3)),
        )
        lap = normalized_laplacian(net)
        assert np.array_equal(lap, np.zeros((3, 3)))
        assert not np.signbit(lap).any()

    def test_single_edge(self):
        net = CPNet(
            (Variable(0, "A", ("a", "-a")), Variable(1, "B", ("b", "-b"))),
            (CPTable(0, (), (0,)), CPTable(1, (0,), (0, 1))),
        )
        assert np.allclose(
            normalized_laplacian(net), [[1.0, -1.0], [-1.0, 1.0]]
        )

    def test_fig1_entries(self, fig1_net):
        lap = normalized_laplacian(fig1_net)
        # symmetrized degrees: A=1, B=1, C=3, D=1
        assert lap[0, 2] == pytest.approx(-1.0 / np.sqrt(3.0), abs=1e-12)
        assert lap[2, 0] == lap[0, 2]
        assert np.array_equal(np.diag(lap), np.ones(4))

    def test_symmetric_and_spectrum_in_range(self):
        for net in data.generate_library(data.GenConfig(n=5, count=15, seed=7)):
            lap = normalized_laplacian(net)
            assert np.array_equal(lap, lap.T)
            eig = np.linalg.eigvalsh(lap)
            assert eig.min() >= -1e-12
            assert eig.max() <= 2.0 + 1e-12


class TestCptMatrix:
    def test_single_variable(self, single_net):
        assert np.array_equal(cpt_matrix(single_net), [[0]])

    def test_fig1_row_for_d(self, fig1_net):
        mat = cpt_matrix(fig1_net)
        # D is row 3; its only parent is C, the last of the other
        # variables, so the C-bit is the lowest column bit
        cols = np.arange(8)
        assert np.array_equal(mat[3], cols & 1)

    def test_fig1_row_for_root(self, fig1_net):
        assert not cpt_matrix(fig1_net)[0].any()

    def test_parent_assignment_blocks_constant(self):
        # rows restricted to columns sharing a parent assignment are constant
        for net in data.generate_library(data.GenConfig(n=4, count=12, seed=3)):
            mat = cpt_matrix(net)
            n = net.n
            cols = np.arange(1 << (n - 1))
            for v in range(n):
                others = [u for u in range(n) if u != v]
                key = np.zeros_like(cols)
                for p in net.tables[v].parents:
                    t = others.index(p)
                    key = (key << 1) | ((cols >> (n - 2 - t)) & 1)
                for k in np.unique(key):
                    assert len(set(mat[v][key == k])) == 1

    def test_encoding_injective_on_three_variable_space(self):
        seen = {}
        for net in enumerate_cpnets(3):
            key = (
                adjacency_matrix(net).tobytes(),
                cpt_matrix(net).tobytes(),
            )
            assert key not in seen
            seen[key] = net
        assert len(seen) == 488


class TestEncodePair:
    def test_identical_pair(self, fig1_net):
        sample = encode_pair(fig1_net, fig1_net, 0.0, 10)
        assert np.array_equal(sample.lap_a, sample.lap_b)
        assert np.array_equal(sample.cpt_a, sample.cpt_b)
        assert sample.bin == 0

    def test_dims_n4(self, fig1_net):
        sample = encode_pair(fig1_net, fig1_net, 0.0, 10)
        assert sample.lap_a.shape == (16,)
        assert sample.cpt_a.shape == (32,)

    def test_bin_from_label(self, fig1_net):
        assert encode_pair(fig1_net, fig1_net, 0.25, 10).bin == 2

    def test_label_out_of_range(self, fig1_net):
        with pytest.raises(ValueError, match="label"):
            encode_pair(fig1_net, fig1_net, 1.5, 10)

    def test_swap_halves(self, fig1_net):
        other = CPNet(
            fig1_net.variables,
            (CPTable(0, (), (1,)),) + fig1_net.tables[1:],
        )
        ab = encode_pair(fig1_net, other, 0.5, 10)
        ba = encode_pair(other, fig1_net, 0.5, 10)
        assert np.array_equal(ab.lap_a, ba.lap_b)
        assert np.array_equal(ab.cpt_a, ba.cpt_b)
        assert np.array_equal(ab.lap_b, ba.lap_a)
        assert np.array_equal(ab.cpt_b, ba.cpt_a)


class TestRecords:
    def test_round_trip(self, tmp_path):
        ds = data.build_dataset(
            data.GenConfig(n=3, count=8, seed=4), folds=1, p=0.5, m=10,
            ordered=False,
        )
        path = tmp_path / "records.bin"
        write_records(path, ds.features, ds.y, 3, 10)
        feats, y, header = read_records(path)
        assert header["encoding_version"] == ENCODING_VERSION
        assert header["count"] == len(ds.y)
        assert np.array_equal(feats, ds.features)
        assert np.allclose(y, ds.y, atol=1e-7)  # float32 storage

    def test_record_width(self):
        assert record_width(3) == 2 * (9 + 12) + 1
        assert record_width(4) == 2 * (16 + 32) + 1

    def test_split_features_blocks(self, fig1_net):
        lap, cpt = net_features(fig1_net)
        row = np.concatenate([lap, cpt, lap, cpt])[None, :]
        blocks = split_features(row, 4)
        assert np.array_equal(blocks["lap_a"][0], lap)
        assert np.array_equal(blocks["cpt_b"][0], cpt)

    def test_truncated_file_rejected(self, tmp_path):
        ds = data.build_dataset(
            data.GenConfig(n=3, count=5, seed=4), folds=1, p=0.5, m=10,
            ordered=False,
        )
        path = tmp_path / "records.bin"
        write_records(path, ds.features, ds.y, 3, 10)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="header promises"):
            read_records(path)

    def test_feature_dims(self):
        assert feature_dims(3) == (9, 12)
        assert feature_dims(7) == (49, 448)
