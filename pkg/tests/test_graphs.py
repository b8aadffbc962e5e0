"""Graph construction, validation, and spectral decompositions."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import stcar
from stcar.graphs import GraphError

from conftest import random_graphs


class TestBuildGraph:
    def test_path_graph_degrees(self, p3):
        assert_allclose(p3.degrees, [1, 2, 1])
        assert p3.n == 3

    def test_complete_graph_matrices(self, k3):
        assert_allclose(k3.degrees, [2, 2, 2])
        L = k3.laplacian().toarray()
        assert_allclose(L, 3 * np.eye(3) - np.ones((3, 3)))

    def test_duplicate_edges_collapse(self):
        g = stcar.build_graph([(0, 1), (1, 0), (0, 1), (1, 2)], 3)
        assert g.edges == ((0, 1), (1, 2))
        assert_allclose(g.degrees, [1, 2, 1])

    def test_isolated_node_rejected(self):
        with pytest.raises(GraphError, match="isolated.*2"):
            stcar.build_graph([(0, 1)], 3)

    def test_disconnected_rejected_with_components(self):
        with pytest.raises(GraphError, match=r"2 connected components.*\[0, 1\].*\[2, 3\]"):
            stcar.build_graph([(0, 1), (2, 3)], 4)

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError, match="self-loop at node 1"):
            stcar.build_graph([(0, 1), (1, 1)], 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(GraphError, match="outside node range"):
            stcar.build_graph([(0, 3)], 3)


class TestSpectrum:
    def test_p3_laplacian_eigs(self, p3):
        # roots of the P3 Laplacian characteristic polynomial
        assert_allclose(stcar.spectrum(p3).laplacian_eigs, [0.0, 1.0, 3.0], atol=1e-12)

    def test_p3_rowstoch_eigs(self, p3):
        assert_allclose(stcar.spectrum(p3).rowstoch_eigs, [1.0, 0.0, -1.0], atol=1e-12)

    def test_single_null_eigenvalue(self):
        for g in random_graphs(8, 12, seed=1):
            s = stcar.spectrum(g)
            assert np.sum(s.null_mask()) == 1
            assert s.laplacian_eigs[0] < 1e-10

    def test_matches_bruteforce_eig(self):
        # independent oracle: general non-symmetric eigensolver
        for g in random_graphs(10, 12, seed=2):
            s = stcar.spectrum(g)
            L = g.laplacian().toarray()
            ell_ref = np.sort(np.linalg.eigvals(L).real)
            assert_allclose(s.laplacian_eigs, ell_ref, atol=1e-8)
            DW = g.W.toarray() / g.degrees[:, None]
            delta_ref = np.sort(np.linalg.eigvals(DW).real)[::-1]
            assert_allclose(s.rowstoch_eigs, delta_ref, atol=1e-8)

    def test_trace_identity(self):
        for g in random_graphs(6, 12, seed=3):
            s = stcar.spectrum(g)
            assert abs(s.laplacian_eigs.sum() - g.degrees.sum()) < 1e-10

    def test_rowstoch_bounds(self):
        for g in random_graphs(6, 12, seed=4):
            d = stcar.spectrum(g).rowstoch_eigs
            assert abs(d[0] - 1.0) < 1e-10  # constant eigenvector
            assert np.all(np.abs(d) <= 1.0 + 1e-10)

    def test_eigenvector_orthonormality(self):
        for g in random_graphs(5, 10, seed=5):
            V = stcar.spectrum(g).laplacian_vecs
            assert np.abs(V.T @ V - np.eye(g.n)).max() < 1e-10

    def test_reconstruction(self, lattice4):
        s = stcar.spectrum(lattice4)
        L = lattice4.laplacian().toarray()
        recon = (s.laplacian_vecs * s.laplacian_eigs) @ s.laplacian_vecs.T
        assert np.abs(L - recon).max() <= 1e-8

    def test_cached(self, p3):
        assert stcar.spectrum(p3) is stcar.spectrum(p3)


class TestScaledLaplacian:
    def test_geometric_mean_property(self, p3):
        Ls, c = stcar.scaled_laplacian(p3)
        pinv = np.linalg.pinv(Ls.toarray())
        assert abs(np.exp(np.mean(np.log(np.diag(pinv)))) - 1.0) < 1e-8

    def test_k3_closed_form(self, k3):
        # pseudoinverse of 3I - J is constant 2/9 on the diagonal
        Ls, c = stcar.scaled_laplacian(k3)
        assert abs(c - 2.0 / 9.0) < 1e-12
        assert_allclose(np.diag(np.linalg.pinv(Ls.toarray())), np.ones(3), atol=1e-10)

    def test_positive_scale_and_gamma(self):
        for g in random_graphs(8, 12, seed=6):
            s = stcar.spectrum(g)
            _, c = stcar.scaled_laplacian(g)
            assert c > 0
            nz = ~s.null_mask()
            assert_allclose(s.scaled_eigs[nz], 1.0 / (c * s.laplacian_eigs[nz]), rtol=1e-10)
            assert_allclose(s.scaled_eigs[s.null_mask()], 0.0)


class TestIO:
    def test_edge_list_roundtrip(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("# a comment\n0 1\n1 2  # trailing\n\n2 3\n")
        g = stcar.read_edge_list(path)
        assert g.n == 4
        assert g.edges == ((0, 1), (1, 2), (2, 3))

    def test_edge_list_bad_line(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("0 1\n1 2 3\n")
        with pytest.raises(GraphError, match="edges.txt:2"):
            stcar.read_edge_list(path)

    def test_adjacency_csv(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1,0\n1,0,1\n0,1,0\n")
        g = stcar.read_adjacency_csv(path)
        assert g.edges == ((0, 1), (1, 2))

    def test_adjacency_csv_asymmetric(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1,0\n0,0,1\n0,1,0\n")
        with pytest.raises(GraphError, match="not symmetric"):
            stcar.read_adjacency_csv(path)


class TestGenerators:
    def test_lattice_degrees(self):
        g = stcar.lattice_graph(3)
        assert g.n == 9
        assert g.degrees[4] == 4  # centre
        assert g.degrees[0] == 2  # corner

    def test_random_connected(self):
        for seed in range(5):
            g = stcar.random_connected_graph(15, extra_edges=5, seed=seed)
            assert g.n == 15  # would have raised if disconnected
