import networkx as nx
import numpy as np
import pytest

from provsentry.feature import (
    EigenError,
    jacobi_eigh,
    laplacian_degrees,
    normalized_laplacian,
    positional_encoding,
    smallest_k_eigenvectors,
)

from conftest import graph_from_edges, random_graph


def nx_components(g):
    gx = nx.Graph()
    gx.add_nodes_from(range(g.n_nodes))
    gx.add_edges_from((e.src, e.dst) for e in g.edges if e.src != e.dst)
    return nx.number_connected_components(gx)


class TestNormalizedLaplacian:
    def test_single_edge_hand_value(self):
        g = graph_from_edges([(0, 1)])
        L = normalized_laplacian(g).toarray()
        assert np.allclose(L, [[1.0, -1.0], [-1.0, 1.0]])

    def test_triangle_hand_value(self):
        g = graph_from_edges([(0, 1), (1, 2), (2, 0)])
        L = normalized_laplacian(g).toarray()
        expect = np.full((3, 3), -0.5)
        np.fill_diagonal(expect, 1.0)
        assert np.allclose(L, expect)

    def test_isolated_row_zero(self):
        g = graph_from_edges([(0, 1)], n_isolated=1)
        L = normalized_laplacian(g).toarray()
        assert np.allclose(L[2, :], 0.0)
        assert np.allclose(L[:, 2], 0.0)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 25, 60)
        L = normalized_laplacian(g).toarray()
        assert np.allclose(L, L.T)


class TestJacobi:
    def test_matches_numpy_eigh(self):
        rng = np.random.default_rng(1)
        for n in (2, 5, 17, 40):
            M = rng.normal(size=(n, n))
            A = (M + M.T) / 2
            vals, vecs = jacobi_eigh(A)
            ref = np.linalg.eigvalsh(A)
            assert np.abs(vals - ref).max() <= 1e-10
            assert np.abs(A @ vecs - vecs * vals).max() <= 1e-10
            assert np.abs(vecs.T @ vecs - np.eye(n)).max() <= 1e-10


class TestSmallestK:
    def test_single_edge_pair(self):
        g = graph_from_edges([(0, 1)])
        vals, vecs = smallest_k_eigenvectors(normalized_laplacian(g), 1)
        assert vals[0] == pytest.approx(2.0, abs=1e-10)
        assert np.allclose(vecs[:, 0], [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-10)

    def test_triangle_degenerate_pair(self):
        g = graph_from_edges([(0, 1), (1, 2), (2, 0)])
        L = normalized_laplacian(g)
        vals, vecs = smallest_k_eigenvectors(L, 2)
        assert np.allclose(vals, [1.5, 1.5], atol=1e-10)
        # degenerate multiplicity: assert the subspace, not the vectors
        assert np.abs(L @ vecs - vecs * vals).max() <= 1e-8

    def test_k_too_large(self):
        g = graph_from_edges([(0, 1)])
        with pytest.raises(ValueError, match="2 nodes"):
            smallest_k_eigenvectors(normalized_laplacian(g), 2)

    def test_residuals_orthogonality_and_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(8):
            n = int(rng.integers(8, 60))
            g = random_graph(rng, n, int(rng.integers(n, 4 * n)))
            L = normalized_laplacian(g)
            c = nx_components(g)
            k = min(4, n - c)
            vals, vecs = smallest_k_eigenvectors(L, k)
            assert np.abs(L @ vecs - vecs * vals).max() <= 1e-8
            gram = vecs.T @ vecs
            assert np.abs(gram - np.eye(k)).max() <= 1e-8
            assert (vals >= 0).all() and (vals <= 2).all()

    def test_zero_multiplicity_equals_components(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            n = int(rng.integers(6, 40))
            g = random_graph(rng, n, int(rng.integers(3, n)))
            vals, _ = jacobi_eigh(normalized_laplacian(g).toarray())
            n_zero = int((vals < 1e-8).sum())
            assert n_zero == nx_components(g)

    def test_deterministic_beta(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 30, 80)
        b1, v1 = positional_encoding(g, 5)
        b2, v2 = positional_encoding(g, 5)
        assert b1.tobytes() == b2.tobytes()
        assert v1.tobytes() == v2.tobytes()

    def test_sign_normalized(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 20, 50)
        _, vecs = smallest_k_eigenvectors(normalized_laplacian(g), 3)
        for j in range(vecs.shape[1]):
            nz = np.flatnonzero(np.abs(vecs[:, j]) > 1e-12)
            assert vecs[nz[0], j] > 0


class TestLanczosPath:
    def test_large_graph_matches_dense_oracle(self):
        rng = np.random.default_rng(6)
        n = 540
        edges = [(i, (i + 1) % n) for i in range(n)]
        edges += [(int(rng.integers(0, n)), int(rng.integers(0, n)))
                  for _ in range(300)]
        edges = [(s, d) for s, d in edges if s != d]
        g = graph_from_edges(edges, n_nodes=n, n_isolated=2)
        L = normalized_laplacian(g)
        k = 6
        vals, vecs = smallest_k_eigenvectors(L, k, degrees=laplacian_degrees(g))
        assert np.abs(L @ vecs - vecs * vals).max() <= 1e-8
        dense_vals = np.linalg.eigvalsh(L.toarray())
        nontrivial = dense_vals[dense_vals > 1e-8][:k]
        assert np.abs(np.sort(vals) - nontrivial).max() <= 1e-8

    def test_bfs_zero_space_without_degrees(self):
        rng = np.random.default_rng(7)
        n = 530
        edges = [(i, (i + 1) % n) for i in range(n)]
        edges += [(int(rng.integers(0, n)), int(rng.integers(0, n)))
                  for _ in range(150)]
        g = graph_from_edges([(s, d) for s, d in edges if s != d], n_nodes=n)
        L = normalized_laplacian(g)
        vals, vecs = smallest_k_eigenvectors(L, 4)
        assert np.abs(L @ vecs - vecs * vals).max() <= 1e-8
