import json

import numpy as np
import pytest
from hypothesis import given
from strategies import graph_families, weighted_graphs

from switchdiff import graph_core as gc


def brute_components(n, edges):
    adj = {v: set() for v in range(n)}
    for v, w in edges:
        adj[v].add(w)
        adj[w].add(v)
    seen, out = set(), []
    for s in range(n):
        if s in seen:
            continue
        stack, comp = [s], set()
        while stack:
            v = stack.pop()
            if v in comp:
                continue
            comp.add(v)
            stack.extend(adj[v] - comp)
        seen |= comp
        out.append(sorted(comp))
    return out


class TestBuildGraph:
    def test_single_edge(self):
        g = gc.build_graph(2, [(0, 1)], m=(1, 1), mu=(1,))
        assert g.edges == ((0, 1),)
        assert g.mu.tolist() == [1.0]
        assert g.m.tolist() == [1.0, 1.0]

    def test_loop_rejected(self):
        with pytest.raises(gc.LoopEdgeError, match="loop"):
            gc.build_graph(2, [(0, 0)])

    def test_duplicate_after_canonicalisation(self):
        with pytest.raises(gc.DuplicateEdgeError, match="duplicate"):
            gc.build_graph(3, [(0, 1), (1, 0)])

    def test_bad_index(self):
        with pytest.raises(gc.VertexIndexError):
            gc.build_graph(2, [(0, 2)])

    @pytest.mark.parametrize("m, mu", [((1, 0), (1,)), ((1, 1), (-2,)), ((1, np.nan), (1,))])
    def test_non_positive_weights(self, m, mu):
        with pytest.raises(gc.NonPositiveWeightError):
            gc.build_graph(2, [(0, 1)], m=m, mu=mu)

    def test_weight_count_mismatch(self):
        with pytest.raises(gc.GraphError):
            gc.build_graph(3, [(0, 1)], m=(1, 1))

    def test_canonical_order(self):
        g = gc.build_graph(4, [(3, 2), (1, 0), (2, 0)], mu=(3, 1, 2))
        assert g.edges == ((0, 1), (0, 2), (2, 3))
        assert g.edge_weight == (1.0, 2.0, 3.0)

    def test_equal_graphs_compare_equal(self):
        a = gc.build_graph(3, [(0, 1), (2, 1)], mu=(1, 2))
        b = gc.build_graph(3, [(1, 2), (1, 0)], mu=(2, 1))
        assert a == b


class TestUnionIntersection:
    def test_union_disjoint_edges(self):
        g1 = gc.build_graph(3, [(0, 1)], mu=(1,))
        g2 = gc.build_graph(3, [(1, 2)], mu=(2,))
        u = gc.union_graphs([g1, g2])
        assert u.edges == ((0, 1), (1, 2))
        assert u.mu.tolist() == [1.0, 2.0]
        assert u.m.tolist() == [1.0, 1.0, 1.0]

    def test_union_max_min(self):
        g1 = gc.build_graph(2, [(0, 1)], m=(2, 5), mu=(3,))
        g2 = gc.build_graph(2, [(0, 1)], m=(4, 1), mu=(7,))
        u = gc.union_graphs([g1, g2])
        assert u.edge_map() == {(0, 1): 7.0}
        assert u.m.tolist() == [2.0, 1.0]

    def test_intersection_empty(self):
        g1 = gc.build_graph(3, [(0, 1)])
        g2 = gc.build_graph(3, [(1, 2)])
        i = gc.intersection_graphs([g1, g2])
        assert i.edges == () and i.n_vertices == 3

    def test_intersection_min(self):
        g1 = gc.build_graph(2, [(0, 1)], mu=(3,))
        g2 = gc.build_graph(2, [(0, 1)], mu=(7,))
        assert gc.intersection_graphs([g1, g2]).edge_map() == {(0, 1): 3.0}

    def test_vertex_count_mismatch(self):
        with pytest.raises(gc.VertexCountMismatch):
            gc.union_graphs([gc.build_graph(2, []), gc.build_graph(3, [])])

    @given(weighted_graphs())
    def test_idempotent(self, g):
        assert gc.union_graphs([g, g]) == g
        assert gc.intersection_graphs([g, g]) == g

    @given(graph_families(max_graphs=3))
    def test_order_independent(self, graphs):
        assert gc.union_graphs(graphs) == gc.union_graphs(graphs[::-1])
        assert gc.intersection_graphs(graphs) == gc.intersection_graphs(graphs[::-1])

    @given(graph_families(max_graphs=3))
    def test_edge_sets(self, graphs):
        sets = [set(g.edges) for g in graphs]
        assert set(gc.union_graphs(graphs).edges) == set.union(*sets)
        assert set(gc.intersection_graphs(graphs).edges) == set.intersection(*sets)

    @given(graph_families(max_graphs=3))
    def test_associative(self, graphs):
        if len(graphs) < 3:
            return
        a, b, c = graphs
        left = gc.union_graphs([gc.union_graphs([a, b]), c])
        right = gc.union_graphs([a, gc.union_graphs([b, c])])
        assert left == right


class TestComponents:
    def test_path(self, path3):
        assert gc.connected_components(path3) == [[0, 1, 2]]

    def test_edgeless(self):
        assert gc.connected_components(gc.build_graph(3, [])) == [[0], [1], [2]]

    def test_two_pieces(self):
        g = gc.build_graph(5, [(0, 1), (3, 4)])
        assert gc.connected_components(g) == [[0, 1], [2], [3, 4]]

    @given(weighted_graphs(max_n=9))
    def test_matches_brute_force(self, g):
        assert gc.connected_components(g) == brute_components(g.n_vertices, g.edges)


class TestLaplacian:
    def test_path3_matrix(self, path3):
        a = gc.laplacian(path3).matrix
        np.testing.assert_array_equal(a, [[-1, 1, 0], [1, -2, 1], [0, 1, -1]])

    def test_path3_characteristic_roots(self, path3):
        # det(A - lambda I) vanishes exactly at 0, -1, -3
        a = gc.laplacian(path3).matrix
        for lam in (0.0, -1.0, -3.0):
            assert abs(np.linalg.det(a - lam * np.eye(3))) < 1e-12
        assert abs(np.linalg.det(a + 2 * np.eye(3))) > 0.5

    def test_edgeless_zero(self):
        np.testing.assert_array_equal(gc.laplacian(gc.build_graph(3, [])).matrix, np.zeros((3, 3)))

    def test_k3(self, k3):
        a = gc.laplacian(k3).matrix
        np.testing.assert_array_equal(np.diag(a), [-2, -2, -2])
        assert np.all(a[~np.eye(3, dtype=bool)] == 1)
        # -3 is a double root: rank(A + 3I) = 1
        assert np.linalg.matrix_rank(a + 3 * np.eye(3)) == 1

    def test_weighted_entries(self):
        g = gc.build_graph(2, [(0, 1)], m=(2, 4), mu=(6,))
        np.testing.assert_allclose(gc.laplacian(g).matrix, [[-3, 3], [1.5, -1.5]])

    @given(weighted_graphs())
    def test_self_adjoint_nsd_constants(self, g):
        op = gc.laplacian(g)
        op.check()
        np.testing.assert_allclose(op.matrix @ np.ones(g.n_vertices), 0, atol=1e-12)

    @given(weighted_graphs())
    def test_quadratic_form(self, g):
        # <A f, f>_m = -sum mu (f_v - f_w)^2
        f = np.random.default_rng(g.n_vertices).standard_normal(g.n_vertices)
        a = gc.laplacian(g).matrix
        lhs = np.sum(g.m * (a @ f) * f)
        rhs = -sum(mu * (f[v] - f[w]) ** 2 for (v, w), mu in g.edge_map().items())
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


class TestRayleigh:
    @given(weighted_graphs())
    def test_constant_zero(self, g):
        assert gc.rayleigh_quotient(g, np.full(g.n_vertices, 3.0)) == 0.0

    def test_path3(self, path3):
        assert gc.rayleigh_quotient(path3, [1, 0, -1]) == pytest.approx(1.0)

    def test_single_edge(self):
        g = gc.build_graph(2, [(0, 1)], mu=(5,))
        assert gc.rayleigh_quotient(g, [1, -1]) == pytest.approx(10.0)

    def test_zero_vector_rejected(self, path3):
        with pytest.raises(ValueError):
            gc.rayleigh_quotient(path3, [0, 0, 0])


class TestOperatorModel:
    def test_readonly(self, path3):
        op = gc.laplacian(path3)
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 1.0

    def test_check_rejects_non_self_adjoint(self):
        with pytest.raises(ValueError, match="self-adjoint"):
            gc.OperatorModel(np.array([[-1.0, 1.0], [0.0, -1.0]]), np.ones(2)).check()

    def test_check_rejects_positive(self):
        with pytest.raises(ValueError, match="semi-definite"):
            gc.OperatorModel(np.eye(2), np.ones(2)).check()

    def test_mass_validation(self):
        with pytest.raises(ValueError):
            gc.OperatorModel(np.zeros((2, 2)), [1.0, 0.0])


class TestJson:
    def test_round_trip(self, tmp_path):
        g = gc.build_graph(4, [(0, 1), (2, 3)], m=(1, 2, 3, 4), mu=(0.5, 7))
        path = tmp_path / "g.json"
        path.write_text(json.dumps(gc.graph_to_json(g)))
        assert gc.load_graph(path) == g

    def test_default_weights(self):
        g = gc.graph_from_json('{"n": 3, "edges": [[0, 1], [1, 2, 2.5]]}')
        assert g.mu.tolist() == [1.0, 2.5]
        assert g.m.tolist() == [1.0, 1.0, 1.0]

    @pytest.mark.parametrize("text", ['{"edges": []}', '{"n": 2, "edges": [[0]]}', '{"n": 2, "edges": [[0, 0]]}'])
    def test_malformed(self, text):
        with pytest.raises(gc.GraphError):
            gc.graph_from_json(text)
