"""Graph container, validation, and the dense matrix helpers."""

import json

import networkx as nx
import numpy as np
import pytest

from ckgconv.errors import (
    DisconnectedGraphError,
    DuplicateEdgeError,
    InvalidEdgeError,
    LengthMismatchError,
)
from ckgconv.graph import (
    Graph,
    adjacency_matrix,
    build_graph,
    connected_components,
    degree_vector,
    graph_from_json,
    graph_to_json,
    is_connected,
    k_hop_support,
    laplacian_matrix,
    matrix_power_sequence,
    random_walk_matrix,
    resistance_distance,
    shortest_path_distances,
)
from ckgconv.rng import make_rng
from ckgconv.verify import random_graph


def to_networkx(g: Graph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges)
    return h


# -- construction and validation ----------------------------------------------

def test_build_graph_canonicalizes_edges():
    """Edges come out as sorted (min, max) pairs regardless of input order."""
    g = build_graph(4, [(3, 1), (0, 2), (2, 1)])
    assert g.edges == ((0, 2), (1, 2), (1, 3))
    assert g.num_edges == 3


def test_build_graph_rejects_bad_inputs():
    with pytest.raises(InvalidEdgeError):
        build_graph(0, [])
    with pytest.raises(InvalidEdgeError):
        build_graph(3, [(0, 3)])
    with pytest.raises(InvalidEdgeError):
        build_graph(3, [(1, 1)])
    with pytest.raises(DuplicateEdgeError):
        build_graph(3, [(0, 1), (1, 0)])


def test_build_graph_allows_explicit_self_loops():
    g = build_graph(2, [(0, 0), (0, 1)], allow_self_loops=True)
    assert (0, 0) in g.edges


def test_node_attrs_promoted_to_column():
    g = build_graph(3, [(0, 1), (1, 2)], node_attrs=[1.0, 2.0, 3.0])
    assert g.node_attrs.shape == (3, 1)
    assert g.node_attrs.dtype == np.float64


def test_edge_attrs_follow_canonical_order():
    """Attribute rows are re-sorted together with their edges."""
    g = build_graph(
        3,
        [(2, 1), (1, 0)],
        edge_attrs=[[10.0], [20.0]],
    )
    assert g.edges == ((0, 1), (1, 2))
    # (1, 0) carried 20.0, and it sorts first.
    np.testing.assert_array_equal(g.edge_attrs, [[20.0], [10.0]])


def test_attr_length_mismatches_raise():
    with pytest.raises(LengthMismatchError):
        build_graph(3, [(0, 1)], node_attrs=[1.0, 2.0])
    with pytest.raises(LengthMismatchError):
        build_graph(3, [(0, 1)], edge_attrs=[[1.0], [2.0]])
    with pytest.raises(LengthMismatchError):
        build_graph(3, [(0, 1)], node_labels=[0.0])


# -- dense helpers --------------------------------------------------------------

def test_adjacency_and_degrees_match_networkx():
    rng = make_rng(11)
    for _ in range(20):
        g = random_graph(rng)
        a = adjacency_matrix(g)
        oracle = nx.to_numpy_array(to_networkx(g), nodelist=range(g.n))
        np.testing.assert_array_equal(a, oracle)
        np.testing.assert_array_equal(degree_vector(g), oracle.sum(axis=1))


def test_random_walk_rows_are_stochastic_or_zero():
    """Each row of D^-1 A sums to 1, except isolated nodes which stay zero."""
    g = build_graph(4, [(0, 1), (1, 2)])  # node 3 is isolated
    m = random_walk_matrix(g)
    sums = m.sum(axis=1)
    np.testing.assert_allclose(sums[:3], 1.0, atol=1e-15)
    assert sums[3] == 0.0
    assert np.isfinite(m).all()


def test_matrix_power_sequence_matches_numpy():
    rng = make_rng(5)
    m = rng.standard_normal((6, 6))
    powers = matrix_power_sequence(m, 5)
    assert len(powers) == 5
    for t, p in enumerate(powers):
        np.testing.assert_allclose(p, np.linalg.matrix_power(m, t), atol=1e-10)
    with pytest.raises(ValueError):
        matrix_power_sequence(m, 0)


def test_shortest_paths_match_networkx():
    rng = make_rng(7)
    for _ in range(20):
        g = random_graph(rng)
        dist = shortest_path_distances(g)
        oracle = dict(nx.all_pairs_shortest_path_length(to_networkx(g)))
        for i in range(g.n):
            for j in range(g.n):
                if j in oracle[i]:
                    assert dist[i, j] == oracle[i][j]
                else:
                    assert np.isinf(dist[i, j])


def test_components_and_connectivity():
    g = build_graph(5, [(0, 1), (2, 3)])
    comp = connected_components(g)
    assert comp[0] == comp[1]
    assert comp[2] == comp[3]
    assert len({comp[0], comp[2], comp[4]}) == 3
    assert not is_connected(g)
    assert is_connected(build_graph(3, [(0, 1), (1, 2)]))


def test_laplacian_matches_networkx():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    oracle = nx.laplacian_matrix(to_networkx(g)).toarray()
    np.testing.assert_array_equal(laplacian_matrix(g), oracle)


def test_resistance_distance_triangle():
    """On a triangle every pair sits at resistance 2/3."""
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    rd = resistance_distance(g)
    expected = np.full((3, 3), 2.0 / 3.0)
    np.fill_diagonal(expected, 0.0)
    np.testing.assert_allclose(rd, expected, atol=1e-12)


def test_resistance_distance_matches_networkx():
    rng = make_rng(13)
    hits = 0
    while hits < 10:
        g = random_graph(rng)
        if not is_connected(g):
            continue
        hits += 1
        rd = resistance_distance(g)
        h = to_networkx(g)
        for i in range(g.n):
            for j in range(i + 1, g.n):
                assert abs(rd[i, j] - nx.resistance_distance(h, i, j)) < 1e-8


def test_resistance_distance_needs_connectivity():
    with pytest.raises(DisconnectedGraphError):
        resistance_distance(build_graph(4, [(0, 1), (2, 3)]))


def test_k_hop_support_radii():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    assert k_hop_support(g, 0) == ((0,), (1,), (2,), (3,))
    assert k_hop_support(g, 1)[0] == (0, 1)
    assert k_hop_support(g, 3)[0] == (0, 1, 2, 3)
    with pytest.raises(ValueError):
        k_hop_support(g, -1)


# -- wire format -----------------------------------------------------------------

def test_json_round_trip_preserves_everything():
    g = build_graph(
        3,
        [(0, 1), (1, 2)],
        node_attrs=[[1.0], [0.0], [2.5]],
        edge_attrs=[[0.5], [1.5]],
        node_labels=[0.0, 1.0, 1.0],
    )
    g2 = graph_from_json(graph_to_json(g))
    assert g2.n == g.n
    assert g2.edges == g.edges
    np.testing.assert_array_equal(g2.node_attrs, g.node_attrs)
    np.testing.assert_array_equal(g2.edge_attrs, g.edge_attrs)
    np.testing.assert_array_equal(g2.node_labels, g.node_labels)


def test_json_payload_is_plain():
    payload = json.loads(graph_to_json(build_graph(2, [(0, 1)])))
    assert payload["n"] == 2
    assert payload["edges"] == [[0, 1]]
    assert payload["node_attrs"] is None
