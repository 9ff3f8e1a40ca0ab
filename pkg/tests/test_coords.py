"""Pair coordinate fields and aggregation supports."""

import networkx as nx
import numpy as np
import pytest

from ckgconv.coords import (
    GLOBAL,
    KHOP,
    PseudoCoordinateField,
    RRWP,
    make_support,
    rd_field,
    rrwp,
    spd_field,
    standardize_field,
)
from ckgconv.errors import DisconnectedGraphError
from ckgconv.graph import build_graph
from ckgconv.rng import make_rng
from ckgconv.verify import permute_graph, random_graph


def test_rrwp_single_edge_by_hand():
    """Two nodes, one edge: the walk flips sides, so powers alternate I, M."""
    g = build_graph(2, [(0, 1)])
    field = rrwp(g, 3)
    eye = np.eye(2)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(field.values[:, :, 0], eye)
    np.testing.assert_array_equal(field.values[:, :, 1], swap)
    np.testing.assert_array_equal(field.values[:, :, 2], eye)


def test_rrwp_triangle_second_power():
    """On a triangle, (M^2)_ii = 1/2 and (M^2)_ij = 1/4."""
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    field = rrwp(g, 3)
    expected = np.full((3, 3), 0.25)
    np.fill_diagonal(expected, 0.5)
    np.testing.assert_allclose(field.values[:, :, 2], expected, atol=1e-15)


def test_rrwp_identity_channel_is_exact():
    rng = make_rng(3)
    for _ in range(20):
        g = random_graph(rng)
        field = rrwp(g, 4)
        # Bitwise, not approximately: channel 0 is the identity indicator.
        assert np.array_equal(field.values[:, :, 0], np.eye(g.n))


def test_rrwp_channel_row_sums():
    """Each power of the walk matrix keeps rows stochastic (or all-zero)."""
    rng = make_rng(4)
    for _ in range(20):
        g = random_graph(rng)
        field = rrwp(g, 5)
        deg = np.array([sum(1 for e in g.edges if v in e) for v in range(g.n)])
        sums = field.values.sum(axis=1)  # [n, k]
        for t in range(1, 5):
            expect = np.where(deg > 0, 1.0, 0.0)
            np.testing.assert_allclose(sums[:, t], expect, atol=1e-12)


def test_rrwp_rescale_multiplies_by_n():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    raw = rrwp(g, 4)
    scaled = rrwp(g, 4, rescale=True)
    assert scaled.rescaled and not raw.rescaled
    np.testing.assert_allclose(scaled.values, raw.values * 5.0, atol=1e-15)


def test_rrwp_permutation_equivariance():
    """Relabeling nodes permutes both pair axes of the field."""
    rng = make_rng(9)
    for _ in range(10):
        g = random_graph(rng, n_min=4, n_max=10)
        perm = rng.permutation(g.n)
        gp = permute_graph(g, perm)
        f = rrwp(g, 4).values
        fp = rrwp(gp, 4).values
        np.testing.assert_allclose(fp[perm][:, perm], f, atol=1e-14)


def test_field_diagonal_gives_node_encodings():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    field = rrwp(g, 3)
    diag = field.diagonal()
    assert diag.shape == (3, 3)
    np.testing.assert_allclose(diag[:, 0], 1.0)
    np.testing.assert_allclose(diag[:, 2], 0.5)


def test_spd_field_matches_networkx_and_flags_unreachable():
    g = build_graph(5, [(0, 1), (1, 2), (3, 4)])
    field = spd_field(g)
    assert field.width == 1
    h = nx.Graph()
    h.add_nodes_from(range(5))
    h.add_edges_from(g.edges)
    lengths = dict(nx.all_pairs_shortest_path_length(h))
    assert field.values[0, 2, 0] == lengths[0][2] == 2
    assert np.isinf(field.values[0, 3, 0])


def test_spd_six_cycle_max_distance():
    g = build_graph(6, [(i, (i + 1) % 6) for i in range(6)])
    field = spd_field(g)
    assert field.values.max() == 3.0


def test_rd_field_triangle_value():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    field = rd_field(g)
    assert abs(field.values[0, 1, 0] - 2.0 / 3.0) < 1e-12
    with pytest.raises(DisconnectedGraphError):
        rd_field(build_graph(4, [(0, 1), (2, 3)]))


def test_standardize_centers_and_scales_each_channel():
    rng = make_rng(17)
    g = random_graph(rng, n_min=6, n_max=12)
    field = standardize_field(rrwp(g, 4))
    flat = field.values.reshape(-1, field.width)
    np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=1e-12)


def test_standardize_leaves_constant_channels_finite():
    values = np.full((3, 3, 2), 7.0)
    values[:, :, 1] = np.arange(9).reshape(3, 3)
    field = PseudoCoordinateField(kind=RRWP, values=values)
    out = standardize_field(field)
    # Constant channel ends up centered at zero, not divided by zero.
    np.testing.assert_array_equal(out.values[:, :, 0], 0.0)
    assert np.isfinite(out.values).all()


def test_global_support_covers_every_pair():
    g = build_graph(4, [(0, 1), (2, 3)])
    support = make_support(g)
    assert support.kind == GLOBAL
    assert support.sets == tuple(tuple(range(4)) for _ in range(4))
    np.testing.assert_array_equal(support.sizes(), [4, 4, 4, 4])


def test_khop_support_radii_and_validation():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    support = make_support(g, kind=KHOP, k=1)
    assert support.sets[0] == (0, 1)
    assert support.sets[1] == (0, 1, 2)
    with pytest.raises(ValueError):
        make_support(g, kind=KHOP, k=None)
    with pytest.raises(ValueError):
        make_support(g, kind="ball")
