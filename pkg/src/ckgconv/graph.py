"""Small undirected graphs as dense float64 matrices.

Graphs here are desk-scale (tens of nodes), so everything is computed with
dense numpy arrays: adjacency, degree-normalized walk matrices, BFS hop
distances, and effective-resistance distances via the Laplacian
pseudoinverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DisconnectedGraphError,
    DuplicateEdgeError,
    InvalidEdgeError,
    LengthMismatchError,
)

#: Eigenvalues of the Laplacian at or below this are treated as zero when
#: forming the pseudoinverse.
EIGENVALUE_CUTOFF = 1e-10


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected graph with optional node/edge attributes and labels.

    ``edges`` is canonicalized: each pair is stored as (min, max) and the
    list is sorted; ``edge_attrs`` rows follow that order. Instances are
    frozen; all derived quantities are pure functions of the fields.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    node_attrs: np.ndarray | None = None
    edge_attrs: np.ndarray | None = None
    node_labels: np.ndarray | None = None
    allow_self_loops: bool = field(default=False, repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def build_graph(
    n: int,
    edges,
    node_attrs=None,
    edge_attrs=None,
    node_labels=None,
    allow_self_loops: bool = False,
) -> Graph:
    """Validate and canonicalize raw graph data into a :class:`Graph`.

    Raises ``InvalidEdgeError`` for out-of-range endpoints or (by default)
    self-loops, ``DuplicateEdgeError`` when an undirected edge repeats, and
    ``LengthMismatchError`` when attribute tables do not line up.
    """
    if n < 1:
        raise InvalidEdgeError(f"graph needs at least one node, got n={n}")

    canonical = []
    for idx, (u, v) in enumerate(edges):
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise InvalidEdgeError(f"edge {idx} = ({u}, {v}) out of range for n={n}")
        if u == v and not allow_self_loops:
            raise InvalidEdgeError(f"edge {idx} = ({u}, {v}) is a self-loop")
        canonical.append(((min(u, v), max(u, v)), idx))

    seen = set()
    for pair, _ in canonical:
        if pair in seen:
            raise DuplicateEdgeError(f"edge {pair} appears more than once")
        seen.add(pair)

    # Sort edges, dragging attribute rows along so they stay aligned.
    canonical.sort(key=lambda item: item[0])
    sorted_edges = tuple(pair for pair, _ in canonical)

    if node_attrs is not None:
        node_attrs = np.asarray(node_attrs, dtype=np.float64)
        if node_attrs.ndim == 1:
            node_attrs = node_attrs[:, None]
        if node_attrs.shape[0] != n:
            raise LengthMismatchError(
                f"node_attrs has {node_attrs.shape[0]} rows for n={n}"
            )

    if edge_attrs is not None:
        edge_attrs = np.asarray(edge_attrs, dtype=np.float64)
        if edge_attrs.ndim == 1:
            edge_attrs = edge_attrs[:, None]
        if edge_attrs.shape[0] != len(sorted_edges):
            raise LengthMismatchError(
                f"edge_attrs has {edge_attrs.shape[0]} rows for "
                f"{len(sorted_edges)} edges"
            )
        order = [idx for _, idx in canonical]
        edge_attrs = edge_attrs[order]

    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.float64)
        if node_labels.shape[0] != n:
            raise LengthMismatchError(
                f"node_labels has {node_labels.shape[0]} entries for n={n}"
            )

    return Graph(
        n=n,
        edges=sorted_edges,
        node_attrs=node_attrs,
        edge_attrs=edge_attrs,
        node_labels=node_labels,
        allow_self_loops=allow_self_loops,
    )


def adjacency_matrix(g: Graph) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix."""
    a = np.zeros((g.n, g.n), dtype=np.float64)
    for u, v in g.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def degree_vector(g: Graph) -> np.ndarray:
    """Node degrees (row sums of the adjacency matrix)."""
    return adjacency_matrix(g).sum(axis=1)


def random_walk_matrix(g: Graph) -> np.ndarray:
    """Degree-normalized transition matrix ``D^{-1} A``.

    Rows of isolated nodes are all zero rather than NaN, so every row is
    either stochastic or identically zero.
    """
    a = adjacency_matrix(g)
    deg = a.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    return inv[:, None] * a


def matrix_power_sequence(m: np.ndarray, k: int) -> list[np.ndarray]:
    """``[M^0, M^1, ..., M^{k-1}]`` by repeated multiplication."""
    if k < 1:
        raise ValueError(f"need at least one power, got k={k}")
    n = m.shape[0]
    powers = [np.eye(n, dtype=np.float64)]
    for _ in range(k - 1):
        powers.append(powers[-1] @ m)
    return powers


def shortest_path_distances(g: Graph) -> np.ndarray:
    """All-pairs hop distances by BFS; unreachable pairs are ``inf``."""
    neighbors = [[] for _ in range(g.n)]
    for u, v in g.edges:
        neighbors[u].append(v)
        if u != v:
            neighbors[v].append(u)
    dist = np.full((g.n, g.n), np.inf, dtype=np.float64)
    for src in range(g.n):
        dist[src, src] = 0.0
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for w in neighbors[u]:
                    if not np.isfinite(dist[src, w]):
                        dist[src, w] = d
                        nxt.append(w)
            frontier = nxt
    return dist


def connected_components(g: Graph) -> np.ndarray:
    """Component id per node (0-based, in order of first appearance)."""
    dist = shortest_path_distances(g)
    comp = np.full(g.n, -1, dtype=np.int64)
    next_id = 0
    for v in range(g.n):
        if comp[v] < 0:
            comp[np.isfinite(dist[v])] = next_id
            next_id += 1
    return comp


def is_connected(g: Graph) -> bool:
    return bool(np.isfinite(shortest_path_distances(g)).all())


def laplacian_matrix(g: Graph) -> np.ndarray:
    a = adjacency_matrix(g)
    return np.diag(a.sum(axis=1)) - a


def resistance_distance(g: Graph) -> np.ndarray:
    """Effective-resistance distance ``L+_ii + L+_jj - 2 L+_ij``.

    The pseudoinverse comes from a symmetric eigendecomposition with
    eigenvalues below :data:`EIGENVALUE_CUTOFF` treated as zero. Requires a
    connected graph, otherwise the quantity is not defined between
    components.
    """
    if not is_connected(g):
        raise DisconnectedGraphError(
            "resistance distance requires a connected graph"
        )
    lap = laplacian_matrix(g)
    evals, evecs = np.linalg.eigh(lap)
    inv = np.where(evals > EIGENVALUE_CUTOFF, 1.0 / np.where(evals > 0, evals, 1.0), 0.0)
    pinv = (evecs * inv) @ evecs.T
    d = np.diag(pinv)
    rd = d[:, None] + d[None, :] - 2.0 * pinv
    # Clip the tiny negative round-off on the diagonal.
    np.fill_diagonal(rd, 0.0)
    return np.maximum(rd, 0.0)


def k_hop_support(g: Graph, k: int) -> tuple[tuple[int, ...], ...]:
    """Per-node tuple of nodes within ``k`` hops (always includes the node)."""
    if k < 0:
        raise ValueError(f"hop count must be non-negative, got {k}")
    dist = shortest_path_distances(g)
    return tuple(
        tuple(np.flatnonzero(dist[i] <= k).tolist()) for i in range(g.n)
    )


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def graph_to_json(g: Graph) -> str:
    payload = {
        "n": g.n,
        "edges": [list(e) for e in g.edges],
        "node_attrs": None if g.node_attrs is None else g.node_attrs.tolist(),
        "edge_attrs": None if g.edge_attrs is None else g.edge_attrs.tolist(),
        "node_labels": None if g.node_labels is None else g.node_labels.tolist(),
    }
    return json.dumps(payload)


def graph_from_json(text: str) -> Graph:
    payload = json.loads(text)
    return build_graph(
        n=payload["n"],
        edges=[tuple(e) for e in payload["edges"]],
        node_attrs=payload.get("node_attrs"),
        edge_attrs=payload.get("edge_attrs"),
        node_labels=payload.get("node_labels"),
    )


def load_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_json(fh.read())
