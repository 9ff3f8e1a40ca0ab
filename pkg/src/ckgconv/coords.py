"""Pseudo-coordinate fields: relative positional encodings for node pairs.

A field assigns every ordered node pair (i, j) a small vector that a kernel
function can be evaluated on. The default is the stack of random-walk
transition probabilities ``[I, M, M^2, ..., M^{K-1}]_{ij}``; hop distances
and resistance distances are available as scalar alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySupportError
from .graph import (
    Graph,
    k_hop_support,
    matrix_power_sequence,
    random_walk_matrix,
    resistance_distance,
    shortest_path_distances,
)

RRWP = "rrwp"
SPD = "spd"
RD = "rd"
FIELD_KINDS = (RRWP, SPD, RD)

GLOBAL = "global"
KHOP = "khop"


@dataclass(frozen=True)
class PseudoCoordinateField:
    """Per-pair coordinate vectors, shape ``[n, n, width]``.

    ``rescaled`` records whether the values were multiplied by the node
    count (which removes the implicit 1/n scale of walk probabilities).
    """

    kind: str
    values: np.ndarray
    rescaled: bool = False

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def diagonal(self) -> np.ndarray:
        """Per-node coordinates ``values[i, i]`` (absolute encodings)."""
        idx = np.arange(self.n)
        return self.values[idx, idx]


def rrwp(g: Graph, k: int, rescale: bool = False) -> PseudoCoordinateField:
    """Random-walk pair encodings: channel ``t`` holds ``(M^t)_{ij}``.

    Channel 0 is the identity indicator (1 iff i == j). Every power of the
    walk matrix is row-stochastic (up to all-zero rows at isolated nodes),
    so the raw per-channel row sums are 1. With ``rescale`` the whole stack
    is multiplied by n.
    """
    m = random_walk_matrix(g)
    powers = matrix_power_sequence(m, k)
    values = np.stack(powers, axis=-1)
    if rescale:
        values = values * float(g.n)
    return PseudoCoordinateField(kind=RRWP, values=values, rescaled=rescale)


def spd_field(g: Graph) -> PseudoCoordinateField:
    """Hop-distance encodings, one channel; unreachable pairs hold ``inf``.

    The infinite sentinel marks pairs that must be dropped from any
    convolution support built over this field.
    """
    dist = shortest_path_distances(g)
    return PseudoCoordinateField(kind=SPD, values=dist[:, :, None])


def rd_field(g: Graph) -> PseudoCoordinateField:
    """Resistance-distance encodings, one channel (connected graphs only)."""
    rd = resistance_distance(g)
    return PseudoCoordinateField(kind=RD, values=rd[:, :, None])


def standardize_field(field: PseudoCoordinateField) -> PseudoCoordinateField:
    """Standardize each channel to zero mean / unit variance over all pairs.

    A deterministic pre-pass alternative to normalizing the coordinates
    inside the network. Constant channels are left centered but unscaled.
    """
    flat = field.values.reshape(-1, field.width)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    values = (field.values - mean) / std
    return PseudoCoordinateField(
        kind=field.kind, values=values, rescaled=field.rescaled
    )


@dataclass(frozen=True)
class SupportSpec:
    """Which neighbors each node aggregates over.

    ``kind`` is ``"global"`` (every node, including i itself) or ``"khop"``
    with a hop radius ``k``. ``sets`` is the per-node tuple of member ids.
    """

    kind: str
    k: int | None
    sets: tuple[tuple[int, ...], ...]

    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.sets], dtype=np.int64)


def make_support(g: Graph, kind: str = GLOBAL, k: int | None = None) -> SupportSpec:
    """Build the aggregation support for every node."""
    if kind == GLOBAL:
        everyone = tuple(range(g.n))
        return SupportSpec(kind=GLOBAL, k=None, sets=tuple(everyone for _ in range(g.n)))
    if kind == KHOP:
        if k is None or k < 0:
            raise ValueError(f"khop support needs a non-negative radius, got {k}")
        sets = k_hop_support(g, k)
        for i, s in enumerate(sets):
            if len(s) == 0:
                raise EmptySupportError(f"node {i} has an empty {k}-hop support")
        return SupportSpec(kind=KHOP, k=k, sets=sets)
    raise ValueError(f"unknown support kind: {kind!r}")
