"""Graph convolution operators driven by continuous kernels.

The convolution aggregates, for every node i, the signals of its support
weighted by kernel coefficients evaluated at the pair pseudo-coordinates:

    out(i) = agg_{j in supp(i)} x(j) * psi(P_ij)   (+ pointwise mix + bias)

Aggregation is the support mean by default; the sum variant drops the
1/|supp| factor (used together with softmax-normalized coefficients).
Also provides degree scalers, an O(edges)-style rewrite of the global
convolution for sparse coordinate fields, and a degree-normalized
message-passing baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .coords import GLOBAL, PseudoCoordinateField, SupportSpec, make_support
from .errors import ConfigMismatchError, EmptySupportError, ShapeMismatchError
from .graph import Graph, adjacency_matrix, degree_vector
from .kernels import (
    CONSTRAINT_NONE,
    CONSTRAINT_SOFTMAX,
    KernelConfig,
    KernelFunction,
    constrain_coefficients,
    kernel_eval,
)

AGG_SCALED_MEAN = "scaled_mean"
AGG_SUM = "sum"

SCALER_NONE = "none"
SCALER_POST_DEGREE = "post_degree"
SCALER_PE_INJECTED = "pe_injected"


@dataclass(frozen=True)
class PairBatch:
    """Flattened (center, neighbor) pairs of a support with their coords.

    ``coords`` rows are the kernel inputs (edge-attr slot, if any, followed
    by the pseudo-coordinates). ``counts[i]`` is the size of node i's
    support after dropping non-finite (sentinel) pairs.
    """

    center: np.ndarray
    neighbor: np.ndarray
    coords: np.ndarray
    counts: np.ndarray
    n: int

    @property
    def num_pairs(self) -> int:
        return self.center.shape[0]


def build_pair_batch(
    g: Graph,
    field: PseudoCoordinateField,
    support: SupportSpec,
    include_edge_attrs: bool = True,
) -> PairBatch:
    """Enumerate support pairs in (center-major, neighbor-ascending) order.

    Pairs whose coordinates contain a non-finite sentinel (unreachable
    hop-distance pairs) are excluded from the support.
    """
    if field.n != g.n or len(support.sets) != g.n:
        raise ShapeMismatchError("graph, field and support sizes disagree")

    edge_dim = 0
    edge_lookup: dict[tuple[int, int], np.ndarray] = {}
    if include_edge_attrs and g.edge_attrs is not None:
        edge_dim = g.edge_attrs.shape[1]
        for row, (u, v) in zip(g.edge_attrs, g.edges):
            edge_lookup[(u, v)] = row
            edge_lookup[(v, u)] = row

    center, neighbor, coords = [], [], []
    counts = np.zeros(g.n, dtype=np.int64)
    zeros_edge = np.zeros(edge_dim)
    for i, members in enumerate(support.sets):
        for j in members:
            pe = field.values[i, j]
            if not np.isfinite(pe).all():
                continue
            if edge_dim:
                coords.append(np.concatenate([edge_lookup.get((i, j), zeros_edge), pe]))
            else:
                coords.append(pe)
            center.append(i)
            neighbor.append(j)
            counts[i] += 1
        if counts[i] == 0:
            raise EmptySupportError(f"node {i} has no usable support pairs")

    return PairBatch(
        center=np.asarray(center, dtype=np.int64),
        neighbor=np.asarray(neighbor, dtype=np.int64),
        coords=np.asarray(coords, dtype=np.float64),
        counts=counts,
        n=g.n,
    )


def degree_scaler_post(x: Tensor, theta1: Tensor, theta2: Tensor, degrees: np.ndarray) -> Tensor:
    """Degree-modulated affine mix of node features:

        out_i = x_i * theta1 + sqrt(d_i) * x_i * theta2

    ``theta1`` / ``theta2`` have one entry per channel of ``x``.
    """
    root = np.sqrt(np.asarray(degrees, dtype=np.float64))[:, None]
    return ad.add(ad.mul(x, theta1), ad.mul(ad.mul(x, ad.const(root)), theta2))


def degree_scaler_pe(
    coords,
    theta1: Tensor,
    theta2: Tensor,
    theta3: Tensor,
    center_degrees: np.ndarray,
    neighbor_degrees: np.ndarray,
) -> Tensor:
    """Inject degree information into pair coordinates:

        P_ij <- P_ij * theta1 + (sqrt(d_i) * theta2) * P_ij * (rsqrt(d_j) * theta3)

    with the convention that rsqrt(0) = 0. Thetas have one entry per
    coordinate channel.
    """
    coords = ad._as_tensor(coords)
    ci = np.sqrt(np.asarray(center_degrees, dtype=np.float64))[:, None]
    dj = np.asarray(neighbor_degrees, dtype=np.float64)
    cj = np.where(dj > 0, 1.0 / np.sqrt(np.where(dj > 0, dj, 1.0)), 0.0)[:, None]
    first = ad.mul(coords, theta1)
    second = ad.mul(
        ad.mul(ad.mul(ad.const(ci), theta2), coords),
        ad.mul(ad.const(cj), theta3),
    )
    return ad.add(first, second)


def _aggregate(messages: Tensor, batch: PairBatch, aggregation: str) -> Tensor:
    agg = ad.segment_sum(messages, batch.center, batch.n)
    if aggregation == AGG_SCALED_MEAN:
        agg = ad.div(agg, ad.const(batch.counts[:, None].astype(np.float64)))
    elif aggregation != AGG_SUM:
        raise ConfigMismatchError(f"unknown aggregation {aggregation!r}")
    return agg


def conv_scalar(
    x,
    kernel: KernelFunction,
    batch: PairBatch,
    bias: Tensor | None = None,
    aggregation: str = AGG_SCALED_MEAN,
    constraint: str = CONSTRAINT_NONE,
    coords: Tensor | None = None,
    training: bool = True,
    update_stats: bool = True,
) -> Tensor:
    """Single-channel convolution: out(i) = agg_j x(j) * psi(P_ij) + b.

    ``x`` is an [n, 1] column; the kernel must have out_dim 1. ``coords``
    overrides the batch coordinates (used for degree-injected variants).
    """
    x = ad._as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != 1:
        raise ShapeMismatchError(f"conv_scalar expects [n, 1] signals, got {x.data.shape}")
    if kernel.cfg.out_dim != 1:
        raise ConfigMismatchError("conv_scalar needs a single-channel kernel")
    p = coords if coords is not None else ad.const(batch.coords)
    coeff = kernel_eval(kernel, p, training, update_stats=update_stats)
    coeff = constrain_coefficients(coeff, constraint, batch.center, batch.n)
    messages = ad.mul(ad.gather(x, batch.neighbor), coeff)
    out = _aggregate(messages, batch, aggregation)
    if bias is not None:
        out = ad.add(out, bias)
    return out


def conv_depthwise(
    x,
    kernel: KernelFunction,
    batch: PairBatch,
    w_mix: Tensor | None = None,
    bias: Tensor | None = None,
    aggregation: str = AGG_SCALED_MEAN,
    constraint: str = CONSTRAINT_NONE,
    coords: Tensor | None = None,
    training: bool = True,
    update_stats: bool = True,
) -> Tensor:
    """Depthwise-separable convolution.

    Kernel coefficients multiply each channel independently; the optional
    pointwise matrix ``w_mix`` then mixes channels:

        out(i) = W (agg_j x(j) . psi(P_ij)) + b
    """
    x = ad._as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != kernel.cfg.out_dim:
        raise ShapeMismatchError(
            f"signals [n, {kernel.cfg.out_dim}] expected, got {x.data.shape}"
        )
    p = coords if coords is not None else ad.const(batch.coords)
    coeff = kernel_eval(kernel, p, training, update_stats=update_stats)
    coeff = constrain_coefficients(coeff, constraint, batch.center, batch.n)
    messages = ad.mul(ad.gather(x, batch.neighbor), coeff)
    out = _aggregate(messages, batch, aggregation)
    if w_mix is not None:
        out = ad.fc(out, w_mix, bias)
    elif bias is not None:
        out = ad.add(out, bias)
    return out


def conv_global_efficient(
    x: np.ndarray,
    kernel: KernelFunction,
    field: PseudoCoordinateField,
    bias: float = 0.0,
    training: bool = False,
) -> np.ndarray:
    """Global-support scalar convolution touching only nonzero-coordinate pairs.

    For fields where most pair vectors are exactly zero (walk encodings on
    sparse graphs), the full-support mean can be rearranged around the
    kernel's value at the zero vector:

        out(i) = (1/n) sum_{j in S_i} x(j) (psi(P_ij) - psi(0)) + psi(0) * mean(x)

    with S_i = {j : P_ij != 0}. Matches the naive global scalar convolution
    exactly (up to float round-off) for batch-independent kernels.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = field.n
    if x.shape[0] != n:
        raise ShapeMismatchError(f"expected {n} signals, got {x.shape[0]}")

    nonzero = np.any(field.values != 0.0, axis=2)
    ci, cj = np.nonzero(nonzero)
    psi0 = kernel_eval(kernel, np.zeros((1, field.width)), training=training).data[0, 0]
    out = np.full(n, psi0 * x.mean() + bias, dtype=np.float64)
    if ci.size:
        coeff = kernel_eval(kernel, field.values[ci, cj], training=training).data[:, 0]
        contrib = x[cj] * (coeff - psi0)
        np.add.at(out, ci, contrib / n)
    return out


def gcn_norm_adjacency(g: Graph) -> np.ndarray:
    """Self-loop-augmented symmetric normalization (D+I)^-1/2 (A+I) (D+I)^-1/2."""
    a = adjacency_matrix(g) + np.eye(g.n)
    d = a.sum(axis=1)
    inv_root = 1.0 / np.sqrt(d)
    return inv_root[:, None] * a * inv_root[None, :]


def gcn_conv(x, w: Tensor, g: Graph, norm_adj: np.ndarray | None = None) -> Tensor:
    """Message-passing baseline: out = A_hat x W, with W shaped [out, in]."""
    a_hat = gcn_norm_adjacency(g) if norm_adj is None else norm_adj
    return ad.fc(ad.matmul(ad.const(a_hat), ad._as_tensor(x)), w)


class ConvLayer:
    """A configured depthwise convolution with its own kernel and scalers."""

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        kernel_cfg: KernelConfig,
        scaler: str = SCALER_NONE,
        aggregation: str = AGG_SCALED_MEAN,
        name: str = "conv",
        pointwise: bool = True,
    ):
        if kernel_cfg.out_dim != channels:
            raise ConfigMismatchError(
                f"kernel out_dim {kernel_cfg.out_dim} != layer channels {channels}"
            )
        if scaler not in (SCALER_NONE, SCALER_POST_DEGREE, SCALER_PE_INJECTED):
            raise ConfigMismatchError(f"unknown scaler {scaler!r}")
        if aggregation == AGG_SUM and kernel_cfg.constraint != CONSTRAINT_SOFTMAX:
            # Sum aggregation is only well-scaled under normalized coefficients.
            raise ConfigMismatchError("sum aggregation requires the softmax constraint")
        self.kernel = KernelFunction(kernel_cfg, rng, name=f"{name}.kernel")
        self.scaler = scaler
        self.aggregation = aggregation
        self.name = name
        self.w_mix = (
            Parameter(ad.uniform_init(rng, channels, channels), f"{name}.mix.w")
            if pointwise
            else None
        )
        self.bias = Parameter(np.zeros(channels), f"{name}.mix.b")
        if scaler == SCALER_POST_DEGREE:
            self.theta1 = Parameter(np.ones(channels), f"{name}.scaler.theta1")
            self.theta2 = Parameter(np.zeros(channels), f"{name}.scaler.theta2")
            self.theta3 = None
        elif scaler == SCALER_PE_INJECTED:
            width = kernel_cfg.in_dim
            self.theta1 = Parameter(np.ones(width), f"{name}.scaler.theta1")
            self.theta2 = Parameter(np.zeros(width), f"{name}.scaler.theta2")
            self.theta3 = Parameter(np.zeros(width), f"{name}.scaler.theta3")
        else:
            self.theta1 = self.theta2 = self.theta3 = None

    def parameters(self) -> list[Parameter]:
        params = self.kernel.parameters()
        if self.w_mix is not None:
            params.append(self.w_mix)
        params.append(self.bias)
        for theta in (self.theta1, self.theta2, self.theta3):
            if theta is not None:
                params.append(theta)
        return params

    def forward(
        self,
        x: Tensor,
        batch: PairBatch,
        degrees: np.ndarray,
        training: bool = True,
        update_stats: bool = True,
    ) -> Tensor:
        coords = None
        if self.scaler == SCALER_PE_INJECTED:
            coords = degree_scaler_pe(
                batch.coords,
                self.theta1,
                self.theta2,
                self.theta3,
                degrees[batch.center],
                degrees[batch.neighbor],
            )
        out = conv_depthwise(
            x,
            self.kernel,
            batch,
            w_mix=self.w_mix,
            bias=self.bias,
            aggregation=self.aggregation,
            constraint=self.kernel.cfg.constraint,
            coords=coords,
            training=training,
            update_stats=update_stats,
        )
        if self.scaler == SCALER_POST_DEGREE:
            out = degree_scaler_post(out, self.theta1, self.theta2, degrees)
        return out


def global_pair_batch(g: Graph, field: PseudoCoordinateField) -> PairBatch:
    """Convenience: the all-pairs batch for a global support."""
    return build_pair_batch(g, field, make_support(g, GLOBAL))
