"""Full graph networks: stem, convolution blocks, FFNs, and task heads.

A block is residual convolution -> norm -> residual FFN -> norm. The stem
concatenates node attributes with the diagonal (per-node) part of the
pseudo-coordinate field and projects to the working width; pair inputs to
the kernels concatenate edge attributes (zeros off-edge) with the pair
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNorm, LayerNorm, Parameter, Tensor
from .conv import (
    AGG_SCALED_MEAN,
    AGG_SUM,
    SCALER_NONE,
    SCALER_PE_INJECTED,
    SCALER_POST_DEGREE,
    ConvLayer,
    PairBatch,
    build_pair_batch,
    gcn_norm_adjacency,
)
from .coords import (
    GLOBAL,
    KHOP,
    RD,
    RRWP,
    SPD,
    PseudoCoordinateField,
    make_support,
    rd_field,
    rrwp,
    spd_field,
    standardize_field,
)
from .errors import ConfigMismatchError, WidthMismatchError
from .graph import Graph, degree_vector
from .kernels import KernelConfig, NORM_BATCH, NORM_LAYER, NORM_NONE

HEAD_NODE = "node"
HEAD_GRAPH = "graph"

POOL_NONE = "none"
POOL_MEAN = "mean"
POOL_SUM = "sum"


@dataclass
class ModelConfig:
    """Configuration of a continuous-kernel graph network."""

    num_blocks: int = 2
    hidden_dim: int = 16
    pe_kind: str = RRWP
    pe_k: int = 5
    rescale_pe: bool = True
    standardize_pe: bool = False
    support: str = GLOBAL
    support_k: int | None = None
    aggregation: str = AGG_SCALED_MEAN
    constraint: str = "none"
    scaler: str = SCALER_NONE
    norm: str = NORM_NONE
    residuals: bool = True
    activation: str = "gelu"
    kernel_blocks: int = 2
    kernel_hidden: int | None = None
    kernel_norm: str = NORM_NONE
    kernel_final_scale: float = 1.0
    ffn: bool = True
    ffn_ratio: int = 2
    dropout: float = 0.0
    head: str = HEAD_NODE
    num_outputs: int = 1
    pooling: str = POOL_NONE

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ConfigMismatchError("need at least one block")
        if self.pe_kind not in (RRWP, SPD, RD):
            raise ConfigMismatchError(f"unknown pe kind {self.pe_kind!r}")
        if self.pe_kind == RRWP and self.pe_k < 1:
            raise ConfigMismatchError("rrwp needs at least one power")
        if self.support not in (GLOBAL, KHOP):
            raise ConfigMismatchError(f"unknown support {self.support!r}")
        if self.support == KHOP and (self.support_k is None or self.support_k < 0):
            raise ConfigMismatchError("khop support needs a radius")
        if self.norm not in (NORM_NONE, NORM_BATCH, NORM_LAYER):
            raise ConfigMismatchError(f"unknown norm {self.norm!r}")
        if self.head == HEAD_NODE and self.pooling != POOL_NONE:
            raise ConfigMismatchError("node head is incompatible with pooling")
        if self.head == HEAD_GRAPH and self.pooling == POOL_NONE:
            raise ConfigMismatchError("graph head needs a pooling mode")
        if self.head not in (HEAD_NODE, HEAD_GRAPH):
            raise ConfigMismatchError(f"unknown head {self.head!r}")
        if self.aggregation not in (AGG_SCALED_MEAN, AGG_SUM):
            raise ConfigMismatchError(f"unknown aggregation {self.aggregation!r}")

    @property
    def pe_width(self) -> int:
        return self.pe_k if self.pe_kind == RRWP else 1


def compute_field(cfg: ModelConfig, g: Graph) -> PseudoCoordinateField:
    if cfg.pe_kind == RRWP:
        field = rrwp(g, cfg.pe_k, rescale=cfg.rescale_pe)
    elif cfg.pe_kind == SPD:
        field = spd_field(g)
    else:
        field = rd_field(g)
    if cfg.standardize_pe:
        field = standardize_field(field)
    return field


def stem_inputs(
    g: Graph, field: PseudoCoordinateField
) -> tuple[np.ndarray, PairBatch]:
    """Assemble raw stem inputs: per-node features and the pair batch.

    Node rows are [node_attrs | field diagonal]; pair coordinate rows are
    [edge_attrs-or-zeros | field values] in support order.
    """
    diag = field.diagonal()
    if g.node_attrs is not None:
        node_input = np.concatenate([g.node_attrs, diag], axis=1)
    else:
        node_input = diag
    # Callers needing a non-global support build their own batch.
    batch = build_pair_batch(g, field, make_support(g, GLOBAL))
    return node_input, batch


def _make_norm(kind: str, dim: int, name: str):
    if kind == NORM_BATCH:
        return BatchNorm(dim, name)
    if kind == NORM_LAYER:
        return LayerNorm(dim, name)
    return None


class FFN:
    """Position-wise feed-forward: FC(d -> ratio*d) -> act -> FC(-> d)."""

    def __init__(self, rng, dim: int, ratio: int, activation: str, name: str):
        inner = ratio * dim
        self.activation = activation
        self.w1 = Parameter(ad.uniform_init(rng, inner, dim), f"{name}.fc1.w")
        self.b1 = Parameter(np.zeros(inner), f"{name}.fc1.b")
        self.w2 = Parameter(ad.uniform_init(rng, dim, inner), f"{name}.fc2.w")
        self.b2 = Parameter(np.zeros(dim), f"{name}.fc2.b")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.fc(x, self.w1, self.b1)
        h = ad.ACTIVATIONS[self.activation](h)
        return ad.fc(h, self.w2, self.b2)


class ConvBlock:
    """Residual conv + norm, then residual FFN + norm."""

    def __init__(self, rng, cfg: ModelConfig, kernel_in_dim: int, name: str):
        d = cfg.hidden_dim
        kernel_cfg = KernelConfig(
            in_dim=kernel_in_dim,
            hidden_dim=cfg.kernel_hidden or d,
            out_dim=d,
            num_mlp_blocks=cfg.kernel_blocks,
            norm=cfg.kernel_norm,
            activation=cfg.activation,
            constraint=cfg.constraint,
            dropout=cfg.dropout,
            final_weight_scale=cfg.kernel_final_scale,
        )
        self.cfg = cfg
        self.conv = ConvLayer(
            rng,
            channels=d,
            kernel_cfg=kernel_cfg,
            scaler=cfg.scaler,
            aggregation=cfg.aggregation,
            name=f"{name}.conv",
        )
        self.norm1 = _make_norm(cfg.norm, d, f"{name}.norm1")
        self.ffn = FFN(rng, d, cfg.ffn_ratio, cfg.activation, f"{name}.ffn") if cfg.ffn else None
        self.norm2 = _make_norm(cfg.norm, d, f"{name}.norm2")

    def parameters(self):
        params = self.conv.parameters()
        for piece in (self.norm1, self.ffn, self.norm2):
            if piece is not None:
                params.extend(piece.parameters())
        return params

    def forward(
        self,
        x: Tensor,
        batch: PairBatch,
        degrees: np.ndarray,
        training: bool,
        update_stats: bool = True,
    ) -> Tensor:
        h = self.conv.forward(x, batch, degrees, training, update_stats=update_stats)
        x = ad.add(x, h) if self.cfg.residuals else h
        if self.norm1 is not None:
            x = self.norm1(x, training, update_stats=update_stats)
        if self.ffn is not None:
            f = self.ffn(x)
            x = ad.add(x, f) if self.cfg.residuals else f
        if self.norm2 is not None:
            x = self.norm2(x, training, update_stats=update_stats)
        return x


@dataclass
class GraphContext:
    """Per-graph constants a model reuses across forward passes."""

    node_input: np.ndarray
    batch: PairBatch
    degrees: np.ndarray


class CKGCN:
    """A continuous-kernel graph convolution network."""

    def __init__(
        self,
        cfg: ModelConfig,
        rng: np.random.Generator,
        node_attr_dim: int = 0,
        edge_attr_dim: int = 0,
    ):
        self.cfg = cfg
        self.node_attr_dim = node_attr_dim
        self.edge_attr_dim = edge_attr_dim
        d = cfg.hidden_dim
        stem_in = node_attr_dim + cfg.pe_width
        kernel_in = edge_attr_dim + cfg.pe_width
        self.stem_w = Parameter(ad.uniform_init(rng, d, stem_in), "stem.w")
        self.stem_b = Parameter(np.zeros(d), "stem.b")
        self.blocks = [
            ConvBlock(rng, cfg, kernel_in, name=f"block{i}")
            for i in range(cfg.num_blocks)
        ]
        self.head_w = Parameter(ad.uniform_init(rng, cfg.num_outputs, d), "head.w")
        self.head_b = Parameter(np.zeros(cfg.num_outputs), "head.b")
        # Keyed by id() but storing the graph itself keeps the id valid.
        self._contexts: dict[int, tuple[Graph, GraphContext]] = {}

    def parameters(self) -> list[Parameter]:
        params = [self.stem_w, self.stem_b]
        for blk in self.blocks:
            params.extend(blk.parameters())
        params.extend([self.head_w, self.head_b])
        return params

    def prepare(self, g: Graph) -> GraphContext:
        cached = self._contexts.get(id(g))
        if cached is not None and cached[0] is g:
            return cached[1]
        cfg = self.cfg
        field = compute_field(cfg, g)
        support = make_support(
            g, cfg.support, cfg.support_k if cfg.support == KHOP else None
        )
        batch = build_pair_batch(g, field, support)
        diag = field.diagonal()
        attr_dim = 0 if g.node_attrs is None else g.node_attrs.shape[1]
        if attr_dim != self.node_attr_dim:
            raise WidthMismatchError(
                f"model built for node attr width {self.node_attr_dim}, "
                f"graph has {attr_dim}"
            )
        edge_dim = 0 if g.edge_attrs is None else g.edge_attrs.shape[1]
        if edge_dim != self.edge_attr_dim:
            raise WidthMismatchError(
                f"model built for edge attr width {self.edge_attr_dim}, "
                f"graph has {edge_dim}"
            )
        node_input = (
            np.concatenate([g.node_attrs, diag], axis=1)
            if g.node_attrs is not None
            else diag
        )
        ctx = GraphContext(
            node_input=node_input, batch=batch, degrees=degree_vector(g)
        )
        self._contexts[id(g)] = (g, ctx)
        return ctx

    def forward(self, g: Graph, training: bool = False, update_stats: bool = True) -> Tensor:
        ctx = self.prepare(g)
        x = ad.fc(ad.const(ctx.node_input), self.stem_w, self.stem_b)
        for blk in self.blocks:
            x = blk.forward(x, ctx.batch, ctx.degrees, training, update_stats=update_stats)
        if self.cfg.pooling == POOL_MEAN:
            x = ad.mean_(x, axis=0, keepdims=True)
        elif self.cfg.pooling == POOL_SUM:
            x = ad.sum_(x, axis=0, keepdims=True)
        return ad.fc(x, self.head_w, self.head_b)

    # -- checkpointing ----------------------------------------------------

    def state_dict(self) -> dict:
        return {
            p.name: {"values": p.data.ravel().tolist(), "shape": list(p.data.shape)}
            for p in self.parameters()
        }

    def load_state_dict(self, state: dict) -> None:
        for p in self.parameters():
            entry = state[p.name]
            p.data = np.asarray(entry["values"], dtype=np.float64).reshape(
                entry["shape"]
            )


class GCNNet:
    """Baseline stack of degree-normalized message-passing layers.

    All-convolutional: hidden layers are act(A_hat x W + b) and the output
    logits come from one more propagation, A_hat h W_head + b_head.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        num_layers: int,
        in_dim: int,
        hidden_dim: int,
        num_outputs: int = 1,
        activation: str = "relu",
    ):
        self.activation = activation
        self.layers: list[tuple[Parameter, Parameter]] = []
        width_in = in_dim
        for i in range(num_layers):
            w = Parameter(ad.uniform_init(rng, hidden_dim, width_in), f"layer{i}.w")
            b = Parameter(np.zeros(hidden_dim), f"layer{i}.b")
            self.layers.append((w, b))
            width_in = hidden_dim
        self.head_w = Parameter(ad.uniform_init(rng, num_outputs, width_in), "head.w")
        self.head_b = Parameter(np.zeros(num_outputs), "head.b")
        self._norm_adj: dict[int, tuple[Graph, np.ndarray]] = {}

    def parameters(self) -> list[Parameter]:
        params = []
        for w, b in self.layers:
            params.extend([w, b])
        params.extend([self.head_w, self.head_b])
        return params

    def forward(self, g: Graph, training: bool = False, update_stats: bool = True) -> Tensor:
        cached = self._norm_adj.get(id(g))
        if cached is not None and cached[0] is g:
            a_hat = cached[1]
        else:
            a_hat = gcn_norm_adjacency(g)
            self._norm_adj[id(g)] = (g, a_hat)
        if g.node_attrs is None:
            raise WidthMismatchError("baseline network needs node attributes")
        prop = ad.const(a_hat)
        x = ad.const(g.node_attrs)
        act = ad.ACTIVATIONS[self.activation]
        for w, b in self.layers:
            x = act(ad.add(ad.fc(ad.matmul(prop, x), w), b))
        return ad.add(ad.fc(ad.matmul(prop, x), self.head_w), self.head_b)
