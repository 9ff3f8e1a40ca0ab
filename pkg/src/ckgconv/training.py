"""Optimizer, losses, and the two single-graph overfitting experiments.

Both experiments are tiny full-batch node-classification problems designed
to expose qualitative differences between convolution families:

* smoothing: alternating binary signals on a 6-cycle must be reproduced as
  labels; stacked blurring layers lose the signal with depth while
  sign-free continuous kernels keep it.
* edge detection: on an 8-cycle partitioned into two signal runs, the
  positive class is the set of nodes adjacent to the opposite signal;
  all-positive coefficient variants cannot express the required filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .conv import AGG_SCALED_MEAN, AGG_SUM, ConvLayer, build_pair_batch
from .coords import make_support, rrwp
from .errors import LengthMismatchError
from .graph import Graph, build_graph, degree_vector
from .kernels import (
    CONSTRAINT_NONE,
    CONSTRAINT_SOFTMAX,
    CONSTRAINT_SOFTPLUS,
    KernelConfig,
)
from .network import GCNNet
from .rng import make_rng

PROB_EPS = 1e-12


def bce_loss(probs, targets) -> Tensor:
    """Mean binary cross-entropy on probabilities (clamped away from 0/1)."""
    probs = ad._as_tensor(probs)
    targets = ad._as_tensor(targets)
    if probs.data.shape != targets.data.shape:
        raise LengthMismatchError(
            f"probs {probs.data.shape} vs targets {targets.data.shape}"
        )
    p = ad.clip_(probs, PROB_EPS, 1.0 - PROB_EPS)
    ll = ad.add(
        ad.mul(targets, ad.log_(p)),
        ad.mul(ad.sub(ad.const(1.0), targets), ad.log_(ad.sub(ad.const(1.0), p))),
    )
    return ad.neg(ad.mean_(ll))


def accuracy_from_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of correct predictions thresholding probability at 0.5.

    Equivalent to thresholding the logit at 0, so it is invariant to any
    positive rescaling of the logits.
    """
    preds = np.asarray(logits).ravel() > 0.0
    return float((preds == (np.asarray(targets).ravel() > 0.5)).mean())


class Adam:
    """Adam with bias correction and optional decoupled weight decay."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self._m[i] = b1 * self._m[i] + (1 - b1) * g
            self._v[i] = b2 * self._v[i] + (1 - b2) * g * g
            m_hat = self._m[i] / (1 - b1**self.t)
            v_hat = self._v[i] / (1 - b2**self.t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - self.lr * update


# ---------------------------------------------------------------------------
# Toy problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToySpec:
    name: str
    graph: Graph
    signals: np.ndarray
    labels: np.ndarray


def smoothing_toy() -> ToySpec:
    """6-cycle with signals alternating around the cycle; labels = signals."""
    signals = np.array([0.0, 1.0, 1.0, 0.0, 0.0, 1.0])
    g = build_graph(
        n=6,
        edges=[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)],
        node_attrs=signals,
        node_labels=signals,
    )
    return ToySpec("smoothing", g, signals, signals)


def edge_detection_toy() -> ToySpec:
    """8-cycle (two rows of four) with two signal runs; label 1 = border node."""
    signals = np.array([1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    labels = np.array([0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
    g = build_graph(
        n=8,
        edges=[(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6), (6, 7), (3, 7)],
        node_attrs=signals,
        node_labels=labels,
    )
    return ToySpec("edge-detection", g, signals, labels)


@dataclass
class ToyRunResult:
    experiment: str
    variant: str
    seed: int
    epoch_final: int
    loss: float
    accuracy: float
    losses: list[float] = dc_field(default_factory=list)

    def record(self) -> dict:
        return {
            "experiment": self.experiment,
            "variant": self.variant,
            "seed": self.seed,
            "epoch_final": self.epoch_final,
            "loss": self.loss,
            "accuracy": self.accuracy,
        }


def _train(model, spec: ToySpec, epochs: int, lr: float) -> tuple[list[float], float, float]:
    targets = ad.const(spec.labels[:, None])
    opt = Adam(model.parameters(), lr=lr)
    losses = []
    for _ in range(epochs):
        with Tape() as tape:
            logits = model.forward(spec.graph, training=True)
            loss = bce_loss(ad.sigmoid(logits), targets)
        opt.zero_grad()
        ad.backward(tape, loss)
        opt.step()
        losses.append(float(loss.data))
    final_logits = model.forward(spec.graph, training=False).data
    acc = accuracy_from_logits(final_logits, spec.labels)
    return losses, losses[-1], acc


class ConvStack:
    """Bare stack of continuous-kernel convolutions, mirroring ``GCNNet``.

    stem FC -> num_layers x [conv -> activation] -> head FC. Norms,
    residual connections, feed-forward blocks and dropout are deliberately
    absent so that depth effects of the convolution itself are exposed.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        num_layers: int,
        in_dim: int,
        hidden_dim: int,
        pe_k: int = 5,
        kernel_blocks: int = 1,
        kernel_hidden: int | None = None,
        constraint: str = CONSTRAINT_NONE,
        aggregation: str = AGG_SCALED_MEAN,
        activation: str = "gelu",
    ):
        self.pe_k = pe_k
        self.activation = ad.ACTIVATIONS[activation]
        self.stem_w = Parameter(ad.uniform_init(rng, hidden_dim, in_dim), "stem.w")
        self.stem_b = Parameter(np.zeros(hidden_dim), "stem.b")
        self.layers = []
        for i in range(num_layers):
            cfg = KernelConfig(
                in_dim=pe_k,
                hidden_dim=kernel_hidden or hidden_dim,
                out_dim=hidden_dim,
                num_mlp_blocks=kernel_blocks,
                norm="none",
                constraint=constraint,
            )
            self.layers.append(
                ConvLayer(rng, hidden_dim, cfg, aggregation=aggregation, name=f"conv{i}")
            )
        self.head_w = Parameter(ad.uniform_init(rng, 1, hidden_dim), "head.w")
        self.head_b = Parameter(np.zeros(1), "head.b")
        self._cache: tuple | None = None

    def parameters(self) -> list[Parameter]:
        params = [self.stem_w, self.stem_b]
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend([self.head_w, self.head_b])
        return params

    def _prepare(self, g: Graph):
        if self._cache is not None and self._cache[0] is g:
            return self._cache[1], self._cache[2]
        field = rrwp(g, self.pe_k, rescale=True)
        batch = build_pair_batch(g, field, make_support(g))
        degrees = degree_vector(g)
        self._cache = (g, batch, degrees)
        return batch, degrees

    def forward(self, g: Graph, training: bool = True) -> Tensor:
        batch, degrees = self._prepare(g)
        x = ad.fc(ad.const(g.node_attrs), self.stem_w, self.stem_b)
        for layer in self.layers:
            x = self.activation(layer.forward(x, batch, degrees, training=training))
        return ad.fc(x, self.head_w, self.head_b)


# -- smoothing experiment ----------------------------------------------------

SMOOTHING_DEPTHS = (2, 6)
SMOOTHING_HIDDEN = 16


def run_toy_smoothing(
    seeds=range(5),
    epochs: int = 200,
    lr: float = 1e-3,
    variants: tuple[str, ...] | None = None,
    keep_losses: bool = False,
) -> list[ToyRunResult]:
    """Train depth-2/6 blurring baselines and continuous-kernel nets."""
    spec = smoothing_toy()
    all_variants = [f"gcn-depth{d}" for d in SMOOTHING_DEPTHS] + [
        f"ckgcn-depth{d}" for d in SMOOTHING_DEPTHS
    ]
    chosen = all_variants if variants is None else list(variants)
    results = []
    for variant in chosen:
        depth = int(variant.rsplit("depth", 1)[1])
        for seed in seeds:
            rng = make_rng(seed)
            if variant.startswith("gcn"):
                model = GCNNet(
                    rng,
                    num_layers=depth,
                    in_dim=1,
                    hidden_dim=SMOOTHING_HIDDEN,
                    activation="relu",
                )
            else:
                model = ConvStack(
                    rng,
                    num_layers=depth,
                    in_dim=1,
                    hidden_dim=SMOOTHING_HIDDEN,
                )
            losses, final_loss, acc = _train(model, spec, epochs, lr)
            results.append(
                ToyRunResult(
                    experiment="toy-smoothing",
                    variant=variant,
                    seed=int(seed),
                    epoch_final=epochs,
                    loss=final_loss,
                    accuracy=acc,
                    losses=losses if keep_losses else [],
                )
            )
    return results


# -- edge-detection experiment -----------------------------------------------

EDGE_VARIANTS = ("ckgconv", "gcnconv", "softmax", "softplus")
EDGE_HIDDEN = 5


class SingleChannelConv:
    """One depthwise convolution on the raw signal; its output is the logit.

    The decision is monotone in the convolution output, so the experiment
    probes what the coefficient family itself can express: everything here
    hinges on whether the learned filter separates border from interior
    nodes with a single threshold.
    """

    def __init__(self, rng: np.random.Generator, constraint: str, aggregation: str):
        cfg = KernelConfig(
            in_dim=5,
            hidden_dim=EDGE_HIDDEN,
            out_dim=1,
            num_mlp_blocks=0,
            norm="none",
            constraint=constraint,
        )
        self.layer = ConvLayer(rng, 1, cfg, aggregation=aggregation, name="conv")
        self._cache: tuple | None = None

    def parameters(self) -> list[Parameter]:
        return self.layer.parameters()

    def forward(self, g: Graph, training: bool = True) -> Tensor:
        if self._cache is None or self._cache[0] is not g:
            field = rrwp(g, 5, rescale=True)
            batch = build_pair_batch(g, field, make_support(g))
            self._cache = (g, batch, degree_vector(g))
        _, batch, degrees = self._cache
        return self.layer.forward(
            ad.const(g.node_attrs), batch, degrees, training=training
        )


def _edge_model(variant: str, rng: np.random.Generator):
    # The unconstrained family needs a non-monotone readout to mark borders
    # (any filter of pairwise distances on this graph satisfies
    # y(b1)+y(b2) = y(i1)+y(i2) across the four node classes, so one
    # threshold on the conv output alone tops out at 6 of 8 nodes). The
    # constrained variants and the fixed-coefficient baseline are trained
    # as bare operators: with positive or fixed coefficients the point of
    # failure is the filter itself, and a logit head would mask it.
    if variant == "gcnconv":
        return GCNNet(rng, num_layers=0, in_dim=1, hidden_dim=EDGE_HIDDEN)
    if variant == "ckgconv":
        return ConvStack(
            rng,
            num_layers=1,
            in_dim=1,
            hidden_dim=EDGE_HIDDEN,
            kernel_blocks=0,
        )
    constraint = {
        "softmax": CONSTRAINT_SOFTMAX,
        "softplus": CONSTRAINT_SOFTPLUS,
    }[variant]
    aggregation = AGG_SUM if variant == "softmax" else AGG_SCALED_MEAN
    return SingleChannelConv(rng, constraint, aggregation)


def run_toy_edge_detection(
    seeds=range(5),
    epochs: int = 200,
    lr: float = 1e-2,
    variants: tuple[str, ...] | None = None,
    keep_losses: bool = False,
) -> list[ToyRunResult]:
    """Train one convolution operator per coefficient family."""
    spec = edge_detection_toy()
    chosen = EDGE_VARIANTS if variants is None else tuple(variants)
    results = []
    for variant in chosen:
        for seed in seeds:
            rng = make_rng(seed)
            model = _edge_model(variant, rng)
            losses, final_loss, acc = _train(model, spec, epochs, lr)
            results.append(
                ToyRunResult(
                    experiment="toy-edge-detection",
                    variant=variant,
                    seed=int(seed),
                    epoch_final=epochs,
                    loss=final_loss,
                    accuracy=acc,
                    losses=losses if keep_losses else [],
                )
            )
    return results
