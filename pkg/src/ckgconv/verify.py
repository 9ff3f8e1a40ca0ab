"""Reusable verification batteries: constructive identities and gradients.

Each check returns a :class:`CheckResult` with the worst observed error so
the same code can back both the CLI property-suite run and the test suite,
which pins the tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .conv import (
    AGG_SCALED_MEAN,
    SCALER_PE_INJECTED,
    build_pair_batch,
    conv_global_efficient,
    conv_scalar,
    degree_scaler_pe,
    global_pair_batch,
)
from .coords import GLOBAL, make_support, rrwp
from .graph import Graph, adjacency_matrix, build_graph, degree_vector
from .kernels import (
    KernelConfig,
    KernelFunction,
    NORM_LAYER,
    NORM_NONE,
    kernel_eval,
    linear_kernel,
    segment_softmax,
)
from .network import CKGCN, ModelConfig
from .rng import make_rng
from .training import bce_loss


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: max error {self.max_error:.3e} "
            f"(tolerance {self.tolerance:.1e})"
        )


# ---------------------------------------------------------------------------
# Random graph helpers
# ---------------------------------------------------------------------------

def random_graph(rng: np.random.Generator, n_min: int = 4, n_max: int = 16) -> Graph:
    """An Erdos-Renyi style graph; may be disconnected, never empty."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < 0.35
    ]
    return build_graph(n, edges)


def random_connected_graph(
    rng: np.random.Generator, n_min: int = 4, n_max: int = 10
) -> Graph:
    """A connected random graph: a random spanning tree plus extra edges."""
    n = int(rng.integers(n_min, n_max + 1))
    order = rng.permutation(n)
    edges = set()
    for idx in range(1, n):
        anchor = order[int(rng.integers(0, idx))]
        edges.add((min(order[idx], anchor), max(order[idx], anchor)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.2:
                edges.add((i, j))
    return build_graph(n, sorted(edges))


# ---------------------------------------------------------------------------
# Constructive identities
# ---------------------------------------------------------------------------

def check_efficient_equivalence(
    num_graphs: int = 50, seed: int = 1234, tolerance: float = 1e-9
) -> CheckResult:
    """Sparse rewrite of the global convolution vs the naive form.

    Kernels are random two-block MLPs; row-wise normalization is used so
    the kernel's value on a pair does not depend on which other pairs are
    in the evaluation batch.
    """
    rng = make_rng(seed)
    worst = 0.0
    for idx in range(num_graphs):
        g = random_graph(rng, 4, 16)
        k = int(rng.integers(1, 6))
        field = rrwp(g, k)
        kernel_norm = NORM_LAYER if idx % 2 == 0 else NORM_NONE
        kernel = KernelFunction(
            KernelConfig(
                in_dim=k,
                hidden_dim=8,
                out_dim=1,
                num_mlp_blocks=2,
                norm=kernel_norm,
            ),
            rng,
            name="check_kernel",
        )
        x = rng.normal(size=g.n)
        bias = float(rng.normal())
        batch = global_pair_batch(g, field)
        naive = conv_scalar(
            ad.const(x[:, None]),
            kernel,
            batch,
            bias=ad.const(np.array([bias])),
            training=False,
        ).data.ravel()
        efficient = conv_global_efficient(x, kernel, field, bias=bias)
        worst = max(worst, float(np.abs(naive - efficient).max()))
    return CheckResult("efficient global convolution == naive", worst, tolerance)


def check_set_network_degeneration(
    num_instances: int = 50, seed: int = 99, tolerance: float = 1e-10
) -> CheckResult:
    """Rescaled 1-step walk coordinates + affine kernel = equivariant set map.

    With a single coordinate channel (the rescaled identity indicator: n on
    the diagonal, 0 elsewhere) and kernel psi(p) = gamma p + beta, the
    global convolution collapses to out(i) = gamma x(i) + beta mean(x) + b.
    """
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(num_instances):
        g = random_graph(rng, 3, 12)
        field = rrwp(g, 1, rescale=True)
        gamma = float(rng.normal())
        beta = float(rng.normal())
        b = float(rng.normal())
        kernel = linear_kernel(np.array([[gamma]]), np.array([beta]))
        batch = global_pair_batch(g, field)
        x = rng.normal(size=g.n)
        got = conv_scalar(
            ad.const(x[:, None]),
            kernel,
            batch,
            bias=ad.const(np.array([b])),
            training=False,
        ).data.ravel()
        want = gamma * x + beta * x.mean() + b
        worst = max(worst, float(np.abs(got - want).max()))
    return CheckResult("set-network degeneration", worst, tolerance)


def check_spectral_equivalence(
    num_instances: int = 50, seed: int = 7, tolerance: float = 1e-8
) -> CheckResult:
    """Polynomial filters in the normalized adjacency via degree injection.

    For coefficients theta_0..theta_{K-1}, the filter sum_k theta_k A_sym^k x
    (A_sym = D^-1/2 A D^-1/2) equals a global scalar convolution whose
    affine kernel has weights n*theta (compensating the support mean) on
    walk coordinates with degree factors sqrt(d_i), 1/sqrt(d_j) injected.
    """
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(num_instances):
        g = random_connected_graph(rng, 3, 10)
        order = int(rng.integers(1, 5))
        theta = rng.normal(size=order)
        x = rng.normal(size=g.n)

        a = adjacency_matrix(g)
        d = a.sum(axis=1)
        inv_root = 1.0 / np.sqrt(d)
        a_sym = inv_root[:, None] * a * inv_root[None, :]
        want = np.zeros(g.n)
        power = np.eye(g.n)
        for k in range(order):
            want = want + theta[k] * (power @ x)
            power = power @ a_sym

        field = rrwp(g, order)
        batch = global_pair_batch(g, field)
        kernel = linear_kernel((g.n * theta)[None, :], np.zeros(1))
        degrees = degree_vector(g)
        coords = degree_scaler_pe(
            batch.coords,
            ad.const(np.zeros(order)),
            ad.const(np.ones(order)),
            ad.const(np.ones(order)),
            degrees[batch.center],
            degrees[batch.neighbor],
        )
        got = conv_scalar(
            ad.const(x[:, None]), kernel, batch, coords=coords, training=False
        ).data.ravel()
        worst = max(worst, float(np.abs(got - want).max()))
    return CheckResult("spectral filter equivalence", worst, tolerance)


def _degree_heterogeneous_graph() -> Graph:
    """Connected 8-node graph with degrees ranging from 1 to 4."""
    return build_graph(
        8, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (4, 5), (5, 6), (6, 7)]
    )


def check_layernorm_degree_cancellation(
    seed: int = 21, tolerance: float = 1e-10
) -> tuple[CheckResult, float]:
    """Row-wise standardization erases the support-size factor between
    sum- and mean-aggregated convolutions; batch standardization does not.

    Returns the sum/mean agreement check plus the batch-norm disagreement
    (which the caller expects to be large).
    """
    g = _degree_heterogeneous_graph()
    rng = make_rng(seed)
    field = rrwp(g, 4)
    support = make_support(g, "khop", 1)
    batch = build_pair_batch(g, field, support)
    kernel = KernelFunction(
        KernelConfig(in_dim=4, hidden_dim=6, out_dim=3, num_mlp_blocks=1),
        rng,
        name="ln_check_kernel",
    )
    x = ad.const(rng.normal(size=(g.n, 3)))

    def conv(aggregation: str) -> Tensor:
        coeff = kernel_eval(kernel, batch.coords, training=False)
        msgs = ad.mul(ad.gather(x, batch.neighbor), coeff)
        agg = ad.segment_sum(msgs, batch.center, batch.n)
        if aggregation == "mean":
            agg = ad.div(agg, ad.const(batch.counts[:, None].astype(float)))
        return agg

    ln = ad.LayerNorm(3, "ln_check", eps=0.0)
    ln_sum = ln.normalized(conv("sum")).data
    ln_mean = ln.normalized(conv("mean")).data
    ln_err = float(np.abs(ln_sum - ln_mean).max())

    bn = ad.BatchNorm(3, "bn_check", eps=0.0)
    bn_sum = bn(conv("sum"), training=True, update_stats=False).data
    bn_mean = bn(conv("mean"), training=True, update_stats=False).data
    bn_gap = float(np.abs(bn_sum - bn_mean).max())

    return (
        CheckResult("layer-norm degree cancellation", ln_err, tolerance),
        bn_gap,
    )


# ---------------------------------------------------------------------------
# Permutation equivariance
# ---------------------------------------------------------------------------

def permute_graph(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes: new id of old node v is perm[v]."""
    edges = [(int(perm[u]), int(perm[v])) for u, v in g.edges]
    inv = np.argsort(perm)

    def permute_rows(arr):
        return None if arr is None else arr[inv]

    reordered_edges = sorted((min(e), max(e)) for e in edges)
    edge_attrs = None
    if g.edge_attrs is not None:
        # Map each permuted edge back to its original attribute row.
        lookup = {}
        for row, (u, v) in zip(g.edge_attrs, g.edges):
            a, b = int(perm[u]), int(perm[v])
            lookup[(min(a, b), max(a, b))] = row
        edge_attrs = np.stack([lookup[e] for e in reordered_edges])
    return build_graph(
        g.n,
        reordered_edges,
        node_attrs=permute_rows(g.node_attrs),
        edge_attrs=edge_attrs,
        node_labels=permute_rows(g.node_labels),
    )


def check_equivariance(
    num_graphs: int = 10,
    num_perms: int = 20,
    seed: int = 5,
    tolerance: float = 1e-8,
) -> CheckResult:
    """Model outputs must permute with the nodes (and pooled outputs not at all)."""
    rng = make_rng(seed)
    worst = 0.0
    cfg = ModelConfig(
        num_blocks=2,
        hidden_dim=6,
        pe_k=4,
        norm="batch",
        scaler="post_degree",
        head="node",
        num_outputs=2,
    )
    pooled_cfg = ModelConfig(
        num_blocks=1,
        hidden_dim=6,
        pe_k=4,
        head="graph",
        pooling="mean",
        num_outputs=1,
    )
    for _ in range(num_graphs):
        g = random_graph(rng, 4, 10)
        attrs = rng.normal(size=(g.n, 2))
        g = build_graph(g.n, g.edges, node_attrs=attrs)
        model = CKGCN(cfg, make_rng(int(rng.integers(1 << 30))), node_attr_dim=2)
        pooled = CKGCN(pooled_cfg, make_rng(int(rng.integers(1 << 30))), node_attr_dim=2)
        base = model.forward(g, training=True, update_stats=False).data
        base_pooled = pooled.forward(g, training=False).data
        for _ in range(num_perms):
            perm = rng.permutation(g.n)
            pg = permute_graph(g, perm)
            out = model.forward(pg, training=True, update_stats=False).data
            worst = max(worst, float(np.abs(out[perm] - base).max()))
            out_pooled = pooled.forward(pg, training=False).data
            worst = max(worst, float(np.abs(out_pooled - base_pooled).max()))
    return CheckResult("permutation equivariance", worst, tolerance)


def check_walk_coordinate_invariants(
    num_graphs: int = 50, seed: int = 77, tolerance: float = 1e-12
) -> tuple[CheckResult, bool]:
    """Per-power row sums are 1 (pre-rescale); channel 0 is the identity.

    Returns the row-sum check and whether channel 0 matched the identity
    exactly (bitwise) on every sampled graph.
    """
    rng = make_rng(seed)
    worst = 0.0
    exact_identity = True
    for _ in range(num_graphs):
        g = random_connected_graph(rng, 3, 12)
        k = int(rng.integers(1, 7))
        field = rrwp(g, k)
        sums = field.values.sum(axis=1)
        worst = max(worst, float(np.abs(sums - 1.0).max()))
        if not np.array_equal(field.values[:, :, 0], np.eye(g.n)):
            exact_identity = False
    return CheckResult("walk coordinate row sums", worst, tolerance), exact_identity


# ---------------------------------------------------------------------------
# Gradient battery
# ---------------------------------------------------------------------------

def gradient_battery(
    points_per_op: int = 10, seed: int = 11, h: float = 1e-6
) -> list[CheckResult]:
    """Central-difference checks for every differentiable op and a full block.

    Piecewise-linear kinks (relu, clip) are sampled away from their corners,
    where the comparison is meaningful.
    """
    rng = make_rng(seed)
    results = []

    def run(name, make_case, tolerance=1e-5):
        worst = 0.0
        for _ in range(points_per_op):
            f, x = make_case()
            worst = max(worst, ad.grad_check(f, x, h=h))
        results.append(CheckResult(f"grad {name}", worst, tolerance))

    def rand(shape, away_from_zero=False):
        data = rng.normal(size=shape)
        if away_from_zero:
            data = np.where(np.abs(data) < 1e-3, data + np.sign(data + 0.5), data)
        return Tensor(data)

    def case_binary(op):
        def make():
            other = ad.const(rng.normal(size=(3, 4)))
            x = rand((3, 4))
            return (lambda t: ad.sum_(op(t, other))), x

        return make

    run("add", case_binary(ad.add))
    run("sub", case_binary(ad.sub))
    run("mul", case_binary(ad.mul))

    def make_div():
        other = ad.const(rng.normal(size=(3, 4)) + 3.0)
        x = rand((3, 4))
        return (lambda t: ad.sum_(ad.div(t, other))), x

    run("div", make_div)

    def make_div_denominator():
        numer = ad.const(rng.normal(size=(3, 4)))
        x = Tensor(rng.normal(size=(3, 4)) + 3.0)
        return (lambda t: ad.sum_(ad.div(numer, t))), x

    run("div (denominator)", make_div_denominator)
    run("neg", lambda: ((lambda t: ad.sum_(ad.neg(t))), rand((3, 4))))

    def make_matmul():
        other = ad.const(rng.normal(size=(4, 2)))
        x = rand((3, 4))
        return (lambda t: ad.sum_(ad.matmul(t, other))), x

    run("matmul", make_matmul)

    def make_fc():
        w = ad.const(rng.normal(size=(2, 4)))
        b = ad.const(rng.normal(size=2))
        x = rand((3, 4))
        return (lambda t: ad.sum_(ad.mul(ad.fc(t, w, b), ad.fc(t, w, b)))), x

    run("fc", make_fc)

    def make_fc_weights():
        x = ad.const(rng.normal(size=(3, 4)))
        w = Tensor(rng.normal(size=(2, 4)))
        return (lambda t: ad.sum_(ad.exp_(ad.mul(ad.fc(x, t), ad.const(0.3))))), w

    run("fc (weights)", make_fc_weights)

    def make_sum_axis():
        w = ad.const(rng.normal(size=4))
        x = rand((3, 4))
        return (lambda t: ad.sum_(ad.mul(ad.sum_(t, axis=0), w))), x

    run("sum axis", make_sum_axis)
    run("mean axis", lambda: ((lambda t: ad.sum_(ad.mul(ad.mean_(t, axis=1, keepdims=True), t))), rand((3, 4))))
    run("exp", lambda: ((lambda t: ad.sum_(ad.exp_(t))), rand((3, 4))))

    def make_log():
        x = Tensor(np.abs(rng.normal(size=(3, 4))) + 0.5)
        return (lambda t: ad.sum_(ad.log_(t))), x

    run("log", make_log)

    def make_sqrt():
        x = Tensor(np.abs(rng.normal(size=(3, 4))) + 0.5)
        return (lambda t: ad.sum_(ad.sqrt_(t))), x

    run("sqrt", make_sqrt)

    def make_clip():
        x = Tensor(rng.normal(size=(3, 4)) * 2.0)
        # Nudge points off the clip corners
        x.data = np.where(np.abs(np.abs(x.data) - 1.0) < 1e-3, x.data * 1.5, x.data)
        return (lambda t: ad.sum_(ad.clip_(t, -1.0, 1.0))), x

    run("clip", make_clip)

    def make_relu():
        x = Tensor(rng.normal(size=(3, 4)))
        x.data = np.where(np.abs(x.data) < 1e-4, x.data + 0.01, x.data)
        return (lambda t: ad.sum_(ad.relu(t))), x

    run("relu", make_relu)
    run("gelu", lambda: ((lambda t: ad.sum_(ad.gelu(t))), rand((3, 4))))
    run("softplus", lambda: ((lambda t: ad.sum_(ad.softplus(t))), rand((3, 4))))
    run("sigmoid", lambda: ((lambda t: ad.sum_(ad.sigmoid(t))), rand((3, 4))))

    idx = np.array([0, 2, 1, 2, 0])

    def make_gather():
        x = rand((3, 4))
        w = ad.const(rng.normal(size=(5, 4)))
        return (lambda t: ad.sum_(ad.mul(ad.gather(t, idx), w))), x

    run("gather", make_gather)

    seg = np.array([0, 0, 1, 2, 2])

    def make_segment_sum():
        x = rand((5, 3))
        w = ad.const(rng.normal(size=(3, 3)))
        return (lambda t: ad.sum_(ad.mul(ad.segment_sum(t, seg, 3), w))), x

    run("segment_sum", make_segment_sum)

    def make_segment_softmax():
        x = rand((5, 2))
        w = ad.const(rng.normal(size=(5, 2)))
        return (lambda t: ad.sum_(ad.mul(segment_softmax(t, seg, 3), w))), x

    run("segment softmax", make_segment_softmax)

    def make_batch_norm():
        bn = ad.BatchNorm(4, "grad_bn")
        bn.gamma.data = rng.normal(size=4)
        bn.beta.data = rng.normal(size=4)
        w = ad.const(rng.normal(size=(6, 4)))
        x = rand((6, 4))
        return (
            lambda t: ad.sum_(ad.mul(bn(t, training=True, update_stats=False), w))
        ), x

    run("batch_norm", make_batch_norm)

    def make_layer_norm():
        ln = ad.LayerNorm(4, "grad_ln")
        ln.gamma.data = rng.normal(size=4)
        ln.beta.data = rng.normal(size=4)
        w = ad.const(rng.normal(size=(6, 4)))
        x = rand((6, 4))
        return (lambda t: ad.sum_(ad.mul(ln(t), w))), x

    run("layer_norm", make_layer_norm)

    def make_bce():
        y = ad.const((rng.random(size=(6, 1)) > 0.5).astype(float))
        x = rand((6, 1))
        return (lambda t: bce_loss(ad.sigmoid(t), y)), x

    run("bce(sigmoid)", make_bce)

    # Full convolution block: loss gradient wrt every parameter.
    results.append(block_gradient_check(seed=seed + 1, h=h))
    return results


def block_gradient_check(seed: int = 3, h: float = 1e-6, tolerance: float = 1e-5) -> CheckResult:
    """Finite-difference check through a full conv block (all parameters).

    The kernel normalizes with batch statistics rather than per-row ones:
    pairs beyond the random-walk horizon have all-zero coordinates, and
    normalizing such a constant row divides by sqrt(eps) with curvature
    too sharp for central differences at this step size to resolve (the
    analytic gradient is still correct there; see the per-op layer-norm
    check for row normalization).
    """
    rng = make_rng(seed)
    g = random_connected_graph(rng, 5, 7)
    attrs = rng.normal(size=(g.n, 2))
    g = build_graph(g.n, g.edges, node_attrs=attrs)
    cfg = ModelConfig(
        num_blocks=1,
        hidden_dim=4,
        pe_k=3,
        norm="layer",
        kernel_norm="batch",
        kernel_blocks=1,
        kernel_hidden=4,
        scaler="post_degree",
        head="node",
        num_outputs=1,
    )
    model = CKGCN(cfg, rng, node_attr_dim=2)
    targets = ad.const((rng.random(size=(g.n, 1)) > 0.5).astype(float))

    def loss_fn():
        logits = model.forward(g, training=True, update_stats=False)
        return bce_loss(ad.sigmoid(logits), targets)

    worst = ad.grad_check_params(loss_fn, model.parameters(), h=h)
    return CheckResult("grad full conv block", worst, tolerance)
