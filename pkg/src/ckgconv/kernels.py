"""Continuous kernel functions: MLPs mapping pair coordinates to coefficients.

The kernel is what makes the convolution "continuous": instead of a table
of weights indexed by discrete offsets, a small residual MLP is evaluated
on the pseudo-coordinates of each node pair, producing one coefficient per
channel. Built from a stem FC, a stack of pre-norm residual blocks, and a
final norm + FC projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ConfigMismatchError, EmptyGroupError

NORM_NONE = "none"
NORM_BATCH = "batch"
NORM_LAYER = "layer"

CONSTRAINT_NONE = "none"
CONSTRAINT_SOFTMAX = "softmax"
CONSTRAINT_SOFTPLUS = "softplus"


@dataclass
class KernelConfig:
    in_dim: int
    hidden_dim: int
    out_dim: int
    num_mlp_blocks: int = 2
    norm: str = NORM_NONE
    activation: str = "gelu"
    constraint: str = CONSTRAINT_NONE
    dropout: float = 0.0
    final_weight_scale: float = 1.0

    def __post_init__(self):
        if self.in_dim < 1 or self.hidden_dim < 1 or self.out_dim < 1:
            raise ConfigMismatchError("kernel dims must be positive")
        if self.num_mlp_blocks < 0:
            raise ConfigMismatchError("num_mlp_blocks must be >= 0")
        if self.norm not in (NORM_NONE, NORM_BATCH, NORM_LAYER):
            raise ConfigMismatchError(f"unknown kernel norm {self.norm!r}")
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigMismatchError(f"unknown activation {self.activation!r}")
        if self.constraint not in (
            CONSTRAINT_NONE,
            CONSTRAINT_SOFTMAX,
            CONSTRAINT_SOFTPLUS,
        ):
            raise ConfigMismatchError(f"unknown constraint {self.constraint!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigMismatchError("dropout must be in [0, 1)")


def _make_norm(kind: str, dim: int, name: str):
    if kind == NORM_BATCH:
        return ad.BatchNorm(dim, name)
    if kind == NORM_LAYER:
        return ad.LayerNorm(dim, name)
    return None


@dataclass
class MlpBlockParams:
    norm1: object | None
    fc1_w: Parameter
    fc1_b: Parameter
    norm2: object | None
    fc2_w: Parameter
    fc2_b: Parameter


def mlp_block(
    x: Tensor,
    params: MlpBlockParams,
    activation: str = "gelu",
    training: bool = True,
    update_stats: bool = True,
    rng: np.random.Generator | None = None,
    drop: float = 0.0,
) -> Tensor:
    """Pre-norm residual block: x + FC(act(Norm(FC(act(Norm(x)))))).

    With zero weights and biases in both FCs the block is the identity.
    """
    h = x
    if params.norm1 is not None:
        h = params.norm1(h, training, update_stats=update_stats)
    h = ad.ACTIVATIONS[activation](h)
    h = ad.fc(h, params.fc1_w, params.fc1_b)
    if params.norm2 is not None:
        h = params.norm2(h, training, update_stats=update_stats)
    h = ad.ACTIVATIONS[activation](h)
    h = ad.fc(h, params.fc2_w, params.fc2_b)
    h = ad.dropout(h, drop, rng, training)
    return ad.add(x, h)


class KernelFunction:
    """psi: coordinate vector [in_dim] -> coefficient vector [out_dim].

    Structure: stem FC (in -> hidden), ``num_mlp_blocks`` residual blocks at
    the hidden width, then an optional norm and the final FC
    (hidden -> out). With zero blocks and no norms the whole map is exactly
    affine.
    """

    def __init__(self, cfg: KernelConfig, rng: np.random.Generator, name: str = "kernel"):
        self.cfg = cfg
        self.name = name
        r = cfg.hidden_dim
        self.stem_w = Parameter(ad.uniform_init(rng, r, cfg.in_dim), f"{name}.stem.w")
        self.stem_b = Parameter(np.zeros(r), f"{name}.stem.b")
        self.blocks: list[MlpBlockParams] = []
        for idx in range(cfg.num_mlp_blocks):
            prefix = f"{name}.block{idx}"
            self.blocks.append(
                MlpBlockParams(
                    norm1=_make_norm(cfg.norm, r, f"{prefix}.norm1"),
                    fc1_w=Parameter(ad.uniform_init(rng, r, r), f"{prefix}.fc1.w"),
                    fc1_b=Parameter(np.zeros(r), f"{prefix}.fc1.b"),
                    norm2=_make_norm(cfg.norm, r, f"{prefix}.norm2"),
                    fc2_w=Parameter(ad.uniform_init(rng, r, r), f"{prefix}.fc2.w"),
                    fc2_b=Parameter(np.zeros(r), f"{prefix}.fc2.b"),
                )
            )
        self.final_norm = _make_norm(cfg.norm, r, f"{name}.final_norm")
        final_w = ad.uniform_init(rng, cfg.out_dim, r) * cfg.final_weight_scale
        self.final_w = Parameter(final_w, f"{name}.final.w")
        self.final_b = Parameter(np.zeros(cfg.out_dim), f"{name}.final.b")

    def parameters(self) -> list[Parameter]:
        params = [self.stem_w, self.stem_b]
        for blk in self.blocks:
            if blk.norm1 is not None:
                params.extend(blk.norm1.parameters())
            params.extend([blk.fc1_w, blk.fc1_b])
            if blk.norm2 is not None:
                params.extend(blk.norm2.parameters())
            params.extend([blk.fc2_w, blk.fc2_b])
        if self.final_norm is not None:
            params.extend(self.final_norm.parameters())
        params.extend([self.final_w, self.final_b])
        return params

    def __call__(
        self,
        coords,
        training: bool = True,
        update_stats: bool = True,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        return kernel_eval(self, coords, training, update_stats=update_stats, rng=rng)


def kernel_eval(
    kernel: KernelFunction,
    coords,
    training: bool = True,
    update_stats: bool = True,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Evaluate the kernel on a batch of coordinate rows [m, in_dim]."""
    x = ad._as_tensor(coords)
    if x.data.ndim != 2 or x.data.shape[1] != kernel.cfg.in_dim:
        raise ConfigMismatchError(
            f"kernel {kernel.name} expects [m, {kernel.cfg.in_dim}] coords, "
            f"got {x.data.shape}"
        )
    h = ad.fc(x, kernel.stem_w, kernel.stem_b)
    for blk in kernel.blocks:
        h = mlp_block(
            h,
            blk,
            activation=kernel.cfg.activation,
            training=training,
            update_stats=update_stats,
            rng=rng,
            drop=kernel.cfg.dropout,
        )
    if kernel.final_norm is not None:
        h = kernel.final_norm(h, training, update_stats=update_stats)
    return ad.fc(h, kernel.final_w, kernel.final_b)


def linear_kernel(gamma, beta, rng: np.random.Generator | None = None) -> KernelFunction:
    """An exactly affine kernel psi(p) = gamma @ p + beta.

    ``gamma`` is [out_dim, in_dim], ``beta`` is [out_dim]. Built as a
    zero-block kernel whose stem is the identity.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.ndim != 2 or beta.shape != (gamma.shape[0],):
        raise ConfigMismatchError("linear_kernel needs gamma [out,in] and beta [out]")
    out_dim, in_dim = gamma.shape
    cfg = KernelConfig(
        in_dim=in_dim,
        hidden_dim=in_dim,
        out_dim=out_dim,
        num_mlp_blocks=0,
        norm=NORM_NONE,
    )
    rng = rng if rng is not None else np.random.default_rng(0)
    kernel = KernelFunction(cfg, rng, name="linear_kernel")
    kernel.stem_w.data = np.eye(in_dim)
    kernel.stem_b.data = np.zeros(in_dim)
    kernel.final_w.data = gamma.copy()
    kernel.final_b.data = beta.copy()
    return kernel


def segment_softmax(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax over rows sharing a segment id, per channel.

    The per-segment max is subtracted as a constant shift (softmax is
    shift-invariant) for numerical stability.
    """
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(segment_ids, minlength=num_segments)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise EmptyGroupError(f"softmax group {empty} has no members")
    shift = np.full((num_segments,) + x.data.shape[1:], -np.inf)
    np.maximum.at(shift, segment_ids, x.data)
    e = ad.exp_(ad.sub(x, ad.const(shift[segment_ids])))
    totals = ad.segment_sum(e, segment_ids, num_segments)
    return ad.div(e, ad.gather(totals, segment_ids))


def constrain_coefficients(
    coeff: Tensor,
    mode: str,
    segment_ids: np.ndarray | None = None,
    num_segments: int | None = None,
) -> Tensor:
    """Apply a positivity/normalization constraint to raw coefficients."""
    if mode == CONSTRAINT_NONE:
        return coeff
    if mode == CONSTRAINT_SOFTPLUS:
        return ad.softplus(coeff)
    if mode == CONSTRAINT_SOFTMAX:
        if segment_ids is None or num_segments is None:
            raise ConfigMismatchError("softmax constraint needs segment ids")
        return segment_softmax(coeff, segment_ids, num_segments)
    raise ConfigMismatchError(f"unknown constraint {mode!r}")
