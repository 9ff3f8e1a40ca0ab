"""Coordinate-to-coefficient kernel functions and their constraints."""

import numpy as np
import pytest
from scipy.special import softmax

import ckgconv.autodiff as ad
from ckgconv.errors import ConfigMismatchError, EmptyGroupError
from ckgconv.kernels import (
    CONSTRAINT_NONE,
    CONSTRAINT_SOFTMAX,
    CONSTRAINT_SOFTPLUS,
    KernelConfig,
    KernelFunction,
    constrain_coefficients,
    kernel_eval,
    linear_kernel,
    mlp_block,
    segment_softmax,
)
from ckgconv.rng import make_rng


# -- configuration ------------------------------------------------------------

def test_config_rejects_bad_values():
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=0, hidden_dim=4, out_dim=2)
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, num_mlp_blocks=-1)
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, norm="group")
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, activation="tanh")
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, constraint="simplex")
    with pytest.raises(ConfigMismatchError):
        KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, dropout=1.0)


# -- kernel structure ----------------------------------------------------------

def test_zero_block_no_norm_kernel_is_affine():
    """With no residual blocks and no norms, psi is affine: scaling inputs
    around a base point scales outputs linearly."""
    cfg = KernelConfig(in_dim=3, hidden_dim=5, out_dim=2, num_mlp_blocks=0)
    kernel = KernelFunction(cfg, make_rng(0))
    rng = make_rng(1)
    p = rng.standard_normal((4, 3))
    q = rng.standard_normal((4, 3))
    out_p = kernel(ad.const(p)).data
    out_q = kernel(ad.const(q)).data
    out_mix = kernel(ad.const(0.25 * p + 0.75 * q)).data
    np.testing.assert_allclose(out_mix, 0.25 * out_p + 0.75 * out_q, atol=1e-12)


def test_linear_kernel_matches_gamma_beta():
    gamma = np.array([[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]])
    beta = np.array([0.1, -0.2, 0.0])
    kernel = linear_kernel(gamma, beta)
    p = np.array([[2.0, 1.0], [0.0, -1.0]])
    np.testing.assert_allclose(kernel(ad.const(p)).data, p @ gamma.T + beta, atol=1e-14)
    with pytest.raises(ConfigMismatchError):
        linear_kernel(gamma, np.zeros(2))


def test_kernel_checks_coordinate_width():
    cfg = KernelConfig(in_dim=3, hidden_dim=4, out_dim=2)
    kernel = KernelFunction(cfg, make_rng(0))
    with pytest.raises(ConfigMismatchError):
        kernel_eval(kernel, ad.const(np.zeros((5, 4))))


def test_mlp_block_with_zero_weights_is_identity():
    cfg = KernelConfig(in_dim=2, hidden_dim=4, out_dim=2, num_mlp_blocks=1)
    kernel = KernelFunction(cfg, make_rng(3))
    blk = kernel.blocks[0]
    for p in (blk.fc1_w, blk.fc1_b, blk.fc2_w, blk.fc2_b):
        p.data[:] = 0.0
    x = ad.const(make_rng(4).standard_normal((6, 4)))
    np.testing.assert_array_equal(mlp_block(x, blk).data, x.data)


def test_parameter_names_are_unique():
    cfg = KernelConfig(in_dim=2, hidden_dim=3, out_dim=2, num_mlp_blocks=2, norm="layer")
    kernel = KernelFunction(cfg, make_rng(5), name="k")
    names = [p.name for p in kernel.parameters()]
    assert len(names) == len(set(names))
    assert all(n.startswith("k.") for n in names)


def test_kernel_init_is_seed_deterministic():
    cfg = KernelConfig(in_dim=3, hidden_dim=6, out_dim=4, num_mlp_blocks=1)
    k1 = KernelFunction(cfg, make_rng(77))
    k2 = KernelFunction(cfg, make_rng(77))
    for a, b in zip(k1.parameters(), k2.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_final_weight_scale_shrinks_last_layer():
    cfg_base = KernelConfig(in_dim=2, hidden_dim=4, out_dim=3, num_mlp_blocks=0)
    cfg_small = KernelConfig(
        in_dim=2, hidden_dim=4, out_dim=3, num_mlp_blocks=0, final_weight_scale=0.01
    )
    k_base = KernelFunction(cfg_base, make_rng(9))
    k_small = KernelFunction(cfg_small, make_rng(9))
    np.testing.assert_allclose(k_small.final_w.data, 0.01 * k_base.final_w.data)


def test_kernel_gradients_against_finite_differences():
    cfg = KernelConfig(in_dim=3, hidden_dim=4, out_dim=2, num_mlp_blocks=1)
    kernel = KernelFunction(cfg, make_rng(11))
    coords = make_rng(12).standard_normal((5, 3))

    def loss_fn():
        out = kernel_eval(kernel, ad.const(coords))
        return ad.sum_(ad.mul(out, out))

    assert ad.grad_check_params(loss_fn, kernel.parameters()) < 1e-6


# -- constraints ----------------------------------------------------------------

def test_segment_softmax_matches_scipy_per_group():
    rng = make_rng(13)
    x = rng.standard_normal((7, 2))
    seg = np.array([0, 0, 1, 1, 1, 2, 2])
    out = segment_softmax(ad.const(x), seg, 3).data
    for s in range(3):
        rows = seg == s
        np.testing.assert_allclose(out[rows], softmax(x[rows], axis=0), atol=1e-12)
    np.testing.assert_allclose(
        np.add.reduceat(out, [0, 2, 5], axis=0), 1.0, atol=1e-12
    )


def test_segment_softmax_is_shift_invariant_and_stable():
    x = np.array([[1000.0], [1001.0], [-1000.0]])
    seg = np.array([0, 0, 1])
    out = segment_softmax(ad.const(x), seg, 2).data
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out[:2, 0], softmax([0.0, 1.0]), atol=1e-12)
    assert out[2, 0] == 1.0


def test_segment_softmax_rejects_empty_groups():
    with pytest.raises(EmptyGroupError):
        segment_softmax(ad.const(np.zeros((2, 1))), np.array([0, 2]), 3)


def test_segment_softmax_gradient():
    seg = np.array([0, 0, 0, 1, 1])

    def f(x):
        out = segment_softmax(x, seg, 2)
        w = np.arange(10.0).reshape(5, 2)
        return ad.sum_(ad.mul(out, ad.const(w)))

    x = ad.Tensor(make_rng(14).standard_normal((5, 2)))
    assert ad.grad_check(f, x) < 1e-7


def test_constrain_coefficients_modes():
    rng = make_rng(15)
    raw = rng.standard_normal((6, 3))
    seg = np.array([0, 0, 0, 1, 1, 1])

    out_none = constrain_coefficients(ad.const(raw), CONSTRAINT_NONE)
    np.testing.assert_array_equal(out_none.data, raw)

    out_pos = constrain_coefficients(ad.const(raw), CONSTRAINT_SOFTPLUS)
    assert (out_pos.data > 0).all()
    np.testing.assert_allclose(out_pos.data, np.logaddexp(0.0, raw), atol=1e-14)

    out_sm = constrain_coefficients(
        ad.const(raw), CONSTRAINT_SOFTMAX, segment_ids=seg, num_segments=2
    )
    sums = ad.segment_sum(out_sm, seg, 2).data
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    with pytest.raises(ConfigMismatchError):
        constrain_coefficients(ad.const(raw), CONSTRAINT_SOFTMAX)
    with pytest.raises(ConfigMismatchError):
        constrain_coefficients(ad.const(raw), "clamp")
