import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgbd_panoptic.fusion import (
    ExcitationParams,
    FusionConfig,
    Variant,
    channel_gate,
    excite,
    fuse,
    fuse_backward,
)
from rgbd_panoptic.gradcheck import check_fusion
from rgbd_panoptic.tensorcore import ShapeError

from oracles import excite_loop

seeds = st.integers(0, 2**32 - 1)


def _params(rng, c=2, depth=1):
    return ExcitationParams.random(c, rng, depth=depth), ExcitationParams.random(c, rng, depth=depth)


def test_excite_closed_forms():
    x = np.random.default_rng(0).normal(size=(3, 2, 2))
    np.testing.assert_array_equal(excite(x, ExcitationParams.constant(3)), np.full(x.shape, 0.5))
    gate = excite(x, ExcitationParams.constant(3, bias=math.log(3)))
    np.testing.assert_allclose(gate, 0.75, atol=1e-15)


def test_excite_two_layers_matches_sequential_loops():
    rng = np.random.default_rng(5)
    p = ExcitationParams.random(3, rng, depth=2)
    x = rng.normal(size=(3, 4, 2))
    np.testing.assert_allclose(excite(x, p), excite_loop(x, p.layers), rtol=1e-13)


def test_excitation_params_must_be_square():
    with pytest.raises(ShapeError):
        ExcitationParams(((np.zeros((2, 3)), np.zeros(2)),))
    with pytest.raises(ValueError):
        ExcitationParams(())
    with pytest.raises(ShapeError):
        excite(np.zeros((3, 1, 1)), ExcitationParams.constant(2))


def test_residual_excite_zero_lambda_is_identity():
    rng = np.random.default_rng(1)
    p_rgb, p_depth = _params(rng)
    x_rgb, x_depth = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))
    out = fuse(x_rgb, x_depth, p_rgb, p_depth, FusionConfig(Variant.RESIDUAL_EXCITE, lam=0.0))
    np.testing.assert_array_equal(out, x_rgb)
    assert out is not x_rgb


def test_residual_excite_half_gate_without_depth():
    x_rgb = np.random.default_rng(2).normal(size=(2, 3, 3))
    zero = ExcitationParams.constant(2)
    cfg = FusionConfig(Variant.RESIDUAL_EXCITE, lam=1.5, depth_present=False)
    np.testing.assert_allclose(fuse(x_rgb, None, zero, zero, cfg), 1.75 * x_rgb, rtol=1e-15)


def test_rgb_absent_residual_excite_keeps_only_depth_term():
    rng = np.random.default_rng(3)
    p_rgb, p_depth = _params(rng)
    x_depth = rng.normal(size=(2, 2, 2))
    cfg = FusionConfig(Variant.RESIDUAL_EXCITE, lam=1.5, rgb_present=False)
    expected = 1.5 * excite(x_depth, p_depth) * x_depth
    np.testing.assert_allclose(fuse(None, x_depth, p_rgb, p_depth, cfg), expected, rtol=1e-14)


def test_variant_formulas():
    rng = np.random.default_rng(4)
    p_rgb, p_depth = _params(rng)
    xr, xd = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
    gr, gd = excite(xr, p_rgb), excite(xd, p_depth)
    np.testing.assert_allclose(
        fuse(xr, xd, p_rgb, p_depth, FusionConfig(Variant.EXCITE_ONLY, 1.5)), 1.5 * (gr * xr + gd * xd)
    )
    np.testing.assert_allclose(fuse(xr, xd, p_rgb, p_depth, FusionConfig(Variant.ADDITION)), xr + xd)
    np.testing.assert_array_equal(
        fuse(xr, np.zeros_like(xr), p_rgb, p_depth, FusionConfig(Variant.ADDITION)), xr
    )
    se = fuse(xr, xd, p_rgb, p_depth, FusionConfig(Variant.SQUEEZE_EXCITE))
    pooled_r = excite_loop(xr.mean(axis=(1, 2)).reshape(2, 1, 1), p_rgb.layers)
    pooled_d = excite_loop(xd.mean(axis=(1, 2)).reshape(2, 1, 1), p_depth.layers)
    np.testing.assert_allclose(se, pooled_r * xr + pooled_d * xd, rtol=1e-13)


def test_fuse_errors():
    p = ExcitationParams.constant(2)
    with pytest.raises(ValueError):
        FusionConfig(rgb_present=False, depth_present=False)
    with pytest.raises(ShapeError):
        fuse(np.zeros((2, 3, 3)), np.zeros((2, 3, 4)), p, p, FusionConfig())
    with pytest.raises(ValueError):
        fuse(np.zeros((2, 3, 3)), None, p, p, FusionConfig())


def test_addition_backward_is_ones():
    rng = np.random.default_rng(0)
    p_rgb, p_depth = _params(rng)
    x = rng.normal(size=(2, 3, 3))
    g = fuse_backward(np.ones_like(x), x, x, p_rgb, p_depth, FusionConfig(Variant.ADDITION))
    np.testing.assert_array_equal(g.x_rgb, np.ones_like(x))
    np.testing.assert_array_equal(g.x_depth, np.ones_like(x))


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("depth", [1, 2])
def test_backward_matches_finite_differences(variant, depth):
    errors = check_fusion(variant, np.random.default_rng(9), shape=(2, 3, 3), depth=depth)
    assert max(errors.values()) < 1e-4, errors


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("absent", ["rgb", "depth"])
def test_backward_with_missing_modality_matches_finite_differences(variant, absent):
    errors = check_fusion(
        variant, np.random.default_rng(12), rgb_present=absent != "rgb", depth_present=absent != "depth"
    )
    assert max(errors.values()) < 1e-4, errors


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from(list(Variant)), st.sampled_from(["rgb", "depth"]))
def test_frozen_branch(seed, variant, absent):
    rng = np.random.default_rng(seed)
    p_rgb, p_depth = _params(rng)
    xr, xd, g = (rng.normal(size=(2, 3, 3)) for _ in range(3))
    cfg = FusionConfig(variant, 1.5, rgb_present=absent != "rgb", depth_present=absent != "depth")
    grads = fuse_backward(g, xr, xd, p_rgb, p_depth, cfg)
    frozen_x = grads.x_rgb if absent == "rgb" else grads.x_depth
    frozen_p = grads.p_rgb if absent == "rgb" else grads.p_depth
    assert not frozen_x.any()
    assert not any(w.any() or b.any() for w, b in frozen_p)

    other_x, other_p = rng.normal(size=(2, 3, 3)), ExcitationParams.random(2, rng)
    if absent == "rgb":
        moved = fuse(other_x, xd, other_p, p_depth, cfg)
        dropped = fuse(None, xd, p_rgb, p_depth, cfg)
    else:
        moved = fuse(xr, other_x, p_rgb, other_p, cfg)
        dropped = fuse(xr, None, p_rgb, p_depth, cfg)
    np.testing.assert_array_equal(moved, fuse(xr, xd, p_rgb, p_depth, cfg))
    np.testing.assert_array_equal(moved, dropped)


@settings(max_examples=40)
@given(seeds)
def test_zero_lambda_identity_property(seed):
    rng = np.random.default_rng(seed)
    p_rgb, p_depth = _params(rng, c=3, depth=int(rng.integers(1, 3)))
    xr, xd = rng.normal(size=(3, 2, 4)), rng.normal(size=(3, 2, 4))
    out = fuse(xr, xd, p_rgb, p_depth, FusionConfig(Variant.RESIDUAL_EXCITE, lam=0.0))
    assert out.tobytes() == xr.tobytes()


def test_gate_granularity():
    # channel 0 mixes with channel 1, which differs between the two pixels
    p = ExcitationParams(((np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2)),))
    x = np.array([[[1.0, 1.0]], [[0.0, 3.0]]])  # shape (2, 1, 2)
    re_gate = excite(x, p)
    se_gate = np.broadcast_to(channel_gate(x, p), x.shape)
    assert re_gate[0, 0, 0] != re_gate[0, 0, 1]
    assert se_gate[0, 0, 0] == se_gate[0, 0, 1]


def test_variant_parse():
    assert Variant.parse("residual_excite") is Variant.RESIDUAL_EXCITE
    assert Variant.parse("SE") is Variant.SQUEEZE_EXCITE
    with pytest.raises(ValueError):
        Variant.parse("cbam")
