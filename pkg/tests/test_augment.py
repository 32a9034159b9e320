"""Augmentation: flips, affine warps, sampling bounds, and determinism.

Lossless flips are exact pixel permutations; the affine path is checked
against index-permutation oracles at angles where the warp lands exactly on
the pixel grid (identity, 90 degrees, integer shifts).
"""

import numpy as np
import pytest

from glyphcaps.augment import (
    IDENTITY_PARAMS,
    AffineParams,
    AugmentPolicy,
    apply_affine,
    apply_flips,
    augment_batch,
    bilinear_sample,
    policy_for,
    sample_params,
)
from glyphcaps.tensor import Tensor, tensor_from


def _random_image(rng, h=12, w=12):
    return Tensor(rng.random((1, h, w)))


# ---------------------------------------------------------------------------
# flips


def test_flip_directions_on_a_known_image():
    img = tensor_from([1, 2, 2], [1.0, 2.0, 3.0, 4.0])
    assert apply_flips(img, flip_h=True, flip_v=False).data[0].tolist() == [[2, 1], [4, 3]]
    assert apply_flips(img, flip_h=False, flip_v=True).data[0].tolist() == [[3, 4], [1, 2]]
    assert apply_flips(img, flip_h=True, flip_v=True).data[0].tolist() == [[4, 3], [2, 1]]


def test_flips_are_involutions():
    rng = np.random.default_rng(0)
    img = _random_image(rng)
    for fh, fv in ((True, False), (False, True), (True, True)):
        twice = apply_flips(apply_flips(img, fh, fv), fh, fv)
        assert np.array_equal(twice.data, img.data)


def test_both_flips_equal_half_turn():
    rng = np.random.default_rng(1)
    img = _random_image(rng)
    both = apply_flips(img, flip_h=True, flip_v=True).data[0]
    assert np.array_equal(both, img.data[0][::-1, ::-1])


def test_lossless_preserves_pixel_multiset():
    rng = np.random.default_rng(2)
    images = [_random_image(rng, 9, 9) for _ in range(20)]
    out = augment_batch(images, policy_for("lossless"), np.random.default_rng(3))
    for before, after in zip(images, out):
        assert np.array_equal(np.sort(before.data, axis=None),
                              np.sort(after.data, axis=None))


# ---------------------------------------------------------------------------
# affine warps


def test_identity_affine_returns_the_image():
    rng = np.random.default_rng(4)
    img = _random_image(rng, 11, 11)
    out = apply_affine(img, IDENTITY_PARAMS)
    assert np.allclose(out.data, img.data, atol=1e-12)


def test_quarter_turn_matches_index_rotation():
    rng = np.random.default_rng(5)
    for side in (8, 9):
        img = _random_image(rng, side, side)
        out = apply_affine(img, AffineParams(angle_deg=90.0)).data[0]
        assert np.allclose(out, np.rot90(img.data[0], -1), atol=1e-9)
        back = apply_affine(img, AffineParams(angle_deg=-90.0)).data[0]
        assert np.allclose(back, np.rot90(img.data[0], 1), atol=1e-9)


def test_unit_shift_replicates_the_leading_edge():
    rng = np.random.default_rng(6)
    img = _random_image(rng, 7, 7)
    plane = img.data[0]
    right = apply_affine(img, AffineParams(dx=1.0)).data[0]
    assert np.allclose(right[:, 1:], plane[:, :-1], atol=1e-12)
    assert np.allclose(right[:, 0], plane[:, 0], atol=1e-12)
    down = apply_affine(img, AffineParams(dy=1.0)).data[0]
    assert np.allclose(down[1:, :], plane[:-1, :], atol=1e-12)
    assert np.allclose(down[0, :], plane[0, :], atol=1e-12)


def test_warped_values_stay_in_unit_range():
    rng = np.random.default_rng(7)
    policy = policy_for("lossy")
    draw = np.random.default_rng(8)
    for _ in range(25):
        img = _random_image(rng, 10, 10)
        params = sample_params(policy, draw, (10, 10))
        out = apply_affine(img, params).data
        assert out.min() >= 0.0
        assert out.max() <= 1.0


def test_bilinear_sample_interpolates_and_clamps():
    plane = np.array([[0.0, 1.0], [2.0, 3.0]])
    mid = bilinear_sample(plane, np.array([0.5]), np.array([0.5]))
    assert mid[0] == pytest.approx(1.5)
    off = bilinear_sample(plane, np.array([-5.0]), np.array([0.5]))
    assert off[0] == pytest.approx(0.5)
    corner = bilinear_sample(plane, np.array([9.0]), np.array([9.0]))
    assert corner[0] == 3.0


# ---------------------------------------------------------------------------
# parameter sampling


def test_sample_params_regimes_and_draw_order():
    policy = policy_for("none")
    assert sample_params(policy, np.random.default_rng(0), (8, 8)).is_noop

    # lossless: horizontal coin then vertical coin
    rng = np.random.default_rng(9)
    p = sample_params(policy_for("lossless"), rng, (8, 8))
    replay = np.random.default_rng(9)
    assert p.flip_h == bool(replay.integers(0, 2))
    assert p.flip_v == bool(replay.integers(0, 2))
    assert p.is_identity_affine

    # lossy: angle, dx, dy, shear, zoom; shift bounds scale with width/height
    rng = np.random.default_rng(10)
    p = sample_params(policy_for("lossy"), rng, (20, 30))
    replay = np.random.default_rng(10)
    assert p.angle_deg == replay.uniform(-40.0, 40.0)
    assert p.dx == replay.uniform(-0.6, 0.6)      # 0.02 * width 30
    assert p.dy == replay.uniform(-0.4, 0.4)      # 0.02 * height 20
    assert p.shear == replay.uniform(-0.02, 0.02)
    assert p.zoom == replay.uniform(0.98, 1.02)
    assert not p.flip_h and not p.flip_v


def test_lossy_draws_respect_policy_bounds():
    policy = policy_for("lossy")
    rng = np.random.default_rng(11)
    for _ in range(2000):
        p = sample_params(policy, rng, (28, 28))
        assert abs(p.angle_deg) <= 40.0
        assert abs(p.dx) <= 0.02 * 28
        assert abs(p.dy) <= 0.02 * 28
        assert abs(p.shear) <= 0.02
        assert 0.98 <= p.zoom <= 1.02


def test_flip_switches_disable_directions():
    policy = AugmentPolicy(regime="lossless", flip_horizontal=False)
    rng = np.random.default_rng(12)
    for _ in range(50):
        assert not sample_params(policy, rng, (8, 8)).flip_h


# ---------------------------------------------------------------------------
# batch behavior


def test_none_regime_passes_images_through():
    rng = np.random.default_rng(13)
    images = [_random_image(rng) for _ in range(4)]
    out = augment_batch(images, policy_for("none"), np.random.default_rng(14))
    for before, after in zip(images, out):
        assert np.array_equal(before.data, after.data)


def test_augment_batch_is_deterministic_per_seed():
    rng = np.random.default_rng(15)
    images = [_random_image(rng) for _ in range(6)]
    a = augment_batch(images, policy_for("lossy"), np.random.default_rng(16))
    b = augment_batch(images, policy_for("lossy"), np.random.default_rng(16))
    c = augment_batch(images, policy_for("lossy"), np.random.default_rng(17))
    for x, y in zip(a, b):
        assert np.array_equal(x.data, y.data)
    assert any(not np.array_equal(x.data, y.data) for x, y in zip(a, c))


def test_augment_batch_rejects_non_image_tensors():
    with pytest.raises(ValueError):
        augment_batch([tensor_from([4], [1, 2, 3, 4])], policy_for("none"),
                      np.random.default_rng(0))


# ---------------------------------------------------------------------------
# policy validation


def test_policy_rejects_bad_settings():
    with pytest.raises(ValueError, match="regime"):
        AugmentPolicy(regime="sometimes")
    with pytest.raises(ValueError, match="rotation_max_deg"):
        AugmentPolicy(regime="lossy", rotation_max_deg=-1.0)
    with pytest.raises(ValueError, match="rotation_max_deg"):
        AugmentPolicy(regime="lossy", rotation_max_deg=181.0)
    with pytest.raises(ValueError, match="zoom_frac"):
        AugmentPolicy(regime="lossy", zoom_frac=1.0)
    with pytest.raises(ValueError, match="shear_frac"):
        AugmentPolicy(regime="lossy", shear_frac=-0.5)
