"""Paired augmentations: geometry stays in lockstep, photometrics clamp."""
import numpy as np
import pytest

from episplit.augment import (
    IDENTITY_GEOMETRIC,
    IDENTITY_PHOTOMETRIC,
    AugmentationSpec,
    GeometricParams,
    PhotometricParams,
    apply_geometric,
    apply_geometric_mask,
    apply_photometric,
    augment_view,
    sample_augmentation,
)
from episplit.errors import DimensionMismatchError
from helpers import disk_mask, random_image, random_mask

FLIPS_ONLY = AugmentationSpec(
    hflip_prob=1.0, vflip_prob=0.0, angle_range=(0.0, 0.0),
    scale_range=(1.0, 1.0), jitter_prob=0.0, grayscale_prob=0.0)


def quarter_turn_oracle(arr):
    """Hand remap for a +90 degree turn of a square array."""
    n = arr.shape[0]
    out = np.zeros_like(arr)
    for y in range(n):
        for x in range(n):
            out[y, x] = arr[x, n - 1 - y]
    return out


def test_sample_disabled_is_identity():
    geo, photo = sample_augmentation(AugmentationSpec(enabled=False), np.random.default_rng(0))
    assert geo == IDENTITY_GEOMETRIC
    assert photo == IDENTITY_PHOTOMETRIC


def test_sample_respects_ranges():
    spec = AugmentationSpec()
    rng = np.random.default_rng(42)
    for _ in range(1000):
        geo, photo = sample_augmentation(spec, rng)
        assert -30.0 <= geo.angle <= 30.0
        assert 0.75 <= geo.scale <= 1.25
        assert 0.6 <= photo.brightness <= 1.4
        assert 0.6 <= photo.contrast <= 1.4
        assert -0.1 <= photo.hue_shift <= 0.1


def test_sample_gate_frequencies():
    spec = AugmentationSpec()
    rng = np.random.default_rng(7)
    n = 10000
    draws = [sample_augmentation(spec, rng) for _ in range(n)]
    hflips = sum(g.hflip for g, _ in draws) / n
    jittered = sum(p.brightness != 1.0 for _, p in draws) / n
    gray = sum(p.to_grayscale for _, p in draws) / n
    assert abs(hflips - 0.5) < 4 * np.sqrt(0.25 / n)
    assert abs(jittered - 0.8) < 4 * np.sqrt(0.8 * 0.2 / n)
    assert abs(gray - 0.2) < 4 * np.sqrt(0.2 * 0.8 / n)


def test_sample_deterministic():
    spec = AugmentationSpec()
    a = [sample_augmentation(spec, np.random.default_rng(3)) for _ in range(5)]
    b = [sample_augmentation(spec, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


def test_geometric_identity_is_bit_exact():
    rng = np.random.default_rng(1)
    img = random_image(rng, 64, 64)
    out = apply_geometric(img, IDENTITY_GEOMETRIC, 64)
    assert np.array_equal(out, img)


def test_geometric_pads_smaller_input_centered():
    rng = np.random.default_rng(2)
    img = random_image(rng, 40, 60)
    out = apply_geometric(img, IDENTITY_GEOMETRIC, 64)
    assert out.shape == (64, 64, 3)
    assert np.array_equal(out[12:52, 2:62], img)
    assert not out[:12].any() and not out[52:].any()  # zero fill


def test_geometric_crops_larger_input_centered():
    rng = np.random.default_rng(3)
    img = random_image(rng, 100, 80)
    out = apply_geometric(img, IDENTITY_GEOMETRIC, 64)
    assert np.array_equal(out, img[18:82, 8:72])


def test_hflip_exact():
    rng = np.random.default_rng(4)
    img = random_image(rng, 32, 32)
    out = apply_geometric(img, GeometricParams(hflip=True), 32)
    assert np.array_equal(out, img[:, ::-1])
    again = apply_geometric(out, GeometricParams(hflip=True), 32)
    assert np.array_equal(again, img)


def test_vflip_exact_on_mask():
    rng = np.random.default_rng(5)
    m = random_mask(rng, 24, 24)
    out = apply_geometric_mask(m, GeometricParams(vflip=True), 24)
    assert np.array_equal(out, m[::-1, :])


def test_quarter_turn_matches_hand_remap():
    rng = np.random.default_rng(6)
    img = random_image(rng, 16, 16)
    out = apply_geometric(img, GeometricParams(angle=90.0), 16)
    assert np.array_equal(out, quarter_turn_oracle(img))
    m = random_mask(rng, 16, 16)
    out_m = apply_geometric_mask(m, GeometricParams(angle=90.0), 16)
    assert np.array_equal(out_m, quarter_turn_oracle(m.astype(np.uint8)).astype(bool))


def test_rotation_fills_corners_with_zero():
    img = np.full((32, 32, 3), 200, dtype=np.uint8)
    out = apply_geometric(img, GeometricParams(angle=45.0), 32)
    assert out[0, 0].sum() == 0 and out[-1, -1].sum() == 0


def test_mask_area_tracks_scale():
    m = disk_mask(64, 64, 32, 32, 20)
    for scale, angle in ((1.1, 37.0), (0.8, -12.0), (1.0, 63.0)):
        out = apply_geometric_mask(m, GeometricParams(angle=angle, scale=scale), 64)
        expected = np.pi * (20 * scale) ** 2
        assert abs(out.sum() - expected) / expected < 0.10


def test_mask_never_interpolates():
    rng = np.random.default_rng(8)
    m = random_mask(rng, 48, 48)
    out = apply_geometric_mask(m, GeometricParams(angle=31.7, scale=1.13), 48)
    assert out.dtype == np.bool_
    # nearest-neighbour + zero fill: result foreground cannot exceed a
    # generous dilation of the input's area
    assert out.sum() <= m.sum() * 1.3 + 16


def test_photometric_identity_is_bit_exact():
    rng = np.random.default_rng(9)
    img = random_image(rng, 20, 20)
    assert np.array_equal(apply_photometric(img, IDENTITY_PHOTOMETRIC), img)


def test_brightness_scales_and_clamps():
    img = np.full((4, 4, 3), 128, dtype=np.uint8)
    doubled = apply_photometric(img, PhotometricParams(brightness=2.0))
    assert (doubled == 255).all()
    halved = apply_photometric(img, PhotometricParams(brightness=0.5))
    assert (halved == 64).all()


def test_contrast_collapse_to_mean():
    rng = np.random.default_rng(10)
    img = random_image(rng, 16, 16)
    flat = apply_photometric(img, PhotometricParams(contrast=0.0)).astype(float)
    assert flat.std() < 1.0  # everything lands on the (rounded) mean luminance


def test_grayscale_replicates_luminance():
    rng = np.random.default_rng(11)
    img = random_image(rng, 16, 16)
    out = apply_photometric(img, PhotometricParams(to_grayscale=True))
    assert np.array_equal(out[..., 0], out[..., 1])
    assert np.array_equal(out[..., 1], out[..., 2])
    luma = np.rint(img @ np.array([0.299, 0.587, 0.114])).astype(np.uint8)
    assert np.array_equal(out[..., 0], luma)


def test_hue_half_turn_swaps_red_for_cyan():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[..., 0] = 255
    out = apply_photometric(img, PhotometricParams(hue_shift=0.5))
    assert (out[..., 0] < 5).all() and (out[..., 1] > 250).all() and (out[..., 2] > 250).all()


def test_photometric_output_in_range():
    rng = np.random.default_rng(12)
    img = random_image(rng, 24, 24)
    params = PhotometricParams(brightness=1.4, contrast=1.4, saturation=1.4, hue_shift=0.1)
    out = apply_photometric(img, params)
    assert out.dtype == np.uint8  # clamping happened inside the float pipeline


def test_augment_view_dimension_mismatch():
    rng = np.random.default_rng(13)
    img = random_image(rng, 32, 32)
    with pytest.raises(DimensionMismatchError):
        augment_view(img, [np.zeros((16, 16), bool)], AugmentationSpec(), rng, 32)


def test_augment_view_disabled_passthrough():
    rng = np.random.default_rng(14)
    img = random_image(rng, 32, 32)
    m = random_mask(rng, 32, 32)
    out_img, (out_m,) = augment_view(img, [m], AugmentationSpec(enabled=False), rng, 32)
    assert np.array_equal(out_img, img)
    assert np.array_equal(out_m, m)


def test_augment_view_masks_share_the_image_geometry():
    rng = np.random.default_rng(15)
    img = random_image(rng, 32, 32)
    m1 = random_mask(rng, 32, 32)
    m2 = random_mask(rng, 32, 32)
    out_img, (o1, o2) = augment_view(img, [m1, m2], FLIPS_ONLY, np.random.default_rng(1), 32)
    assert np.array_equal(o1, m1[:, ::-1])
    assert np.array_equal(o2, m2[:, ::-1])
    # overlap structure is untouched by a flip applied to both
    assert (o1 & o2).sum() == (m1 & m2).sum()


def test_augment_view_deterministic():
    rng = np.random.default_rng(16)
    img = random_image(rng, 40, 40)
    m = random_mask(rng, 40, 40)
    a_img, (a_m,) = augment_view(img, [m], AugmentationSpec(), np.random.default_rng(5), 48)
    b_img, (b_m,) = augment_view(img, [m], AugmentationSpec(), np.random.default_rng(5), 48)
    assert np.array_equal(a_img, b_img)
    assert np.array_equal(a_m, b_m)
