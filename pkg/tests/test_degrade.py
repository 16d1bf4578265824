"""Degradation pipelines checked against naive double-loop oracles and
closed-form reductions."""
import numpy as np
import pytest

import srkit.kernels
from srkit import ContractError, Image
from srkit.degrade import (
    ORDER_BLUR_THEN_DOWN,
    ORDER_DOWN_THEN_BLUR,
    DegradationSpec,
    VariantField,
    add_awgn,
    blur,
    degrade,
    degrade_variant,
)
from srkit.kernels import delta_kernel, isotropic_gaussian
from srkit.resize import downsample_bicubic, downsample_direct
from srkit.rng import gaussian_field


def _blur_ref(plane, weights):
    """Edge-clamped correlation, four explicit loops."""
    p = weights.shape[0]
    half = p // 2
    h, w = plane.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for dr in range(p):
                for dc in range(p):
                    rr = min(max(r + dr - half, 0), h - 1)
                    cc = min(max(c + dc - half, 0), w - 1)
                    acc += weights[dr, dc] * plane[rr, cc]
            out[r, c] = acc
    return out


def _random_image(seed, h, w, c=1):
    field = gaussian_field(seed, (h, w, c))
    lo, hi = field.min(), field.max()
    return Image(((field - lo) / (hi - lo)).astype(np.float32))


def test_blur_delta_is_identity():
    img = _random_image(5, 12, 9)
    out = blur(img, delta_kernel(5))
    assert np.array_equal(out.data, img.data)


def test_blur_constant_is_unchanged():
    img = Image(np.full((16, 16, 3), 0.42, dtype=np.float32))
    out = blur(img, isotropic_gaussian(1.7))
    assert np.allclose(out.data, 0.42, atol=1e-6)


def test_blur_small_ramp_matches_loop_oracle():
    ramp = (3 * np.arange(5)[:, None] + np.arange(5)[None, :]) / 20.0
    img = Image(ramp.astype(np.float32)[:, :, None])
    k = isotropic_gaussian(1.0, 5)
    out = blur(img, k)
    ref = _blur_ref(ramp.astype(np.float32).astype(np.float64), k.weights)
    assert np.abs(out.data[:, :, 0] - ref).max() < 1e-6


def test_blur_full_kernel_matches_loop_oracle():
    img = _random_image(7, 20, 24, 3)
    k = isotropic_gaussian(2.3)
    out = blur(img, k)
    for ch in range(3):
        ref = _blur_ref(img.data[:, :, ch].astype(np.float64), k.weights)
        assert np.abs(out.data[:, :, ch] - ref).max() < 1e-6


def test_blur_commutes_with_horizontal_flip():
    img = _random_image(9, 18, 22)
    k = isotropic_gaussian(1.4)
    flipped = Image(np.ascontiguousarray(img.data[:, ::-1]))
    a = blur(flipped, k).data
    b = blur(img, k).data[:, ::-1]
    assert np.abs(a - b).max() < 1e-7


def test_blur_preserves_mean_of_balanced_image():
    yy, xx = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
    arr = 0.5 + 0.3 * np.cos(2 * np.pi * xx / 64) * np.cos(2 * np.pi * yy / 64)
    img = Image(arr.astype(np.float32)[:, :, None])
    out = blur(img, isotropic_gaussian(1.5))
    assert abs(float(out.data.mean()) - float(img.data.mean())) < 1e-4


def test_blur_rejects_kernel_larger_than_image():
    img = _random_image(3, 10, 10)
    with pytest.raises(ContractError):
        blur(img, isotropic_gaussian(2.0))  # default size 15 > 10


def test_awgn_zero_sigma_is_same_object():
    img = _random_image(1, 8, 8)
    assert add_awgn(img, 0.0, seed=4) is img


def test_awgn_sample_statistics():
    img = Image(np.full((1000, 1000, 1), 0.5, dtype=np.float32))
    out = add_awgn(img, 15.0, seed=3)
    noise = out.data.astype(np.float64) - 0.5
    target = 15.0 / 255.0
    assert abs(noise.std() - target) < 0.01 * target
    assert abs(noise.mean()) < 1e-4


def test_awgn_deterministic_per_seed():
    img = _random_image(2, 16, 16)
    a = add_awgn(img, 25.0, seed=11)
    b = add_awgn(img, 25.0, seed=11)
    c = add_awgn(img, 25.0, seed=12)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_awgn_rejects_out_of_range_sigma():
    img = _random_image(1, 8, 8)
    with pytest.raises(ContractError):
        add_awgn(img, 75.5, seed=0)


def test_degrade_delta_bicubic_reduces_to_downsample():
    hr = _random_image(21, 24, 30, 3)
    spec = DegradationSpec(delta_kernel(5), scale=3)
    assert np.array_equal(degrade(hr, spec).data, downsample_bicubic(hr, 3).data)


def test_degrade_orders_agree_for_delta():
    hr = _random_image(22, 24, 24)
    a = degrade(hr, DegradationSpec(delta_kernel(5), 2, order=ORDER_BLUR_THEN_DOWN))
    b = degrade(hr, DegradationSpec(delta_kernel(5), 2, order=ORDER_DOWN_THEN_BLUR))
    assert np.array_equal(a.data, b.data)


def test_degrade_width16_direct_composition():
    # 7x7 kernel of width 1.6 with the direct downsampler at s=3
    hr = _random_image(23, 33, 27)
    k = isotropic_gaussian(1.6, 7)
    out = degrade(hr, DegradationSpec(k, 3, downsampler="direct"))
    manual = downsample_direct(blur(hr, k), 3)
    assert np.array_equal(out.data, manual.data)
    assert out.data.shape == (11, 9, 1)


def test_degrade_appends_noise_last():
    hr = _random_image(24, 20, 20)
    k = isotropic_gaussian(0.9, 7)
    out = degrade(hr, DegradationSpec(k, 2, sigma=20.0, seed=77))
    clean = degrade(hr, DegradationSpec(k, 2))
    assert np.array_equal(out.data, add_awgn(clean, 20.0, seed=77).data)


def test_degrade_crops_to_scale_multiple():
    hr = _random_image(25, 7, 9)
    out = degrade(hr, DegradationSpec(delta_kernel(3), 2))
    assert out.data.shape == (3, 4, 1)


def test_spec_validation():
    k = delta_kernel(3)
    with pytest.raises(ContractError):
        DegradationSpec(k, 5)
    with pytest.raises(ContractError):
        DegradationSpec(k, 2, sigma=80.0)
    with pytest.raises(ContractError):
        DegradationSpec(k, 2, downsampler="area")
    with pytest.raises(ContractError):
        DegradationSpec(k, 2, order="eq3")


def test_variant_field_validation():
    with pytest.raises(ContractError):
        VariantField(np.zeros((4, 4)), np.zeros((2, 2)))  # width 0
    with pytest.raises(ContractError):
        VariantField(np.ones((4, 4)), np.full((2, 2), 80.0))
    with pytest.raises(ContractError):
        VariantField(np.ones(4), np.zeros((2, 2)))


def test_variant_uniform_matches_degrade():
    hr = _random_image(26, 36, 36)
    field = VariantField(np.full((36, 36), 1.3), np.full((12, 12), 10.0))
    out = degrade_variant(hr, field, 3, seed=5)
    spec = DegradationSpec(isotropic_gaussian(1.3), 3, sigma=10.0, seed=5)
    ref = degrade(hr, spec)
    assert np.abs(out.data - ref.data).max() < 1e-6


def test_variant_piecewise_regions_match_uniform_runs():
    hr = _random_image(27, 96, 96)
    width_map = np.full((96, 96), 0.5)
    width_map[:, 48:] = 2.0
    field = VariantField(width_map, np.zeros((32, 32)))
    out = degrade_variant(hr, field, 3)
    sharp = degrade(hr, DegradationSpec(isotropic_gaussian(0.5), 3))
    soft = degrade(hr, DegradationSpec(isotropic_gaussian(2.0), 3))
    # seam at LR col 16; stay clear of its mixing band
    assert np.abs(out.data[:, :10] - sharp.data[:, :10]).max() < 1e-5
    assert np.abs(out.data[:, 22:] - soft.data[:, 22:]).max() < 1e-5


def test_variant_builds_one_kernel_per_width(monkeypatch):
    calls = []
    real = isotropic_gaussian

    def counting(width, size=None):
        calls.append(width)
        return real(width) if size is None else real(width, size)

    monkeypatch.setattr(srkit.kernels, "isotropic_gaussian", counting)
    hr = _random_image(28, 12, 12)
    widths = np.array([0.8, 1.2, 1.9])
    width_map = widths[np.arange(144) % 3].reshape(12, 12)
    degrade_variant(hr, VariantField(width_map, np.zeros((4, 4))), 3)
    assert len(calls) == 3


def test_variant_rejects_mismatched_fields():
    hr = _random_image(29, 12, 12)
    with pytest.raises(ContractError):
        degrade_variant(hr, VariantField(np.ones((10, 12)), np.zeros((4, 4))), 3)
    with pytest.raises(ContractError):
        degrade_variant(hr, VariantField(np.ones((12, 12)), np.zeros((5, 4))), 3)
    odd = _random_image(30, 13, 12)
    with pytest.raises(ContractError):
        degrade_variant(odd, VariantField(np.ones((13, 12)), np.zeros((4, 4))), 3)
