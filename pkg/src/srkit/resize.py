"""Cubic-convolution resampling and direct decimation.

The resampler is the contributions formulation: for each output sample,
a short row of input indices and normalized weights is precomputed per
axis, with the cubic kernel (a = -0.5) stretched by the scale factor
when downsampling so it acts as an antialiasing low-pass. Out-of-range
taps fold back with mirror symmetry. All accumulation is float64;
results are stored float32.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .image import Image, mod_crop

_KERNEL_SUPPORT = 4.0  # cubic kernel is nonzero on (-2, 2)


def _cubic(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5."""
    a = -0.5
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _contributions(in_len: int, out_len: int, scale: float):
    """Per-output-sample tap indices and weights for one axis.

    Returns (weights (out_len, P) f64, indices (out_len, P) int) with
    rows summing to 1. Uses 1-indexed sample centers internally, the
    convention under which output sample x maps to input coordinate
    u = x/scale + 0.5(1 - 1/scale).
    """
    if scale < 1.0:
        # antialias: stretch the kernel by 1/scale and rescale amplitude
        def h(x):
            return scale * _cubic(scale * x)

        width = _KERNEL_SUPPORT / scale
    else:
        h = _cubic
        width = _KERNEL_SUPPORT
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    p = int(np.ceil(width)) + 2
    indices = left[:, None] + np.arange(p, dtype=np.float64)[None, :]
    weights = h(u[:, None] - indices)
    weights /= weights.sum(axis=1, keepdims=True)
    # mirror out-of-range taps: positions fold as 1..N, N..1, repeating
    aux = np.concatenate([np.arange(1, in_len + 1), np.arange(in_len, 0, -1)])
    indices = aux[(indices.astype(np.int64) - 1) % (2 * in_len)] - 1
    keep = np.any(weights != 0, axis=0)
    return weights[:, keep], indices[:, keep]


def _resize_axis(arr: np.ndarray, axis: int, out_len: int, scale: float) -> np.ndarray:
    weights, indices = _contributions(arr.shape[axis], out_len, scale)
    moved = np.moveaxis(arr, axis, 0)
    gathered = moved[indices]  # (out_len, P, ...)
    w = weights.reshape(weights.shape + (1,) * (moved.ndim - 1))
    out = (gathered * w).sum(axis=1)
    return np.moveaxis(out, 0, axis)


def _resample(arr: np.ndarray, out_h: int, out_w: int, sh: float, sw: float) -> np.ndarray:
    out = arr.astype(np.float64)
    out = _resize_axis(out, 0, out_h, sh)
    out = _resize_axis(out, 1, out_w, sw)
    return out


def resize_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a (H, W) or (H, W, C) float array to (out_h, out_w).

    Antialiasing engages per axis whenever that axis shrinks. Returns
    float64; callers pick their storage dtype.
    """
    if arr.ndim not in (2, 3):
        raise ContractError(f"expected 2-D or 3-D array, got ndim {arr.ndim}")
    if out_h < 1 or out_w < 1:
        raise ContractError("output dimensions must be positive")
    return _resample(arr, out_h, out_w, out_h / arr.shape[0], out_w / arr.shape[1])


def downsample_bicubic(image: Image, s: int) -> Image:
    """Antialiased cubic downsample by integer factor s (s >= 2).

    Non-divisible dimensions are cropped to the largest multiple of s
    first, so the output is floor(H/s) x floor(W/s).
    """
    if not isinstance(s, (int, np.integer)) or s < 2:
        raise ContractError(f"scale must be an integer >= 2, got {s!r}")
    image = mod_crop(image, s)
    out = _resample(image.data, image.height // s, image.width // s, 1.0 / s, 1.0 / s)
    return Image(out.astype(np.float32), unclipped=True)


def upsample_bicubic(image: Image, s: int) -> Image:
    """Cubic upsample by integer factor s in {2, 3, 4}; output sH x sW."""
    if s not in (2, 3, 4):
        raise ContractError(f"scale must be 2, 3 or 4, got {s!r}")
    out = _resample(image.data, image.height * s, image.width * s, float(s), float(s))
    return Image(out.astype(np.float32), unclipped=True)


def downsample_direct(image: Image, s: int) -> Image:
    """Keep pixel (s*i, s*j) of each s x s block (top-left anchor)."""
    if not isinstance(s, (int, np.integer)) or s < 2:
        raise ContractError(f"scale must be an integer >= 2, got {s!r}")
    if image.height % s or image.width % s:
        raise ContractError(
            f"dimensions {image.height}x{image.width} not divisible by {s}; crop first"
        )
    return Image(image.data[::s, ::s].copy(), unclipped=image.unclipped)
