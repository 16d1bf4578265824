"""Forward degradation pipelines: blur, downsample, add noise.

Two compositions are supported and named by the CLI tokens they carry:
"eq1" blurs at high resolution and then downsamples; "eq2" downsamples
first and blurs the low-resolution result. Noise is always added last,
on the LR grid, from the counter-based Gaussian stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as _kernels
from .errors import ContractError
from .image import Image, mod_crop
from .kernels import BlurKernel, correlate_replicate
from .maps import SIGMA_MAX
from .resize import downsample_bicubic, downsample_direct
from .rng import gaussian_field

ORDER_BLUR_THEN_DOWN = "eq1"
ORDER_DOWN_THEN_BLUR = "eq2"


@dataclass(frozen=True)
class DegradationSpec:
    """Full description of one uniform degradation."""

    kernel: BlurKernel
    scale: int
    sigma: float = 0.0
    downsampler: str = "bicubic"
    order: str = ORDER_BLUR_THEN_DOWN
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ContractError(f"scale must be 2, 3 or 4, got {self.scale!r}")
        if not 0.0 <= self.sigma <= SIGMA_MAX:
            raise ContractError(f"sigma must be in [0, {SIGMA_MAX:g}], got {self.sigma}")
        if self.downsampler not in ("bicubic", "direct"):
            raise ContractError(f"unknown downsampler {self.downsampler!r}")
        if self.order not in (ORDER_BLUR_THEN_DOWN, ORDER_DOWN_THEN_BLUR):
            raise ContractError(f"unknown order {self.order!r}")


@dataclass(frozen=True)
class VariantField:
    """Spatially varying degradation: kernel width per HR pixel, noise
    level per LR pixel."""

    width_map: np.ndarray
    sigma_map: np.ndarray

    def __post_init__(self):
        wm = np.asarray(self.width_map, dtype=np.float64)
        sm = np.asarray(self.sigma_map, dtype=np.float64)
        if wm.ndim != 2 or sm.ndim != 2:
            raise ContractError("width_map and sigma_map must be 2-D")
        if wm.min() <= 0:
            raise ContractError("widths must be positive")
        if sm.min() < 0 or sm.max() > SIGMA_MAX:
            raise ContractError(f"sigmas must be in [0, {SIGMA_MAX:g}]")
        for name, arr in (("width_map", wm), ("sigma_map", sm)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def blur(image: Image, kernel: BlurKernel) -> Image:
    """Correlate with the kernel under replicate padding, same size out."""
    if kernel.size > image.height or kernel.size > image.width:
        raise ContractError(
            f"kernel {kernel.size} exceeds image {image.height}x{image.width}"
        )
    out = correlate_replicate(image.data, kernel.weights)
    return Image(out.astype(np.float32), unclipped=True)


def add_awgn(image: Image, sigma: float, seed: int) -> Image:
    """Add i.i.d. zero-mean Gaussian noise of std sigma/255 per sample.

    sigma is quoted on the 0-255 intensity scale. Output is unclipped;
    identical (seed, shape) pairs produce identical noise.
    """
    if not 0.0 <= sigma <= SIGMA_MAX:
        raise ContractError(f"sigma must be in [0, {SIGMA_MAX:g}], got {sigma}")
    if sigma == 0.0:
        return image
    noise = gaussian_field(seed, image.data.shape) * (sigma / 255.0)
    return Image((image.data + noise).astype(np.float32), unclipped=True)


def _downsample(image: Image, s: int, method: str) -> Image:
    if method == "bicubic":
        return downsample_bicubic(image, s)
    return downsample_direct(image, s)


def degrade(hr: Image, spec: DegradationSpec) -> Image:
    """Run the full HR -> LR pipeline that `spec` describes.

    HR dimensions are cropped to the largest multiple of the scale
    first, so the LR grid is exactly HR/s.
    """
    hr = mod_crop(hr, spec.scale)
    if spec.order == ORDER_BLUR_THEN_DOWN:
        lr = _downsample(blur(hr, spec.kernel), spec.scale, spec.downsampler)
    else:
        lr = blur(_downsample(hr, spec.scale, spec.downsampler), spec.kernel)
    return add_awgn(lr, spec.sigma, spec.seed)


def degrade_variant(hr: Image, field: VariantField, s: int, seed: int = 0) -> Image:
    """Spatially varying pipeline: per-pixel blur width, bicubic
    downsample, per-pixel noise level.

    Each distinct width constructs one kernel and one blurred copy; the
    blur output gathers every pixel from the copy matching its width.
    """
    if s not in (2, 3, 4):
        raise ContractError(f"scale must be 2, 3 or 4, got {s!r}")
    wm = field.width_map
    sm = field.sigma_map
    if wm.shape != (hr.height, hr.width):
        raise ContractError(
            f"width_map {wm.shape} does not match HR {hr.height}x{hr.width}"
        )
    if sm.shape != (hr.height // s, hr.width // s):
        raise ContractError(
            f"sigma_map {sm.shape} does not match LR "
            f"{hr.height // s}x{hr.width // s}"
        )
    if hr.height % s or hr.width % s:
        raise ContractError("HR dimensions must be divisible by the scale")
    uniq, inverse = np.unique(wm, return_inverse=True)
    inverse = inverse.reshape(wm.shape)
    blurred = np.empty(hr.data.shape, dtype=np.float64)
    for i, width in enumerate(uniq):
        kernel = _kernels.isotropic_gaussian(float(width))
        full = correlate_replicate(hr.data, kernel.weights)
        mask = inverse == i
        blurred[mask] = full[mask]
    lr = downsample_bicubic(Image(blurred.astype(np.float32), unclipped=True), s)
    noise = gaussian_field(seed, lr.data.shape) * (sm[:, :, None] / 255.0)
    return Image((lr.data + noise).astype(np.float32), unclipped=True)
