"""Blur-kernel generation and direct-downsampler kernel calibration.

Gaussian kernels are sampled pointwise at integer pixel offsets from
the center (no within-pixel integration) and normalized to unit sum.
The calibration solver answers: which kernel under the antialiased
bicubic downsampler best reproduces a given kernel under plain
decimation? The objective is linear in the unknown kernel, so the
normal equations are assembled exactly and solved densely.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError
from .image import Image
from .resize import resize_array
from .rng import gaussian_field

DEFAULT_KERNEL_SIZE = 15

# per-scale upper bounds: isotropic width and anisotropic eigenvalue scaling
_WIDTH_MAX = {2: 2.0, 3: 3.0, 4: 4.0}
_LAMBDA_MAX = {2: 6.0, 3: 8.0, 4: 10.0}
_LAMBDA_MIN = 0.5
_N_ANGLES = 12          # pi/12 steps over [0, pi)
_N_LAMBDA = 12          # log-spaced per axis, lambda1 >= lambda2

# direct-downsampler kernels calibrated into the x3 training pool.
# Calibration support is much narrower than the pool's 15 px, for two
# reasons. First, the antialiased downsampler barely observes the outer
# taps of a wide kernel, so the full-support normal system is
# numerically rank-deficient. Second, even where the system is solvable
# the unconstrained optimum chases decimation aliasing with large
# checkerboard side lobes, and such kernels would dominate the training
# pool's second moment. A 3 px support keeps the solutions commensurate
# with the generated Gaussians while still shifting mass toward the
# decimation grid (which is offset from the antialiased sampling grid).
# The solved kernels are zero-embedded back to 15 px.
_EQ_CALIB_WIDTHS = (0.7, 1.2, 1.6, 2.0)
_EQ_CALIB_SUPPORT = 3


@dataclass(frozen=True)
class BlurKernel:
    """A p x p blur kernel, p odd. Generated Gaussians are non-negative
    and unit-sum; calibrated kernels may carry small negative side lobes."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ContractError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ContractError(f"kernel size must be odd, got {w.shape[0]}")
        if not np.isfinite(w).all():
            raise ContractError("kernel contains non-finite weights")
        # generators normalize exactly; calibrated kernels may drift ~1%
        if abs(w.sum() - 1.0) > 0.05:
            raise ContractError(f"kernel sum {w.sum():.6f} is not ~1")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _offset_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    half = size // 2
    v, u = np.meshgrid(np.arange(size) - half, np.arange(size) - half,
                       indexing="ij")
    return u.astype(np.float64), v.astype(np.float64)


def isotropic_gaussian(width: float, size: int = DEFAULT_KERNEL_SIZE) -> BlurKernel:
    """Isotropic Gaussian of standard deviation `width` pixels."""
    if width <= 0:
        raise ContractError(f"width must be positive, got {width}")
    if size % 2 == 0:
        raise ContractError(f"size must be odd, got {size}")
    u, v = _offset_grid(size)
    w = np.exp(-(u * u + v * v) / (2.0 * width * width))
    return BlurKernel(w / w.sum())


def anisotropic_gaussian(angle: float, lambda1: float, lambda2: float,
                         size: int = DEFAULT_KERNEL_SIZE) -> BlurKernel:
    """Gaussian with covariance R(angle) diag(lambda1, lambda2) R(angle)^T.

    lambda1/lambda2 are variances (px^2) along the rotated axes; angle
    rotates the lambda1 axis from horizontal, in [0, pi].
    """
    if lambda1 <= 0 or lambda2 <= 0:
        raise ContractError("eigenvalue scalings must be positive")
    if not 0 <= angle <= np.pi:
        raise ContractError(f"angle must be in [0, pi], got {angle}")
    if size % 2 == 0:
        raise ContractError(f"size must be odd, got {size}")
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    sigma = rot @ np.diag([lambda1, lambda2]) @ rot.T
    inv = np.linalg.inv(sigma)
    u, v = _offset_grid(size)
    # quadratic form d^T Sigma^-1 d with d = (u, v)
    q = inv[0, 0] * u * u + (inv[0, 1] + inv[1, 0]) * u * v + inv[1, 1] * v * v
    w = np.exp(-0.5 * q)
    return BlurKernel(w / w.sum())


def delta_kernel(size: int = DEFAULT_KERNEL_SIZE) -> BlurKernel:
    if size % 2 == 0:
        raise ContractError(f"size must be odd, got {size}")
    w = np.zeros((size, size))
    w[size // 2, size // 2] = 1.0
    return BlurKernel(w)


def correlate_replicate(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """2-D correlation with edge-clamp padding, per channel, float64."""
    from scipy.ndimage import correlate

    out = np.empty(arr.shape, dtype=np.float64)
    src = arr.astype(np.float64)
    if arr.ndim == 2:
        return correlate(src, weights, mode="nearest")
    for c in range(arr.shape[2]):
        out[:, :, c] = correlate(src[:, :, c], weights, mode="nearest")
    return out


@dataclass(frozen=True)
class CalibrationResult:
    """Solver output: the calibrated kernel and the fit residual RMS."""

    kernel: BlurKernel
    residual_rms: float


def _shift_stack(arr: np.ndarray, size: int) -> np.ndarray:
    """(H, W, size^2) stack of replicate-padded shifts of a 2-D array.

    Channel di*size+dj holds the input shifted so the kernel tap at row
    di, col dj aligns with each output pixel; stack @ vec(kernel) then
    equals correlation with replicate padding.
    """
    half = size // 2
    h, w = arr.shape
    padded = np.pad(arr, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (h, w))
    # windows[di, dj][r, c] = arr[r + di - half, c + dj - half], clamped
    return windows.reshape(size * size, h, w).transpose(1, 2, 0)


def _fixed_crops(images: list[Image], count: int = 10, size: int = 64) -> list[np.ndarray]:
    """Deterministic grayscale crops cycling through the calibration set."""
    rng = np.random.default_rng(0x5EED)
    crops = []
    for i in range(count):
        img = images[i % len(images)]
        arr = img.data.astype(np.float64).mean(axis=2)
        c = min(size, arr.shape[0], arr.shape[1])
        top = int(rng.integers(0, arr.shape[0] - c + 1))
        left = int(rng.integers(0, arr.shape[1] - c + 1))
        crops.append(arr[top : top + c, left : left + c])
    return crops


def estimate_bicubic_equivalent(
    k_d: BlurKernel,
    s: int,
    calibration_images: list[Image],
    target_downsampler: str = "direct",
    support: int | None = None,
) -> CalibrationResult:
    """Find k_b so that bicubic-downsampling after blur with k_b matches
    blurring with k_d followed by the target downsampler, in least squares
    over fixed crops of the calibration images.

    The system is solved exactly via the p^2 x p^2 normal equations; a
    rank-deficient system raises instead of being silently regularized.
    `support` sets the solved kernel's size (default: k_d's size); large
    supports under strong downsampling are poorly observed and will trip
    the rank check, in which case solve on a narrower support.
    """
    if s < 2:
        raise ContractError(f"scale must be >= 2, got {s}")
    if target_downsampler not in ("direct", "bicubic"):
        raise ContractError(f"unknown downsampler {target_downsampler!r}")
    if not calibration_images:
        raise ContractError("at least one calibration image is required")
    p = support if support is not None else k_d.size
    if p % 2 == 0 or p < 1:
        raise ContractError(f"support must be a positive odd size, got {p}")
    min_dim = max(p, k_d.size) * s
    for img in calibration_images:
        if img.height <= min_dim or img.width <= min_dim:
            raise ContractError(
                f"calibration images must exceed {min_dim} px per side"
            )
    n = p * p
    gram = np.zeros((n, n))
    rhs = np.zeros(n)
    sq_target = 0.0
    rows = 0
    design_blocks = []
    target_blocks = []
    for crop in _fixed_crops(calibration_images):
        ch, cw = crop.shape[0] // s * s, crop.shape[1] // s * s
        stack = _shift_stack(crop, p)[:ch, :cw]
        cols = resize_array(np.ascontiguousarray(stack), ch // s, cw // s)
        a = cols.reshape(-1, n)
        blurred = correlate_replicate(crop, k_d.weights)[:ch, :cw]
        if target_downsampler == "direct":
            tgt = blurred[::s, ::s]
        else:
            tgt = resize_array(blurred, ch // s, cw // s)
        b = tgt.astype(np.float64).ravel()
        gram += a.T @ a
        rhs += a.T @ b
        sq_target += float(b @ b)
        rows += b.size
        design_blocks.append(a)
        target_blocks.append(b)
    if np.linalg.matrix_rank(gram) < n:
        raise ContractError(
            "calibration system is rank-deficient; supply more or more varied "
            "calibration images"
        )
    k_vec = np.linalg.solve(gram, rhs)
    sq_res = 0.0
    for a, b in zip(design_blocks, target_blocks):
        r = a @ k_vec - b
        sq_res += float(r @ r)
    kernel = BlurKernel(k_vec.reshape(p, p))
    return CalibrationResult(kernel, float(np.sqrt(sq_res / rows)))


def _synthetic_calibration_images(count: int = 10, size: int = 64) -> list[Image]:
    """Smooth pseudo-natural images for kernel calibration: white noise
    low-passed with a unit-width Gaussian, rescaled to [0, 1]."""
    images = []
    smooth_k = isotropic_gaussian(0.8, 5).weights
    for k in range(count):
        noise = gaussian_field(0xCA11B + k, (size + 8, size + 8))
        arr = correlate_replicate(noise, smooth_k)[4:-4, 4:-4]
        arr = (arr - arr.min()) / (arr.max() - arr.min())
        images.append(Image(arr[:, :, None].astype(np.float32)))
    return images


def _lambda_lattice(s: int) -> np.ndarray:
    return np.geomspace(_LAMBDA_MIN, _LAMBDA_MAX[s], _N_LAMBDA)


@lru_cache(maxsize=8)
def _sample_training_kernels_cached(s: int, stride: float) -> tuple:
    widths = np.arange(0.2, _WIDTH_MAX[s] + stride / 2, stride)
    kernels = [isotropic_gaussian(round(float(w), 4)) for w in widths]
    lams = _lambda_lattice(s)
    angles = np.arange(_N_ANGLES) * np.pi / _N_ANGLES
    for angle in angles:
        for i, l1 in enumerate(lams):
            for l2 in lams[: i + 1]:
                kernels.append(anisotropic_gaussian(float(angle), float(l1),
                                                    float(l2)))
    if s == 3:
        calib = _synthetic_calibration_images()
        pad = (DEFAULT_KERNEL_SIZE - _EQ_CALIB_SUPPORT) // 2
        sources = [isotropic_gaussian(w) for w in _EQ_CALIB_WIDTHS]
        sources.append(delta_kernel())
        for k_d in sources:
            res = estimate_bicubic_equivalent(k_d, s, calib,
                                              support=_EQ_CALIB_SUPPORT)
            kernels.append(BlurKernel(np.pad(res.kernel.weights, pad)))
    return tuple(kernels)


def sample_training_kernels(s: int, stride: float = 0.1) -> list[BlurKernel]:
    """The deterministic training pool for one scale factor.

    Isotropic widths 0.2 .. width_max(s) at the given stride, plus an
    anisotropic lattice (12 angles over [0, pi), 12 log-spaced
    eigenvalue scalings per axis with lambda1 >= lambda2), plus, for
    s=3, calibrated equivalents of direct-downsampler kernels.
    """
    if s not in (2, 3, 4):
        raise ContractError(f"scale must be 2, 3 or 4, got {s!r}")
    return list(_sample_training_kernels_cached(s, round(stride, 6)))
