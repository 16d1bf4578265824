"""Fidelity metrics.

Both metrics default to the benchmark-table convention: clip to [0, 1],
convert RGB to luma, crop a caller-chosen border (the scale factor, for
SR comparisons), then score. The "rgb" convention skips the luma step
and scores all channels. Accumulation is float64 throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ContractError
from .image import Image, rgb_to_y

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _prepare(a: Image, b: Image, convention: str, border_crop: int) -> tuple:
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels):
        raise ContractError(
            f"dimension mismatch: {a.data.shape} vs {b.data.shape}"
        )
    if convention not in ("y", "rgb"):
        raise ContractError(f"unknown convention {convention!r}")
    if border_crop < 0 or 2 * border_crop >= min(a.height, a.width):
        raise ContractError(f"border_crop {border_crop} leaves no pixels")
    xa = np.clip(a.data.astype(np.float64), 0.0, 1.0)
    xb = np.clip(b.data.astype(np.float64), 0.0, 1.0)
    if convention == "y" and a.channels == 3:
        w = np.array([65.481, 128.553, 24.966]) / 255.0
        xa = (xa @ w + 16.0 / 255.0)[:, :, None]
        xb = (xb @ w + 16.0 / 255.0)[:, :, None]
    if border_crop:
        c = border_crop
        xa = xa[c:-c, c:-c]
        xb = xb[c:-c, c:-c]
    return xa, xb


def psnr(a: Image, b: Image, convention: str = "y", border_crop: int = 0) -> float:
    """Peak signal-to-noise ratio in dB, peak 1. +inf for identical inputs."""
    xa, xb = _prepare(a, b, convention, border_crop)
    mse = float(np.mean((xa - xb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_channel(xa: np.ndarray, xb: np.ndarray) -> float:
    win = _gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_a = convolve2d(xa, win, mode="valid")
    mu_b = convolve2d(xb, win, mode="valid")
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = convolve2d(xa * xa, win, mode="valid") - mu_aa
    var_b = convolve2d(xb * xb, win, mode="valid") - mu_bb
    cov = convolve2d(xa * xb, win, mode="valid") - mu_ab
    num = (2 * mu_ab + c1) * (2 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: Image, b: Image, convention: str = "y", border_crop: int = 0) -> float:
    """Mean local structural similarity, 11x11 Gaussian window, sigma 1.5.

    Local statistics come from fully supported (valid-mode) windows
    only. Multi-channel comparisons under the "rgb" convention average
    per-channel scores.
    """
    xa, xb = _prepare(a, b, convention, border_crop)
    if xa.shape[0] < SSIM_WINDOW or xa.shape[1] < SSIM_WINDOW:
        raise ContractError(
            f"image too small for the {SSIM_WINDOW}x{SSIM_WINDOW} window after crop"
        )
    scores = [_ssim_channel(xa[:, :, c], xb[:, :, c]) for c in range(xa.shape[2])]
    return float(np.mean(scores))


@dataclass(frozen=True)
class MetricReport:
    """One file's scores under a named convention."""

    file: str
    psnr_db: float
    ssim: float
    convention: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "file": self.file,
                "psnr_db": None if math.isinf(self.psnr_db) else round(self.psnr_db, 4),
                "ssim": round(self.ssim, 5),
                "convention": self.convention,
            }
        )
