"""Per-pixel degradation descriptors.

A degradation is summarized as t kernel coefficients plus one
normalized noise channel (sigma / 75), tiled or varied over the output
pixel grid. The network consumes these maps concatenated to the input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .kernels import isotropic_gaussian
from .pca import PcaBasis, project

SIGMA_MAX = 75.0


@dataclass(frozen=True)
class DegradationMaps:
    """(H, W, t+1) float32 stack: t coefficient channels then sigma/75."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or d.shape[2] < 2:
            raise ContractError(f"maps must be (H, W, t+1), got {d.shape}")
        if not np.isfinite(d).all():
            raise ContractError("maps contain non-finite values")
        noise = d[:, :, -1]
        if noise.min() < -1e-6 or noise.max() > 1 + 1e-6:
            raise ContractError("noise channel must lie in [0, 1]")
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]


def stretch(coeffs: np.ndarray, sigma: float, width: int, height: int) -> DegradationMaps:
    """Tile a coefficient vector and noise level over a width x height grid."""
    coeffs = np.asarray(coeffs, dtype=np.float64).ravel()
    if not 0.0 <= sigma <= SIGMA_MAX:
        raise ContractError(f"sigma must be in [0, {SIGMA_MAX:g}], got {sigma}")
    if width < 1 or height < 1:
        raise ContractError("grid dimensions must be positive")
    v = np.concatenate([coeffs, [sigma / SIGMA_MAX]]).astype(np.float32)
    data = np.broadcast_to(v, (height, width, v.size)).copy()
    return DegradationMaps(data)


def stretch_spatial(width_map: np.ndarray, sigma_map: np.ndarray,
                    basis: PcaBasis) -> DegradationMaps:
    """Per-pixel maps from per-pixel kernel widths and noise levels.

    Each distinct width is projected once and scattered, so a map with
    k distinct widths costs k kernel constructions.
    """
    width_map = np.asarray(width_map, dtype=np.float64)
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    if width_map.shape != sigma_map.shape or width_map.ndim != 2:
        raise ContractError(
            f"map shapes differ or are not 2-D: {width_map.shape} vs {sigma_map.shape}"
        )
    if width_map.min() <= 0:
        raise ContractError("widths must be positive")
    if sigma_map.min() < 0 or sigma_map.max() > SIGMA_MAX:
        raise ContractError(f"sigmas must be in [0, {SIGMA_MAX:g}]")
    h, w = width_map.shape
    uniq, inverse = np.unique(width_map, return_inverse=True)
    table = np.stack([
        project(isotropic_gaussian(float(wd), basis.kernel_size), basis)
        for wd in uniq
    ])
    coeff_plane = table[inverse].reshape(h, w, basis.dim_out)
    noise_plane = (sigma_map / SIGMA_MAX)[:, :, None]
    return DegradationMaps(
        np.concatenate([coeff_plane, noise_plane], axis=2).astype(np.float32)
    )
