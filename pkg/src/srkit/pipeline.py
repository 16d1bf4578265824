"""The shared inference path behind the CLI and the HTTP service:
parameter validation, maps construction, forward pass, clipping.

Both front ends accept (width, sigma) rather than raw kernels: the
width picks an isotropic Gaussian, mirroring how the sweep ranges are
specified everywhere else.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .formats import basis_digest, load_basis, load_model
from .image import Image
from .kernels import isotropic_gaussian
from .maps import SIGMA_MAX, stretch
from .net import Model, forward
from .pca import PcaBasis, project

WIDTH_MAX = 2.4
DEFAULT_WIDTH_RANGE = (0.1, 2.4, 0.1)
DEFAULT_SIGMA_RANGE = (0.0, 75.0, 5.0)


def check_width(width) -> float:
    try:
        width = float(width)
    except (TypeError, ValueError):
        raise ContractError(f"width must be a number, got {width!r}") from None
    if not np.isfinite(width) or not 0.0 < width <= WIDTH_MAX:
        raise ContractError(f"width must be in (0, {WIDTH_MAX}], got {width!r}")
    return width


def check_sigma(sigma) -> float:
    try:
        sigma = float(sigma)
    except (TypeError, ValueError):
        raise ContractError(f"sigma must be a number, got {sigma!r}") from None
    if not np.isfinite(sigma) or not 0.0 <= sigma <= SIGMA_MAX:
        raise ContractError(f"sigma must be in [0, {SIGMA_MAX:g}], got {sigma!r}")
    return sigma


def lattice(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic lattice, rounded so 0.1-strides stay clean."""
    if step <= 0:
        raise ContractError(f"lattice step must be positive, got {step!r}")
    if stop < start:
        raise ContractError(f"empty lattice: stop {stop!r} < start {start!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 6) for i in range(count)]


def load_pair(model_path: str, basis_path: str) -> tuple[Model, PcaBasis]:
    """Load a weight container and its basis; refuse a basis whose
    digest differs from the one stamped into the container."""
    model, digest = load_model(model_path)
    basis = load_basis(basis_path)
    if basis_digest(basis) != digest:
        raise ContractError(
            "basis file does not match the basis this model was trained "
            "against (digest mismatch)"
        )
    return model, basis


def super_resolve(model: Model, basis: PcaBasis, lr: Image,
                  width: float, sigma: float) -> Image:
    """Width/sigma-conditioned forward pass, clipped to [0, 1]."""
    width = check_width(width)
    sigma = check_sigma(sigma)
    if not model.noise_conditioned and sigma != 0.0:
        raise ContractError(
            "this model has no noise input; sigma must be 0"
        )
    kernel = isotropic_gaussian(width)
    coeffs = project(kernel, basis)
    maps = stretch(coeffs, sigma, lr.width, lr.height)
    out = forward(model, lr, maps)
    return Image(np.clip(out.data, 0.0, 1.0))
