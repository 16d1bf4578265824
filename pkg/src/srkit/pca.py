"""Linear compression of vectorized blur kernels.

The basis comes from the uncentered second-moment matrix of the
fitting sample (no mean subtraction), so projection is strictly linear:
the zero kernel maps to zero coefficients and no mean vector needs to
travel with the basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .kernels import BlurKernel

DEFAULT_COEFF_DIM = 15


@dataclass(frozen=True)
class PcaBasis:
    """Orthonormal row basis: projection is (t, p^2).

    spectrum, when present, holds the full eigenvalue list of the
    fitting sample's second moment in non-increasing order; it is
    informational and not serialized.
    """

    projection: np.ndarray
    energy_retained: float
    spectrum: np.ndarray | None = None

    def __post_init__(self):
        pr = np.asarray(self.projection, dtype=np.float64)
        if pr.ndim != 2 or pr.shape[0] > pr.shape[1]:
            raise ContractError(f"projection must be t x p^2 with t <= p^2, "
                                f"got {pr.shape}")
        gram = pr @ pr.T
        if not np.allclose(gram, np.eye(pr.shape[0]), atol=1e-6):
            raise ContractError("projection rows are not orthonormal")
        pr = np.ascontiguousarray(pr)
        pr.setflags(write=False)
        object.__setattr__(self, "projection", pr)

    @property
    def dim_in(self) -> int:
        return self.projection.shape[1]

    @property
    def dim_out(self) -> int:
        return self.projection.shape[0]

    @property
    def kernel_size(self) -> int:
        return int(round(self.dim_in**0.5))


def fit_pca(kernels: list[BlurKernel], t: int = DEFAULT_COEFF_DIM) -> PcaBasis:
    """Top-t eigenvectors of the sample's uncentered second moment.

    energy_retained is the captured fraction of total eigenvalue mass
    over the fitting sample.
    """
    if not kernels:
        raise ContractError("fit_pca needs a non-empty sample")
    p = kernels[0].size
    n = p * p
    if t > n:
        raise ContractError(f"t={t} exceeds kernel dimension {n}")
    if len(kernels) < t:
        raise ContractError(f"sample count {len(kernels)} below t={t}")
    if any(k.size != p for k in kernels):
        raise ContractError("kernels in the sample have mixed sizes")
    vecs = np.stack([k.weights.ravel() for k in kernels])
    moment = (vecs.T @ vecs) / len(kernels)
    eigvals, eigvecs = np.linalg.eigh(moment)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    if eigvals[-1] < -1e-9:
        raise ContractError("second-moment matrix is not PSD")
    energy = float(eigvals[:t].sum() / eigvals.sum())
    projection = eigvecs[:, order[:t]].T.copy()
    # sign convention: make the largest-magnitude entry of each row positive
    for row in range(t):
        peak = np.argmax(np.abs(projection[row]))
        if projection[row, peak] < 0:
            projection[row] = -projection[row]
    return PcaBasis(projection, energy, spectrum=eigvals)


def project(kernel: BlurKernel, basis: PcaBasis) -> np.ndarray:
    """Coefficient vector (t,) of a kernel in the basis."""
    if kernel.size != basis.kernel_size:
        raise ContractError(
            f"kernel size {kernel.size} does not match basis ({basis.kernel_size})"
        )
    return basis.projection @ kernel.weights.ravel()


def project_array(flat_kernels: np.ndarray, basis: PcaBasis) -> np.ndarray:
    """Project (m, p^2) rows of vectorized kernels to (m, t)."""
    if flat_kernels.ndim != 2 or flat_kernels.shape[1] != basis.dim_in:
        raise ContractError(f"expected (m, {basis.dim_in}) array")
    return flat_kernels @ basis.projection.T


def reconstruct(coeffs: np.ndarray, basis: PcaBasis) -> np.ndarray:
    """Back-project coefficients to a p x p kernel array (may be lossy)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (basis.dim_out,):
        raise ContractError(f"expected {basis.dim_out} coefficients")
    p = basis.kernel_size
    return (basis.projection.T @ coeffs).reshape(p, p)
