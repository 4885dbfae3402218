"""
Fourier-Dirichlet estimate of the quadratic-variation operator of a curve-valued process

Time is mapped affinely onto [0, 2π]. With H the increments in Sobolev coordinates and
F̄[m, k] = exp(-i m t_k), the reduced operator is Q̄ = CCᴴ/(2M+1) with C = F̄H. Its nonzero
spectrum is that of the small real matrix K = CᴴC/(2M+1) = HᵀDH, D[ℓ, k] = d_M(t_ℓ - t_k),
which is what gets diagonalized.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional

import numpy as np

from qvmanifold.exceptions import DegenerateSpectrumError, InsufficientDataError, InvalidInputError
from qvmanifold.linalg_core import Eigensystem, InnerProductSpec, SubspaceBasis, eigh_descending, gram_schmidt
from qvmanifold.models import SpaceTimePanel

logger = logging.getLogger(__name__)

MODULE = 'fourier_qdim'

KERNEL_ATOL = 1e-12
HERMITIAN_RTOL = 1e-10


def dirichlet_kernel(t, M: int, period: float = 2 * np.pi):
    """Normalized Dirichlet kernel: 1 at multiples of the period, else sin((M+½)u)/((2M+1) sin(u/2))"""
    if M < 0:
        raise InvalidInputError(f"cutoff M must be nonnegative, got {M}", MODULE)
    scalar = np.isscalar(t)
    u = 2 * np.pi * np.asarray(t, dtype=float) / period
    remainder = np.mod(u, 2 * np.pi)
    on_lattice = (remainder < KERNEL_ATOL) | (2 * np.pi - remainder < KERNEL_ATOL)
    with np.errstate(divide='ignore', invalid='ignore'):
        values = np.sin((M + 0.5) * u) / ((2 * M + 1) * np.sin(u / 2))
    values = np.where(on_lattice, 1.0, values)
    return float(values) if scalar else values


def rescaled_time(t_grid: np.ndarray) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    return 2 * np.pi * (t_grid - t_grid[0]) / (t_grid[-1] - t_grid[0])


def default_cutoff(n_steps: int) -> int:
    return max(1, (n_steps - 1) // 2)


def _sobolev_increments(panel: SpaceTimePanel):
    if panel.n_steps < 1:
        raise InsufficientDataError("the Fourier estimator needs at least two time points", MODULE)
    increments = panel.increments()
    ip = InnerProductSpec.sobolev(panel.x_grid)
    return increments, ip.coordinates(increments)


@dataclass
class FourierEstimate:
    """Reduced operator Q̄_T for one panel and cutoff M"""

    cutoff: int
    n_steps: int
    times: np.ndarray
    coefficients: np.ndarray
    kernel: Eigensystem
    p_hat_eps: int = 0
    x_grid: np.ndarray = field(default=None, repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.kernel.values

    @cached_property
    def q_bar(self) -> np.ndarray:
        """(2M+1)×(2M+1) Hermitian matrix, rows and columns indexed by m = -M..M"""
        C = self.coefficients
        q_bar = C @ C.conj().T / (2 * self.cutoff + 1)
        scale = float(np.max(np.abs(q_bar))) if q_bar.size else 0.0
        asymmetry = float(np.max(np.abs(q_bar - q_bar.conj().T))) if q_bar.size else 0.0
        if asymmetry > HERMITIAN_RTOL * max(scale, np.finfo(float).tiny):
            raise DegenerateSpectrumError(f"reduced operator is not Hermitian (deviation {asymmetry:.3e})", MODULE)
        return q_bar

    @property
    def gamma(self) -> np.ndarray:
        """Unit eigenvectors γ_j of Q̄ for the positive eigenvalues, as columns"""
        positive = self.eigenvalues > 0
        vectors = self.coefficients @ self.kernel.vectors[:, positive]
        norms = np.linalg.norm(vectors, axis=0)
        return vectors / norms

    def to_dict(self) -> Dict:
        return {
            'cutoff': self.cutoff,
            'n_steps': self.n_steps,
            'p_hat_eps': self.p_hat_eps,
            'eigenvalues': self.eigenvalues.tolist(),
        }


def reduced_operator(panel: SpaceTimePanel, M: Optional[int] = None) -> FourierEstimate:
    _, coords = _sobolev_increments(panel)
    M = default_cutoff(panel.n_steps) if M is None else M
    if M < 1:
        raise InvalidInputError(f"cutoff M must be at least 1, got {M}", MODULE)
    times = rescaled_time(panel.t_grid)[:-1]
    frequencies = np.arange(-M, M + 1)
    fourier = np.exp(-1j * np.outer(frequencies, times))
    coefficients = fourier @ coords
    gram = coefficients.conj().T @ coefficients / (2 * M + 1)
    # K is real in exact arithmetic
    kernel = eigh_descending(np.real(gram))
    kernel = Eigensystem(values=np.clip(kernel.values, 0.0, None), vectors=kernel.vectors)
    est = FourierEstimate(cutoff=M, n_steps=panel.n_steps, times=times, coefficients=coefficients,
                          kernel=kernel, x_grid=panel.x_grid)
    est.p_hat_eps = qdim_estimate(est)
    logger.info(f"reduced_operator - M: {M}, p_hat_eps: {est.p_hat_eps}")
    return est


def qdim_estimate(est: FourierEstimate, eps: Optional[float] = None, relative: bool = False) -> int:
    """Number of positive eigenvalues at or above eps (absolute, or a share of the trace if relative)"""
    eps = float(est.n_steps) ** (-1.0 / 3.0) if eps is None else eps
    if eps <= 0:
        raise InvalidInputError(f"eps must be positive, got {eps}", MODULE)
    values = est.eigenvalues
    threshold = eps * float(np.sum(values)) if relative else eps
    return int(np.count_nonzero((values > 0) & (values >= threshold)))


@dataclass
class EigenfunctionResult:
    functions: np.ndarray
    basis: SubspaceBasis
    imaginary_share: float
    eigenvalues: np.ndarray

    @property
    def count(self) -> int:
        return self.functions.shape[0]

    def to_dict(self) -> Dict:
        return {
            'count': self.count,
            'imaginary_share': self.imaginary_share,
            'eigenvalues': self.eigenvalues.tolist(),
        }


def eigenfunctions(est: FourierEstimate, panel: SpaceTimePanel, eps: Optional[float] = None,
                   relative: bool = False) -> EigenfunctionResult:
    """Grid functions (1/(2M+1)) Σ_s γ_j(s) Σ_k exp(i s t_k) ΔX_k for the p̂^ε leading eigenvalues"""
    if panel.n_steps != est.n_steps:
        raise InvalidInputError("estimate and panel have different time grids", MODULE)
    ip = InnerProductSpec.sobolev(panel.x_grid)
    count = qdim_estimate(est, eps, relative)
    if count == 0:
        empty = np.zeros((0, panel.n_space))
        return EigenfunctionResult(empty, SubspaceBasis(empty, ip, orthonormal=True), 0.0, np.zeros(0))

    increments = panel.increments()
    frequencies = np.arange(-est.cutoff, est.cutoff + 1)
    synthesis = np.exp(1j * np.outer(est.times, frequencies))
    gamma = est.gamma[:, :count]
    raw = (increments.T @ (synthesis @ gamma)).T / (2 * est.cutoff + 1)
    total = float(np.linalg.norm(raw))
    imaginary_share = float(np.linalg.norm(raw.imag) / total) if total > 0 else 0.0
    functions = raw.real
    basis = gram_schmidt(functions, ip)
    logger.debug(f"eigenfunctions - count: {count}, imaginary_share: {imaginary_share:.3e}")
    return EigenfunctionResult(functions=functions, basis=basis, imaginary_share=imaginary_share,
                               eigenvalues=est.eigenvalues[:count].copy())


def kernel_operator(panel: SpaceTimePanel, M: Optional[int] = None) -> np.ndarray:
    """HᵀDH built from the Dirichlet kernel matrix; shares the nonzero spectrum of Q̄"""
    _, coords = _sobolev_increments(panel)
    M = default_cutoff(panel.n_steps) if M is None else M
    times = rescaled_time(panel.t_grid)[:-1]
    D = dirichlet_kernel(np.subtract.outer(times, times), M)
    return coords.T @ D @ coords
