"""
Variance-based factor extraction from a space-time panel and the PC(k) choice of the number of factors
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from qvmanifold.exceptions import DegenerateSpectrumError, InvalidInputError, ShapeError
from qvmanifold.models import SpaceTimePanel

logger = logging.getLogger(__name__)

MODULE = 'factor_model'

# Squared singular values below this share of the largest one count as zero
SPECTRAL_FLOOR = 1e-18

PENALTIES = ('pc1', 'pc2', 'pc3')


@dataclass
class FactorFit:
    """Ŷ(k) with ρ·ŶᵀŶ = I_k, loadings Λ̂ = ρ·𝕏ᵀŶ and the unit eigenvectors of 𝕏𝕏ᵀ"""

    k: int
    y_hat: np.ndarray
    lambda_hat: np.ndarray
    eigvecs: np.ndarray
    eigenvalues: np.ndarray
    objective: float
    rho: float
    delta: float

    def fitted(self) -> np.ndarray:
        return self.y_hat @ self.lambda_hat.T

    def to_dict(self) -> Dict:
        return {
            'k': self.k,
            'objective': self.objective,
            'rho': self.rho,
            'delta': self.delta,
            'eigenvalues': self.eigenvalues[:self.k].tolist(),
        }


def _spectrum(signal: np.ndarray):
    """Left singular vectors (sign-fixed) and squared singular values of 𝕏"""
    u, s, _ = linalg.svd(signal, full_matrices=False)
    for j in range(u.shape[1]):
        pivot = u[np.argmax(np.abs(u[:, j])), j]
        if pivot < 0:
            u[:, j] = -u[:, j]
    return u, s ** 2


def extract_factors(panel: SpaceTimePanel, k: int) -> FactorFit:
    signal = panel.signal()
    n_rows, n_space = signal.shape
    if not 1 <= k < min(n_rows, n_space):
        raise InvalidInputError(f"k must lie in [1, {min(n_rows, n_space) - 1}], got {k}", MODULE)
    eigvecs, eigenvalues = _spectrum(signal)
    if eigenvalues[0] <= 0.0:
        raise DegenerateSpectrumError("the panel has no nonzero eigenvalue", MODULE)
    rho = panel.rho
    y_hat = eigvecs[:, :k] / np.sqrt(rho)
    lambda_hat = rho * signal.T @ y_hat
    fit = FactorFit(k=k, y_hat=y_hat, lambda_hat=lambda_hat, eigvecs=eigvecs[:, :k].copy(),
                    eigenvalues=eigenvalues, objective=0.0, rho=rho, delta=panel.delta)
    fit.objective = objective_v(panel, fit)
    logger.debug(f"extract_factors - k: {k}, objective: {fit.objective:.6g}")
    return fit


def objective_v(panel: SpaceTimePanel, fit: Optional[FactorFit] = None) -> float:
    """ρδ·‖𝕏 − ŶΛ̂ᵀ‖²; without a fit this is the k = 0 baseline ρδ·Σ X²"""
    signal = panel.signal()
    scale = panel.rho * panel.delta
    if fit is None:
        return float(scale * np.sum(signal ** 2))
    if fit.y_hat.shape[0] != signal.shape[0] or fit.lambda_hat.shape[0] != signal.shape[1]:
        raise ShapeError("fit does not belong to this panel", MODULE)
    residual = signal - fit.fitted()
    return float(scale * np.sum(residual ** 2))


@dataclass
class PenaltySpec:
    """q(n, N) = σ̂²·g(n, N) for one of the three standard choices of g"""

    name: str = 'pc1'

    def __post_init__(self):
        if self.name not in PENALTIES:
            raise InvalidInputError(f"unknown penalty {self.name!r}; expected one of {', '.join(PENALTIES)}", MODULE)

    def factor(self, n: int, N: int) -> float:
        c2 = min(n, N)
        if self.name == 'pc1':
            return (n + N) / (n * N) * np.log(n * N / (n + N))
        if self.name == 'pc2':
            return (n + N) / (n * N) * np.log(c2)
        return np.log(c2) / c2

    def value(self, n: int, N: int, sigma2: float) -> float:
        return float(sigma2 * self.factor(n, N))

    @staticmethod
    def c_nn(rho: float, delta: float) -> float:
        """C_nN = min(δ^(-1/2), ρ^(-1/2))"""
        return float(min(delta ** -0.5, rho ** -0.5))

    def to_dict(self) -> Dict:
        return {'name': self.name}


@dataclass
class PcResult:
    d_hat: int
    table: pd.DataFrame
    penalty: PenaltySpec

    def to_dict(self) -> Dict:
        return {'d_hat': self.d_hat, 'penalty': self.penalty.name}


def pc_criterion(panel: SpaceTimePanel, kmax: int = 8, penalty: Optional[PenaltySpec] = None) -> PcResult:
    """d̂ = argmin_{1≤k≤kmax} V(k) + k·q(n, N), ties going to the smaller k

    V(k) is the tail of the squared singular values of 𝕏, which equals the residual of
    the rank-k fit; values under the spectral floor are treated as exact zeros.
    """
    penalty = penalty or PenaltySpec()
    signal = panel.signal()
    n_rows, n_space = signal.shape
    if not 1 <= kmax < min(n_rows, n_space):
        raise InvalidInputError(f"kmax must lie in [1, {min(n_rows, n_space) - 1}], got {kmax}", MODULE)
    _, eigenvalues = _spectrum(signal)
    if eigenvalues[0] <= 0.0:
        raise DegenerateSpectrumError("the panel has no nonzero eigenvalue", MODULE)
    eigenvalues = np.where(eigenvalues < SPECTRAL_FLOOR * eigenvalues[0], 0.0, eigenvalues)
    scale = panel.rho * panel.delta
    tails = np.concatenate([np.cumsum(eigenvalues[::-1])[::-1], [0.0]])
    v = scale * tails[:kmax + 1]

    n_steps = n_rows - 1
    sigma2 = v[kmax]
    q = penalty.value(n_steps, n_space, sigma2)
    ks = np.arange(kmax + 1)
    pc = v + ks * q
    d_hat = int(np.argmin(pc[1:]) + 1)
    table = pd.DataFrame({'k': ks, 'V': v, 'penalty': ks * q, 'PC': pc})
    logger.info(f"pc_criterion - kmax: {kmax}, penalty: {penalty.name}, d_hat: {d_hat}")
    return PcResult(d_hat=d_hat, table=table, penalty=penalty)
