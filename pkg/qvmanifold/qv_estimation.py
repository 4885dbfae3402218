"""
Realized quadratic covariation from synchronous observations and eigenvalue-threshold rank estimation
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from qvmanifold.exceptions import InsufficientDataError, InvalidInputError, ShapeError
from qvmanifold.linalg_core import Eigensystem, eigh_descending
from qvmanifold.models import MultiPath

logger = logging.getLogger(__name__)

MODULE = 'qv_estimation'

# Negative eigenvalues above -NEGATIVE_RTOL * trace are roundoff and clamped silently
NEGATIVE_RTOL = 1e-10


@dataclass
class QvMatrix:
    """Realized [M]_T with its descending eigensystem"""

    matrix: np.ndarray
    eig: Eigensystem
    horizon: float
    n_steps: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig.values

    def to_dict(self) -> Dict:
        return {
            'dim': self.dim,
            'horizon': self.horizon,
            'n_steps': self.n_steps,
            'trace': self.trace,
            'matrix': self.matrix.tolist(),
            'eigenvalues': self.eigenvalues.tolist(),
        }


def qv_from_increments(increments: np.ndarray, horizon: float) -> QvMatrix:
    """Gram matrix of increment columns, Σ_k ΔM_k ΔM_kᵀ"""
    increments = np.asarray(increments, dtype=float)
    if increments.ndim == 1:
        increments = increments[:, None]
    if increments.ndim != 2:
        raise ShapeError(f"increments must be 2-D, got shape {increments.shape}", MODULE)
    if increments.shape[0] == 0:
        raise InsufficientDataError("at least one increment is required", MODULE)
    matrix = increments.T @ increments
    matrix = (matrix + matrix.T) / 2
    eig = eigh_descending(matrix)
    trace = float(np.trace(matrix))
    floor = -NEGATIVE_RTOL * max(trace, 0.0)
    if eig.values.size and eig.values[-1] < floor:
        logger.warning(f"qv_from_increments - clamping eigenvalue {eig.values[-1]:.3e} below {floor:.3e}")
    eig = Eigensystem(values=np.clip(eig.values, 0.0, None), vectors=eig.vectors)
    return QvMatrix(matrix=matrix, eig=eig, horizon=float(horizon), n_steps=increments.shape[0])


def realized_qv(path: MultiPath) -> QvMatrix:
    if path.n_steps < 1:
        raise InsufficientDataError("realized quadratic covariation needs at least two observations", MODULE)
    return qv_from_increments(path.increments(), path.horizon)


def qv_quadratic_form(v: np.ndarray, Q: QvMatrix) -> float:
    """vᵀ[M]_T v, the bracket of the linear combination v·M"""
    v = np.asarray(v, dtype=float)
    if v.shape != (Q.dim,):
        raise InvalidInputError(f"expected a vector of length {Q.dim}, got shape {v.shape}", MODULE)
    return float(v @ Q.matrix @ v)


def default_eps(n_steps: int) -> float:
    """n̄^(-1/3)"""
    if n_steps < 1:
        raise InsufficientDataError("default threshold needs at least one increment", MODULE)
    return float(n_steps) ** (-1.0 / 3.0)


def rank_estimate(Q: QvMatrix, eps_rel: Optional[float] = None) -> int:
    """Number of eigenvalues carrying at least eps_rel of the trace"""
    if eps_rel is None:
        eps_rel = default_eps(Q.n_steps)
    if not 0.0 < eps_rel < 1.0:
        raise InvalidInputError(f"eps_rel must lie in (0, 1), got {eps_rel}", MODULE)
    values = Q.eigenvalues
    total = float(np.sum(values))
    if total <= 0.0:
        return 0
    return int(np.count_nonzero(values >= eps_rel * total))


def _check_spot(spot_vol: np.ndarray, t_grid: np.ndarray) -> tuple:
    spot_vol = np.asarray(spot_vol, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if spot_vol.ndim != 3 or spot_vol.shape[0] != t_grid.size:
        raise ShapeError(
            f"spot volatility must have shape ({t_grid.size}, d, m), got {spot_vol.shape}", MODULE)
    if t_grid.size < 2:
        raise InsufficientDataError("integration needs at least two grid points", MODULE)
    return spot_vol, t_grid


def integrated_qv(spot_vol: np.ndarray, t_grid: np.ndarray) -> QvMatrix:
    """Left Riemann sum of σ_s σ_sᵀ ds, the quadratic variation of ∫σ dB"""
    spot_vol, t_grid = _check_spot(spot_vol, t_grid)
    dt = np.diff(t_grid)
    weighted = spot_vol[:-1] * np.sqrt(dt)[:, None, None]
    # stack σ_s sqrt(ds) column blocks so the Gram helper applies unchanged
    blocks = np.transpose(weighted, (0, 2, 1)).reshape(-1, spot_vol.shape[1])
    return qv_from_increments(blocks, float(t_grid[-1] - t_grid[0]))


def spot_rank_sup(spot_vol: np.ndarray, t_grid: np.ndarray, tol: float = 1e-12) -> int:
    """sup_t rank(σ_t σ_tᵀ) over the grid"""
    spot_vol, _ = _check_spot(spot_vol, t_grid)
    ranks = [np.linalg.matrix_rank(s @ s.T, tol=tol) for s in spot_vol]
    return int(max(ranks))
