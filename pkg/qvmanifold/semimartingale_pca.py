"""
Quadratic-variation PCA of an observed path: volatility / pure-drift split and OLS projection
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import linalg

from qvmanifold.exceptions import DegenerateSpectrumError, InvalidInputError, ShapeError
from qvmanifold.models import MultiPath
from qvmanifold.qv_estimation import QvMatrix, default_eps, rank_estimate, realized_qv

logger = logging.getLogger(__name__)

MODULE = 'semimartingale_pca'


@dataclass
class PcaSplit:
    """Rotation V̂ (rows are eigenvectors of [M]_T) and the rotated paths Ĵ = V̂M"""

    rotation: np.ndarray
    j_paths: MultiPath
    p_hat: int
    eigenvalues: np.ndarray
    eps_rel: float
    qv: QvMatrix

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @property
    def w_indices(self) -> range:
        """Zero-based indices of the volatility components"""
        return range(self.p_hat)

    @property
    def d_indices(self) -> range:
        """Zero-based indices of the pure-drift components"""
        return range(self.p_hat, self.dim)

    def w_basis(self) -> np.ndarray:
        return self.rotation[:self.p_hat]

    def d_basis(self) -> np.ndarray:
        return self.rotation[self.p_hat:]

    def component_qv(self) -> np.ndarray:
        """[Ĵⁱ]_T for every component"""
        increments = self.j_paths.increments()
        return np.sum(increments ** 2, axis=0)

    def to_dict(self) -> Dict:
        return {
            'dim': self.dim,
            'p_hat': self.p_hat,
            'eps_rel': self.eps_rel,
            'eigenvalues': self.eigenvalues.tolist(),
            'rotation': self.rotation.tolist(),
            'explained': explained_qv_ratios(self.eigenvalues).tolist() if self.qv.trace > 0 else None,
        }


def pca_split(path: MultiPath, eps_rel: Optional[float] = None) -> PcaSplit:
    qv = realized_qv(path)
    if eps_rel is None:
        eps_rel = default_eps(path.n_steps)
    p_hat = rank_estimate(qv, eps_rel)
    rotation = qv.eig.vectors.T.copy()
    j_values = path.values @ rotation.T
    j_paths = MultiPath(path.t_grid, j_values, [f"J{i + 1}" for i in range(path.dim)])
    logger.info(f"pca_split - dim: {path.dim}, p_hat: {p_hat}, eps_rel: {eps_rel:.4g}")
    return PcaSplit(rotation=rotation, j_paths=j_paths, p_hat=p_hat,
                    eigenvalues=qv.eigenvalues.copy(), eps_rel=float(eps_rel), qv=qv)


def explained_qv_ratios(eigenvalues: np.ndarray) -> np.ndarray:
    """Cumulative shares η̂ᵢ = Σ_{j≤i} θ̂ⱼ / Σ θ̂"""
    values = np.asarray(eigenvalues, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidInputError("eigenvalues must be a non-empty vector", MODULE)
    if np.any(values < 0):
        raise InvalidInputError("eigenvalues must be nonnegative", MODULE)
    total = float(np.sum(values))
    if total <= 0.0:
        raise DegenerateSpectrumError("all eigenvalues are zero", MODULE)
    ratios = np.cumsum(values) / total
    ratios[-1] = 1.0
    return ratios


@dataclass
class OlsProjection:
    coefficients: np.ndarray
    fitted: np.ndarray
    residual: np.ndarray
    rank_deficient: bool

    def to_dict(self) -> Dict:
        return {
            'coefficients': self.coefficients.tolist(),
            'rank_deficient': self.rank_deficient,
            'residual_norm': float(np.linalg.norm(self.residual)),
        }


def ols_project(target: np.ndarray, split: PcaSplit) -> OlsProjection:
    """Least-squares coefficients of `target` on the Ĵ columns

    Collinear designs get the minimum-norm solution and `rank_deficient` is set.
    """
    target = np.asarray(target, dtype=float)
    design = split.j_paths.values
    if target.shape != (design.shape[0],):
        raise ShapeError(f"target must have {design.shape[0]} samples, got shape {target.shape}", MODULE)
    coefficients, _, rank, _ = linalg.lstsq(design, target)
    rank_deficient = bool(rank < design.shape[1])
    if rank_deficient:
        logger.warning(f"ols_project - design rank {rank} below {design.shape[1]}, using minimum-norm solution")
    fitted = design @ coefficients
    return OlsProjection(coefficients=coefficients, fitted=fitted, residual=target - fitted,
                         rank_deficient=rank_deficient)
