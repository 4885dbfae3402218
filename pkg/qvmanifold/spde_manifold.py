"""
Quadratic-variation analysis of extracted factors and the Q̂ ⊕ N̂ split of the invariant manifold
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg
from scipy.stats import spearmanr

from qvmanifold import fourier_qdim
from qvmanifold.exceptions import DegenerateBasisError, InvalidInputError, ShapeError
from qvmanifold.factor_model import FactorFit, PENALTIES, PenaltySpec, extract_factors, pc_criterion
from qvmanifold.linalg_core import InnerProductSpec, SubspaceBasis, subspace_distance
from qvmanifold.models import MultiPath, SpaceTimePanel
from qvmanifold.qv_estimation import QvMatrix, default_eps, qv_from_increments, rank_estimate
from qvmanifold.semimartingale_pca import explained_qv_ratios

logger = logging.getLogger(__name__)

MODULE = 'spde_manifold'

ROUTE_THRESHOLD = 'threshold'
ROUTE_FOURIER = 'fourier'
QDIM_ROUTES = (ROUTE_THRESHOLD, ROUTE_FOURIER)


def factor_qv_matrix(y_hat: Union[np.ndarray, MultiPath], horizon: float = 1.0) -> QvMatrix:
    """m̂_{ℓk} = Σ_i ΔŶ_{i,ℓ} ΔŶ_{i,k}"""
    if isinstance(y_hat, MultiPath):
        return qv_from_increments(y_hat.increments(), y_hat.horizon)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.ndim == 1:
        y_hat = y_hat[:, None]
    return qv_from_increments(np.diff(y_hat, axis=0), horizon)


def estimate_loadings(panel: SpaceTimePanel, eigvecs: np.ndarray) -> np.ndarray:
    """φ̂ᵢ(x) = √ρ Σ_k yⁱ_{t_k} X_{t_k}(x), one row per eigenvector"""
    eigvecs = np.asarray(eigvecs, dtype=float)
    if eigvecs.ndim == 1:
        eigvecs = eigvecs[:, None]
    signal = panel.signal()
    if eigvecs.shape[0] != signal.shape[0]:
        raise ShapeError(f"eigenvectors must have {signal.shape[0]} entries, got {eigvecs.shape[0]}", MODULE)
    return np.sqrt(panel.rho) * eigvecs.T @ signal


def _row_span(coefficients: np.ndarray, directions: np.ndarray, ip: InnerProductSpec) -> SubspaceBasis:
    """Orthonormal basis of the span of the rows of coefficients @ directions

    The coefficient rows are first replaced by an orthonormal basis of their row space so that
    widely spread loading scales do not reach the Gram-Schmidt step.
    """
    if coefficients.shape[0] == 0:
        return SubspaceBasis(np.zeros((0, directions.shape[1])), ip, orthonormal=True)
    row_space = linalg.orth(coefficients.T).T
    if row_space.shape[0] < coefficients.shape[0]:
        raise DegenerateBasisError("rotated loading curves are linearly dependent", MODULE)
    return SubspaceBasis(row_space @ directions, ip).orthonormalized()


@dataclass
class ManifoldEstimate:
    """Output of the two-step procedure on one panel"""

    d_hat: int
    p_hat: int
    y_qv: QvMatrix
    l_hat: np.ndarray
    z_paths: MultiPath
    theta: np.ndarray
    phi_hat: np.ndarray
    rotated_loadings: np.ndarray
    q_space: SubspaceBasis
    n_space: SubspaceBasis
    fit: FactorFit
    x_grid: np.ndarray
    qdim_route: str = ROUTE_THRESHOLD
    eps_rel: Optional[float] = None
    diagnostics: Dict = field(default_factory=dict)

    def manifold_basis(self) -> SubspaceBasis:
        """Orthonormal basis of V̂ = Q̂ ⊕ N̂, the span of all rotated loading curves"""
        return _row_span(np.eye(self.d_hat), self._directions(), InnerProductSpec.sobolev(self.x_grid))

    def _directions(self) -> np.ndarray:
        norms = np.linalg.norm(self.phi_hat, axis=1)
        if np.any(norms <= 0):
            raise DegenerateBasisError("an estimated loading curve is identically zero", MODULE)
        return self.phi_hat / norms[:, None]

    def qv_shares(self) -> np.ndarray:
        """η̂ᵢ for the rotated factors Ẑ"""
        return explained_qv_ratios(self.theta)

    def variance_factor_qv_shares(self) -> np.ndarray:
        """Cumulative shares of the diagonal of [Ŷ]_T, the variance factors' explained QV"""
        diagonal = np.diag(self.y_qv.matrix)
        return explained_qv_ratios(np.clip(diagonal, 0.0, None))

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            'component': np.arange(1, self.d_hat + 1),
            'theta': self.theta,
            'eta': self.qv_shares(),
            'variance_factor_share': self.variance_factor_qv_shares(),
        })

    def to_dict(self) -> Dict:
        return {
            'd_hat': self.d_hat,
            'p_hat': self.p_hat,
            'dim_q': self.q_space.dim,
            'dim_n': self.n_space.dim,
            'qdim_route': self.qdim_route,
            'eps_rel': self.eps_rel,
            'theta': self.theta.tolist(),
            'eta': self.qv_shares().tolist(),
            'variance_factor_shares': self.variance_factor_qv_shares().tolist(),
            'hs_energy': hs_energy(self.theta),
            'l_hat': self.l_hat.tolist(),
            'diagnostics': dict(self.diagnostics),
        }


def split_manifold(panel: SpaceTimePanel, d_hat: int, eps_rel: Optional[float] = None,
                   p_hat: Optional[int] = None, qdim_route: str = ROUTE_THRESHOLD,
                   fourier_eps: Optional[float] = None, fourier_cutoff: Optional[int] = None,
                   fourier_relative: bool = False) -> ManifoldEstimate:
    """Rotate Ŷ(d̂) into QV-ranked coordinates Ẑ = L̂Ŷ and split the loadings L̂φ̂ at p̂"""
    if qdim_route not in QDIM_ROUTES:
        raise InvalidInputError(f"unknown qdim route {qdim_route!r}", MODULE)
    fit = extract_factors(panel, d_hat)
    y_qv = factor_qv_matrix(fit.y_hat, panel.horizon)
    l_hat = y_qv.eig.vectors.T.copy()
    theta = y_qv.eigenvalues.copy()
    z_values = fit.y_hat @ l_hat.T
    z_paths = MultiPath(panel.t_grid, z_values, [f"Z{j + 1}" for j in range(d_hat)])

    if eps_rel is None:
        eps_rel = default_eps(panel.n_steps)
    if p_hat is None:
        if qdim_route == ROUTE_THRESHOLD:
            p_hat = rank_estimate(y_qv, eps_rel)
        else:
            est = fourier_qdim.reduced_operator(panel, fourier_cutoff)
            p_hat = fourier_qdim.qdim_estimate(est, fourier_eps, fourier_relative)
    if p_hat > d_hat:
        logger.warning(f"split_manifold - p_hat {p_hat} exceeds d_hat {d_hat}, capping")
        p_hat = d_hat
    if p_hat < 0:
        raise InvalidInputError(f"p_hat must be nonnegative, got {p_hat}", MODULE)

    phi_hat = estimate_loadings(panel, fit.eigvecs)
    rotated = l_hat @ phi_hat
    ip = InnerProductSpec.sobolev(panel.x_grid)
    norms = np.linalg.norm(phi_hat, axis=1)
    if np.any(norms <= 0):
        raise DegenerateBasisError("an estimated loading curve is identically zero", MODULE)
    directions = phi_hat / norms[:, None]
    # rows of `rotated` are (l_hat * norms) @ directions
    weights = l_hat * norms[None, :]
    q_space = _row_span(weights[:p_hat], directions, ip)
    n_space = _row_span(weights[p_hat:], directions, ip)

    estimate = ManifoldEstimate(
        d_hat=d_hat, p_hat=p_hat, y_qv=y_qv, l_hat=l_hat, z_paths=z_paths, theta=theta,
        phi_hat=phi_hat, rotated_loadings=rotated, q_space=q_space, n_space=n_space, fit=fit,
        x_grid=panel.x_grid, qdim_route=qdim_route, eps_rel=float(eps_rel),
    )
    estimate.diagnostics = {
        'noise_increment_energy': noise_increment_energy(panel, fit),
        'objective': fit.objective,
        'hs_energy': hs_energy(theta),
    }
    logger.info(f"split_manifold - d_hat: {d_hat}, p_hat: {p_hat}, route: {qdim_route}")
    return estimate


def hs_energy(theta: Sequence[float]) -> float:
    """Σ θ̂ⱼ², the squared Hilbert-Schmidt norm estimate of Q_T"""
    return float(np.sum(np.asarray(theta, dtype=float) ** 2))


def noise_increment_energy(panel: SpaceTimePanel, fit: FactorFit) -> float:
    """δ·Σ_i ‖Δε̂_i‖² for the residual surface ε̂ = 𝕏 − ŶΛ̂ᵀ"""
    residual = panel.signal() - fit.fitted()
    return float(panel.delta * np.sum(np.diff(residual, axis=0) ** 2))


@dataclass
class PipelineConfig:
    kmax: int = 8
    penalty: str = 'pc1'
    d_hat: Optional[int] = None
    eps_rel: Optional[float] = None
    qdim_route: str = ROUTE_THRESHOLD
    fourier_eps: Optional[float] = None
    fourier_cutoff: Optional[int] = None
    fourier_relative: bool = False
    demean: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.kmax < 1:
            raise InvalidInputError(f"kmax must be positive, got {self.kmax}", MODULE)
        if self.penalty not in PENALTIES:
            raise InvalidInputError(f"unknown penalty {self.penalty!r}", MODULE)
        if self.qdim_route not in QDIM_ROUTES:
            raise InvalidInputError(f"unknown qdim route {self.qdim_route!r}", MODULE)
        if self.d_hat is not None and self.d_hat < 1:
            raise InvalidInputError(f"d_hat override must be positive, got {self.d_hat}", MODULE)

    def to_dict(self) -> Dict:
        return asdict(self)


def prepare_panel(panel: SpaceTimePanel, config: PipelineConfig) -> SpaceTimePanel:
    """φ-subtracted panel, or the time-demeaned one when φ is unknown"""
    if panel.phi is not None or panel.demeaned or not config.demean:
        return panel
    logger.warning(f"prepare_panel - {panel.name} has no phi, subtracting the time mean per space point")
    return panel.time_demeaned()


def estimate_manifold(panel: SpaceTimePanel, config: Optional[PipelineConfig] = None) -> ManifoldEstimate:
    """PC(k) choice of d̂ (unless overridden) followed by split_manifold"""
    config = config or PipelineConfig()
    work = prepare_panel(panel, config)
    pc_table = None
    d_hat = config.d_hat
    if d_hat is None:
        pc = pc_criterion(work, config.kmax, PenaltySpec(config.penalty))
        d_hat, pc_table = pc.d_hat, pc.table
    estimate = split_manifold(work, d_hat, eps_rel=config.eps_rel, qdim_route=config.qdim_route,
                              fourier_eps=config.fourier_eps, fourier_cutoff=config.fourier_cutoff,
                              fourier_relative=config.fourier_relative)
    estimate.diagnostics['demeaned'] = work.demeaned
    if pc_table is not None:
        estimate.diagnostics['pc_table'] = pc_table.to_dict(orient='list')
    return estimate


def _lag_distance(panel: SpaceTimePanel, lag: int, reference: SubspaceBasis, config: PipelineConfig) -> float:
    if lag == 0:
        return 0.0
    truncated = estimate_manifold(panel.truncate(lag), config)
    return subspace_distance(reference, truncated.manifold_basis())


def dynamic_distance(panel: SpaceTimePanel, lags: List[int],
                     config: Optional[PipelineConfig] = None) -> pd.DataFrame:
    """d(V̂, V̂₋ₖ) for every lag k, V̂₋ₖ being re-estimated without the last k time rows"""
    config = config or PipelineConfig()
    lags = [int(k) for k in lags]
    for lag in lags:
        if lag < 0 or lag >= panel.n_steps:
            raise InvalidInputError(f"lag must lie in [0, {panel.n_steps - 1}], got {lag}", MODULE)
    reference = estimate_manifold(panel, config).manifold_basis()
    distances = Parallel(n_jobs=config.n_jobs)(
        delayed(_lag_distance)(panel, lag, reference, config) for lag in lags
    )
    logger.info(f"dynamic_distance - lags: {len(lags)}, max distance: {max(distances, default=0.0):.3e}")
    return pd.DataFrame({'lag': lags, 'distance': distances})


def distance_trend(series: pd.DataFrame) -> Optional[float]:
    """Spearman rank correlation between lag and distance over the positive lags

    None when fewer than three positive lags are present or the distances are constant.
    """
    positive = series[series['lag'] > 0]
    if len(positive) < 3 or positive['distance'].nunique() < 2:
        return None
    rho, _ = spearmanr(positive['lag'], positive['distance'])
    return float(rho)
