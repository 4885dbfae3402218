"""
Euler-Maruyama engine, the concrete factor models and noisy space-time panel generation
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, NamedTuple, Optional

import numpy as np

from qvmanifold.exceptions import BlowUpError, InvalidInputError, ShapeError
from qvmanifold.models import LoadingSet, MultiPath, SpaceTimePanel, is_equidistant

logger = logging.getLogger(__name__)

MODULE = 'simulation'

NOISE_NONE = 'none'
NOISE_SINE = 'sine'
NOISE_WHITE = 'white'
NOISE_KINDS = (NOISE_NONE, NOISE_SINE, NOISE_WHITE)

SINE_NOISE_SCALE = np.sqrt(2.0) / 3.0
WHITE_NOISE_SCALE = 0.05

DEFAULT_HORIZON = 2 * np.pi
DEFAULT_N_POINTS = 2000
DEFAULT_SPACE_INTERVAL = (0.0, 5.0)
DEFAULT_N_SPACE = 31

MODEL_IDS = ('7.1', 'toy', '7.2-x', '7.2-u', '7.3', '7.3-fdr')


@dataclass
class SdeModel:
    """dX = μ(X)dt + σ(X)dB with σ(X) of shape (dim_state, dim_noise)"""

    dim_state: int
    dim_noise: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray = None
    name: str = 'sde'

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise InvalidInputError("state and noise dimensions must be positive", MODULE)
        self.x0 = np.zeros(self.dim_state) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.dim_state,):
            raise ShapeError(f"x0 must have shape ({self.dim_state},), got {self.x0.shape}", MODULE)


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(seed)


def equidistant_grid(horizon: float = DEFAULT_HORIZON, n_points: int = DEFAULT_N_POINTS,
                     start: float = 0.0) -> np.ndarray:
    if n_points < 2:
        raise InvalidInputError(f"a grid needs at least 2 points, got {n_points}", MODULE)
    if horizon <= 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}", MODULE)
    return np.linspace(start, start + horizon, n_points)


def euler_maruyama(model: SdeModel, t_grid: np.ndarray, rng: np.random.Generator) -> MultiPath:
    """X_{k+1} = X_k + μ(X_k)Δt + σ(X_k)ΔB_k on the observation grid itself"""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise InvalidInputError("the time grid needs at least 2 points", MODULE)
    if not is_equidistant(t_grid):
        raise InvalidInputError("euler_maruyama requires an equidistant time grid", MODULE)
    dt = float(t_grid[1] - t_grid[0])
    n_steps = t_grid.size - 1
    # all Brownian increments are drawn up front so the path depends on the seed only
    dB = rng.standard_normal((n_steps, model.dim_noise)) * np.sqrt(dt)

    values = np.empty((t_grid.size, model.dim_state))
    values[0] = model.x0
    state = model.x0.copy()
    for k in range(n_steps):
        sigma = np.asarray(model.diffusion(state), dtype=float).reshape(model.dim_state, model.dim_noise)
        state = state + np.asarray(model.drift(state), dtype=float) * dt + sigma @ dB[k]
        if not np.all(np.isfinite(state)):
            raise BlowUpError(f"state became non-finite at step {k + 1} of model {model.name}", k + 1, MODULE)
        values[k + 1] = state
    return MultiPath(t_grid, values, [f"{model.name}{j + 1}" for j in range(model.dim_state)])


def _drift_7_1(x: np.ndarray) -> np.ndarray:
    return np.array([x[1], -2 * x[0] + x[2], x[3], -x[0]])


def model_7_1() -> SdeModel:
    """Four-dimensional diffusion with three volatility directions and one pure-drift direction"""

    def diffusion(x):
        return np.array([
            [1.0, 0.0, x[1]],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, x[1]],
            [0.0, 0.0, x[1]],
        ])

    return SdeModel(dim_state=4, dim_noise=3, drift=_drift_7_1, diffusion=diffusion, name='M')


def model_7_1_fdr() -> SdeModel:
    """Same drift, state-dependent diagonal volatility; drives the curve r_t = Σ Mⁱλᵢ"""

    def diffusion(x):
        return np.array([
            [1.0, 0.0, 0.0],
            [0.0, x[1], 0.0],
            [0.0, 0.0, x[0]],
            [0.0, 0.0, 0.0],
        ])

    return SdeModel(dim_state=4, dim_noise=3, drift=_drift_7_1, diffusion=diffusion, name='M')


def model_toy_drift() -> SdeModel:
    """(B_t, B_t + t): one Brownian direction, one pure drift"""
    return SdeModel(dim_state=2, dim_noise=1,
                    drift=lambda x: np.array([0.0, 1.0]),
                    diffusion=lambda x: np.array([[1.0], [1.0]]),
                    name='M')


def hjm_loadings() -> LoadingSet:
    return LoadingSet(
        functions=[
            lambda x: x * np.cos(x),
            lambda x: np.cos(x) - x * np.sin(x),
            lambda x: -2 * np.sin(x) - x * np.cos(x),
            lambda x: x * np.sin(x) - 3 * np.cos(x),
        ],
        names=['lambda1', 'lambda2', 'lambda3', 'lambda4'],
    )


def hjm_phi(t_grid: np.ndarray, x_grid: np.ndarray) -> np.ndarray:
    """Closed-form parametrization φ_t(x) sampled on the grids; φ_0 ≡ 0"""
    t = np.asarray(t_grid, dtype=float)[:, None]
    x = np.asarray(x_grid, dtype=float)[None, :]
    loadings = hjm_loadings()
    lam1, lam2 = loadings.functions[0], loadings.functions[1]

    def envelope(u):
        return (u * np.sin(u) + np.cos(u)) ** 2

    shifted = x + t
    return 0.5 * ((envelope(shifted) - envelope(x))
                  + (lam1(shifted) ** 2 - lam1(x) ** 2)
                  + (lam2(shifted) ** 2 - lam2(x) ** 2))


class HjmRealization(NamedTuple):
    model: SdeModel
    loadings: LoadingSet
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]


def model_hjm_fdr() -> HjmRealization:
    """Factor dynamics, loading curves and parametrization of the HJM finite-dimensional realization"""

    def drift(z):
        return np.array([-z[1], -2 * z[0] + z[2], z[3] - z[0], -z[0]])

    volatility = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0],
    ])
    model = SdeModel(dim_state=4, dim_noise=3, drift=drift, diffusion=lambda z: volatility, name='Z')
    return HjmRealization(model=model, loadings=hjm_loadings(), phi=hjm_phi)


@dataclass
class NoiseSpec:
    """Observation error ε_t(x); `scale` defaults per kind"""

    kind: str = NOISE_NONE
    scale: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidInputError(f"unknown noise kind: {self.kind}", MODULE)
        if self.scale is None:
            self.scale = {NOISE_NONE: 0.0, NOISE_SINE: SINE_NOISE_SCALE, NOISE_WHITE: WHITE_NOISE_SCALE}[self.kind]
        if self.scale < 0:
            raise InvalidInputError(f"noise scale must be nonnegative, got {self.scale}", MODULE)

    def sample(self, t_grid: np.ndarray, x_grid: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        shape = (len(t_grid), len(x_grid))
        if self.kind == NOISE_NONE:
            return np.zeros(shape)
        if self.kind == NOISE_SINE:
            u = rng.standard_normal(len(t_grid))
            return self.scale * u[:, None] * np.sin(np.pi * np.asarray(x_grid))[None, :]
        return self.scale * rng.standard_normal(shape)

    def to_dict(self) -> Dict:
        return {'kind': self.kind, 'scale': self.scale}


def sine_noise(u: float, x: float) -> float:
    """(√2/3)·u·sin(πx)"""
    return float(SINE_NOISE_SCALE * u * np.sin(np.pi * x))


def build_panel(factors: MultiPath, loadings: LoadingSet, phi: Optional[np.ndarray],
                noise: Optional[NoiseSpec], x_grid: np.ndarray, rng: Optional[np.random.Generator] = None,
                name: str = 'panel') -> SpaceTimePanel:
    """X_{t_i}(x_j) = φ_{t_i}(x_j) + Σ_k Z^k_{t_i} λ_k(x_j) + ε_{t_i}(x_j)"""
    x_grid = np.asarray(x_grid, dtype=float)
    if loadings.dim != factors.dim:
        raise ShapeError(f"{factors.dim} factors but {loadings.dim} loading curves", MODULE)
    values = factors.values @ loadings.sample(x_grid)
    phi_surface = None
    if phi is not None:
        phi_surface = np.asarray(phi, dtype=float)
        if phi_surface.shape != values.shape:
            raise ShapeError(f"phi must have shape {values.shape}, got {phi_surface.shape}", MODULE)
        values = values + phi_surface
    noise = noise or NoiseSpec()
    if noise.kind != NOISE_NONE:
        if rng is None:
            raise InvalidInputError("a random generator is required for noisy panels", MODULE)
        values = values + noise.sample(factors.t_grid, x_grid, rng)
    return SpaceTimePanel(t_grid=factors.t_grid, x_grid=x_grid, values=values, phi=phi_surface,
                          latent=factors, name=name)


def space_grid(n_space: int = DEFAULT_N_SPACE, interval=DEFAULT_SPACE_INTERVAL) -> np.ndarray:
    a, b = interval
    if n_space < 2 or b <= a:
        raise InvalidInputError(f"invalid space grid: {n_space} points on [{a}, {b}]", MODULE)
    return np.linspace(a, b, n_space)


def models_7_2(t_grid: np.ndarray, x_grid: np.ndarray, rng: np.random.Generator) -> Dict[str, SpaceTimePanel]:
    """Panels X (drift sin 15t) and U (drift sin 3t) driven by one shared Brownian motion"""
    t_grid = np.asarray(t_grid, dtype=float)
    bm = euler_maruyama(SdeModel(1, 1, lambda x: np.zeros(1), lambda x: np.ones((1, 1)), name='B'), t_grid, rng)
    b = bm.values[:, 0]
    loadings = hjm_loadings().subset([0, 1])
    panels = {}
    for label, frequency in (('X', 15.0), ('U', 3.0)):
        gamma = np.sin(frequency * t_grid)
        factors = MultiPath(t_grid, np.column_stack([b, gamma - b]), ['B', f"Gamma{label}-B"])
        panels[label] = build_panel(factors, loadings, None, None, x_grid, name=f"model-7.2-{label.lower()}")
    return panels


def fdr_panel_7_1(t_grid: np.ndarray, x_grid: np.ndarray, rng: np.random.Generator,
                  noise: Optional[NoiseSpec] = None) -> SpaceTimePanel:
    """r_t = Σ Mⁱ_t λᵢ with M from the diagonal-volatility variant"""
    factors = euler_maruyama(model_7_1_fdr(), t_grid, rng)
    return build_panel(factors, hjm_loadings(), None, noise, x_grid, rng, name='model-7.3-fdr')


def hjm_panel(t_grid: np.ndarray, x_grid: np.ndarray, rng: np.random.Generator,
              noise: Optional[NoiseSpec] = None) -> SpaceTimePanel:
    realization = model_hjm_fdr()
    factors = euler_maruyama(realization.model, t_grid, rng)
    return build_panel(factors, realization.loadings, realization.phi(t_grid, x_grid), noise, x_grid, rng,
                       name='model-7.3')


@dataclass
class Simulation:
    """Output of one simulated experiment: observed paths and/or panels"""

    model_id: str
    seed: Optional[int]
    paths: Dict[str, MultiPath] = field(default_factory=dict)
    panels: Dict[str, SpaceTimePanel] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'model_id': self.model_id,
            'seed': self.seed,
            'paths': {k: v.to_dict() for k, v in self.paths.items()},
            'panels': {k: v.to_dict() for k, v in self.panels.items()},
        }


def simulate_model(model_id: str, seed: Optional[int] = None, n_points: int = DEFAULT_N_POINTS,
                   horizon: float = DEFAULT_HORIZON, n_space: int = DEFAULT_N_SPACE,
                   space_interval=DEFAULT_SPACE_INTERVAL, noise: Optional[NoiseSpec] = None) -> Simulation:
    """Simulate one of the registered experiments by id"""
    if model_id not in MODEL_IDS:
        raise InvalidInputError(f"unknown model id {model_id!r}; expected one of {', '.join(MODEL_IDS)}", MODULE)
    rng = make_rng(seed)
    t_grid = equidistant_grid(horizon, n_points)
    logger.info(f"simulate_model - model: {model_id}, seed: {seed}, n_points: {n_points}")
    result = Simulation(model_id=model_id, seed=seed)
    if model_id == '7.1':
        result.paths['M'] = euler_maruyama(model_7_1(), t_grid, rng)
        return result
    if model_id == 'toy':
        result.paths['M'] = euler_maruyama(model_toy_drift(), t_grid, rng)
        return result
    x_grid = space_grid(n_space, space_interval)
    if model_id in ('7.2-x', '7.2-u'):
        panels = models_7_2(t_grid, x_grid, rng)
        result.panels['panel'] = panels['X' if model_id == '7.2-x' else 'U']
    elif model_id == '7.3':
        result.panels['panel'] = hjm_panel(t_grid, x_grid, rng, noise)
    else:
        result.panels['panel'] = fdr_panel_7_1(t_grid, x_grid, rng, noise)
    return result
