"""
Observation containers shared by the estimation modules
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from qvmanifold.exceptions import InvalidInputError, ShapeError

MODULE = 'models'

# Relative tolerance used when deciding whether a grid is equidistant
EQUIDISTANT_RTOL = 1e-9


def _check_grid(grid: np.ndarray, name: str, min_points: int = 1) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {grid.shape}", MODULE)
    if grid.size < min_points:
        raise InvalidInputError(f"{name} needs at least {min_points} points, got {grid.size}", MODULE)
    if not np.all(np.isfinite(grid)):
        raise InvalidInputError(f"{name} contains non-finite values", MODULE)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        bad = int(np.argmax(np.diff(grid) <= 0)) + 1
        raise InvalidInputError(f"{name} is not strictly increasing at index {bad}", MODULE)
    return grid


def is_equidistant(grid: np.ndarray) -> bool:
    steps = np.diff(grid)
    if steps.size == 0:
        return True
    return bool(np.allclose(steps, steps[0], rtol=EQUIDISTANT_RTOL, atol=0.0))


@dataclass
class MultiPath:
    """Synchronously sampled d-dimensional process; row i is the observation at t_grid[i]"""

    t_grid: np.ndarray
    values: np.ndarray
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.t_grid = _check_grid(self.t_grid, 't_grid')
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.t_grid.size:
            raise ShapeError(
                f"values must have {self.t_grid.size} rows, got shape {values.shape}", MODULE)
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise InvalidInputError(f"non-finite path value at row {row}, component {col}", MODULE)
        self.values = values
        if self.names is None:
            self.names = [f"M{j + 1}" for j in range(values.shape[1])]
        elif len(self.names) != values.shape[1]:
            raise ShapeError(f"expected {values.shape[1]} component names, got {len(self.names)}", MODULE)

    @property
    def n_steps(self) -> int:
        """Number of increments n̄"""
        return self.t_grid.size - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1] - self.t_grid[0])

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.t_grid))) if self.n_steps > 0 else 0.0

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.names)
        frame.insert(0, 't', self.t_grid)
        return frame

    @staticmethod
    def from_frame(frame: pd.DataFrame) -> 'MultiPath':
        return MultiPath(frame['t'].to_numpy(dtype=float),
                         frame.drop(columns=['t']).to_numpy(dtype=float),
                         [str(c) for c in frame.columns if c != 't'])

    def to_dict(self) -> Dict:
        return {
            'n_steps': self.n_steps,
            'dim': self.dim,
            'horizon': self.horizon,
            'names': list(self.names),
        }


@dataclass
class SpaceTimePanel:
    """Curve observations X_{t_i}(x_j) with their grids

    `phi` holds samples of the known parametrization on the same grids and `latent` the
    simulated factor paths when the panel came from a simulator.
    """

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    phi: Optional[np.ndarray] = None
    latent: Optional[MultiPath] = None
    name: str = 'panel'
    demeaned: bool = False

    def __post_init__(self):
        self.t_grid = _check_grid(self.t_grid, 't_grid')
        self.x_grid = _check_grid(self.x_grid, 'x_grid', min_points=2)
        self.values = self._check_surface(self.values, 'values')
        if self.phi is not None:
            self.phi = self._check_surface(self.phi, 'phi')

    def _check_surface(self, surface, label: str) -> np.ndarray:
        surface = np.asarray(surface, dtype=float)
        expected = (self.t_grid.size, self.x_grid.size)
        if surface.shape != expected:
            raise ShapeError(f"{label} must have shape {expected}, got {surface.shape}", MODULE)
        if not np.all(np.isfinite(surface)):
            row, col = np.argwhere(~np.isfinite(surface))[0]
            raise InvalidInputError(f"non-finite {label} entry at time index {row}, space index {col}", MODULE)
        return surface

    @property
    def n_steps(self) -> int:
        return self.t_grid.size - 1

    @property
    def n_space(self) -> int:
        return self.x_grid.size

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1] - self.t_grid[0])

    @property
    def rho(self) -> float:
        """Time mesh ρ(n)"""
        if self.n_steps == 0:
            raise InvalidInputError("a single time row has no mesh", MODULE)
        return float(np.max(np.diff(self.t_grid)))

    @property
    def delta(self) -> float:
        """Space mesh δ(N)"""
        return float(np.max(np.diff(self.x_grid)))

    def signal(self) -> np.ndarray:
        """Observation matrix 𝕏: values minus φ when φ is known"""
        if self.phi is None:
            return self.values
        return self.values - self.phi

    def increments(self) -> np.ndarray:
        return np.diff(self.signal(), axis=0)

    def truncate(self, lag: int) -> 'SpaceTimePanel':
        """Drop the last `lag` time rows"""
        if lag < 0 or lag >= self.n_steps:
            raise InvalidInputError(f"lag must lie in [0, {self.n_steps - 1}], got {lag}", MODULE)
        keep = self.t_grid.size - lag
        latent = None
        if self.latent is not None:
            latent = MultiPath(self.latent.t_grid[:keep], self.latent.values[:keep], self.latent.names)
        return SpaceTimePanel(
            t_grid=self.t_grid[:keep],
            x_grid=self.x_grid,
            values=self.values[:keep],
            phi=None if self.phi is None else self.phi[:keep],
            latent=latent,
            name=self.name,
            demeaned=self.demeaned,
        )

    def time_demeaned(self) -> 'SpaceTimePanel':
        """Panel with the per-space-point time mean removed and φ dropped"""
        signal = self.signal()
        return SpaceTimePanel(
            t_grid=self.t_grid,
            x_grid=self.x_grid,
            values=signal - signal.mean(axis=0, keepdims=True),
            latent=self.latent,
            name=self.name,
            demeaned=True,
        )

    def to_frame(self, surface: Optional[np.ndarray] = None) -> pd.DataFrame:
        surface = self.values if surface is None else surface
        frame = pd.DataFrame(surface, columns=[repr(float(x)) for x in self.x_grid])
        frame.insert(0, 't', self.t_grid)
        return frame

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'n_points': int(self.t_grid.size),
            'n_space': self.n_space,
            'horizon': self.horizon,
            'space_interval': [float(self.x_grid[0]), float(self.x_grid[-1])],
            'has_phi': self.phi is not None,
            'demeaned': self.demeaned,
            'equidistant': is_equidistant(self.t_grid) and is_equidistant(self.x_grid),
        }


@dataclass
class LoadingSet:
    """Loading curves λ₁..λ_d given in closed form"""

    functions: List[Callable[[np.ndarray], np.ndarray]]
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.functions:
            raise InvalidInputError("a loading set needs at least one function", MODULE)
        if not self.names:
            self.names = [f"lambda{j + 1}" for j in range(len(self.functions))]
        if len(self.names) != len(self.functions):
            raise ShapeError("one name per loading function is required", MODULE)

    @property
    def dim(self) -> int:
        return len(self.functions)

    def sample(self, x_grid: np.ndarray) -> np.ndarray:
        """d × N̄ matrix of curve values on the grid"""
        x_grid = np.asarray(x_grid, dtype=float)
        return np.vstack([np.broadcast_to(f(x_grid), x_grid.shape) for f in self.functions])

    def subset(self, indices: List[int]) -> 'LoadingSet':
        return LoadingSet([self.functions[i] for i in indices], [self.names[i] for i in indices])

    def to_dict(self) -> Dict:
        return {'names': list(self.names), 'dim': self.dim}
