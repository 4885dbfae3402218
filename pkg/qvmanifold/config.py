"""
Run configuration: dataclass defaults, environment, key=value config files and CLI overrides
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from qvmanifold.exceptions import ConfigError
from qvmanifold.factor_model import PENALTIES
from qvmanifold.simulation import MODEL_IDS, NOISE_KINDS
from qvmanifold.spde_manifold import QDIM_ROUTES, PipelineConfig

logger = logging.getLogger(__name__)

COMMANDS = ('simulate', 'pca', 'factors', 'manifold', 'qdim', 'distance')
PATH_COMMANDS = ('pca',)
PATH_MODELS = ('7.1', 'toy')

OUTPUT_DIR_ENV = 'QVMANIFOLD_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'results'


@dataclass
class RunConfig:
    command: str
    seeds: List[int] = field(default_factory=lambda: [0])
    model: Optional[str] = None
    input_path: Optional[str] = None
    phi_path: Optional[str] = None
    n_points: int = 2000
    n_space: int = 31
    horizon: float = 2 * np.pi
    space_interval: Tuple[float, float] = (0.0, 5.0)
    kmax: int = 8
    penalty: str = 'pc1'
    d_hat: Optional[int] = None
    eps_rel: Optional[float] = None
    qdim_route: str = 'threshold'
    fourier_eps: Optional[float] = None
    fourier_relative: bool = False
    fourier_cutoff: Optional[int] = None
    lags: List[int] = field(default_factory=lambda: [0])
    noise: str = 'none'
    noise_scale: Optional[float] = None
    demean: bool = True
    n_jobs: int = 1
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        self.seeds = [int(s) for s in self.seeds]
        self.lags = [int(k) for k in self.lags]
        self.space_interval = tuple(float(v) for v in self.space_interval)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.model is not None and self.model not in MODEL_IDS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {', '.join(MODEL_IDS)}")
        if self.model is None and self.input_path is None:
            raise ConfigError(f"{self.command} needs either a model or an input path")
        if self.command == 'simulate' and self.model is None:
            raise ConfigError("simulate needs a model")
        if self.command in PATH_COMMANDS and self.input_path is None and self.model not in PATH_MODELS:
            raise ConfigError(f"{self.command} works on paths; use model {' or '.join(PATH_MODELS)} or an input path")
        if self.command not in PATH_COMMANDS + ('simulate',) and self.input_path is None \
                and self.model in PATH_MODELS:
            raise ConfigError(f"model {self.model} produces paths, {self.command} needs a panel")
        if self.n_points < 2 or self.n_space < 2:
            raise ConfigError("grids need at least 2 points")
        if self.kmax < 1:
            raise ConfigError(f"kmax must be positive, got {self.kmax}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be nonzero (negative values count back from the CPU total)")
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if len(self.space_interval) != 2 or self.space_interval[1] <= self.space_interval[0]:
            raise ConfigError(f"space interval must be increasing, got {self.space_interval}")
        if self.penalty not in PENALTIES:
            raise ConfigError(f"unknown penalty {self.penalty!r}")
        if self.qdim_route not in QDIM_ROUTES:
            raise ConfigError(f"unknown qdim route {self.qdim_route!r}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.noise!r}")
        for name in ('d_hat', 'fourier_cutoff', 'fourier_eps', 'noise_scale'):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.eps_rel is not None and not 0 < self.eps_rel < 1:
            raise ConfigError(f"eps_rel must lie in (0, 1), got {self.eps_rel}")
        if any(k < 0 for k in self.lags):
            raise ConfigError("lags must be nonnegative")

    @property
    def simulated(self) -> bool:
        return self.input_path is None

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            kmax=self.kmax, penalty=self.penalty, d_hat=self.d_hat, eps_rel=self.eps_rel,
            qdim_route=self.qdim_route, fourier_eps=self.fourier_eps,
            fourier_cutoff=self.fourier_cutoff, fourier_relative=self.fourier_relative,
            demean=self.demean, n_jobs=self.n_jobs,
        )

    def for_seed(self, seed: int) -> 'RunConfig':
        values = asdict(self)
        values['seeds'] = [seed]
        return RunConfig(**values)

    def to_dict(self) -> Dict:
        values = asdict(self)
        values['space_interval'] = list(self.space_interval)
        return values


def _split_list(raw: str) -> List[str]:
    return [part.strip() for part in raw.split(',') if part.strip()]


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_CONVERTERS = {
    'seeds': lambda raw: [int(v) for v in _split_list(raw)],
    'lags': lambda raw: expand_lags(raw),
    'space_interval': lambda raw: tuple(float(v) for v in _split_list(raw)),
    'n_points': int, 'n_space': int, 'kmax': int, 'd_hat': int, 'fourier_cutoff': int, 'n_jobs': int,
    'horizon': float, 'eps_rel': float, 'fourier_eps': float, 'noise_scale': float,
    'fourier_relative': _parse_bool, 'demean': _parse_bool,
}

_OPTIONAL = ('model', 'input_path', 'phi_path', 'd_hat', 'eps_rel', 'fourier_eps', 'fourier_cutoff', 'noise_scale')


def expand_lags(raw: str) -> List[int]:
    """'0,5,10' or a range 'start:stop:step' with inclusive stop"""
    raw = raw.strip()
    if ':' in raw:
        parts = [int(p) for p in raw.split(':')]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"lag range must be start:stop:step, got {raw!r}")
        start, stop, step = parts
        return list(range(start, stop + 1, step))
    return [int(v) for v in _split_list(raw)]


def convert_value(key: str, raw: str):
    known = {f.name for f in fields(RunConfig)}
    if key not in known:
        raise ConfigError(f"unknown configuration key {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL and raw.lower() in ('', 'none'):
        return None
    try:
        return _CONVERTERS.get(key, str)(raw)
    except ValueError as e:
        raise ConfigError(f"invalid value for {key}: {e}") from e


def load_config(path: str) -> Dict:
    """Parse a key=value file; '#' starts a comment"""
    values = {}
    try:
        with open(path, encoding='utf-8') as handle:
            lines = handle.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for number, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        key, raw = line.split('=', 1)
        key = key.strip().replace('-', '_')
        values[key] = convert_value(key, raw)
    logger.debug(f"load_config - {path}: {sorted(values)}")
    return values


def resolve_config(command: str, file_values: Optional[Dict] = None, overrides: Optional[Dict] = None) -> RunConfig:
    """Defaults, then environment, then the config file, then explicit overrides"""
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values.pop('command', None)
    try:
        return RunConfig(command=command, **values)
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
