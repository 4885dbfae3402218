import logging
import time
from typing import Callable, Dict

import numpy as np
import pandas as pd

from qvmanifold import fourier_qdim, panel_io
from qvmanifold.config import RunConfig
from qvmanifold.exceptions import CommandError, InvalidInputError, QvManifoldError
from qvmanifold.factor_model import PenaltySpec, extract_factors, pc_criterion
from qvmanifold.models import MultiPath, SpaceTimePanel
from qvmanifold.results import ResultBundle, versions
from qvmanifold.semimartingale_pca import explained_qv_ratios, pca_split
from qvmanifold.simulation import NoiseSpec, Simulation, simulate_model
from qvmanifold.spde_manifold import distance_trend, dynamic_distance, estimate_manifold, prepare_panel

logger = logging.getLogger(__name__)


def _grid_frame(x_grid: np.ndarray, curves: np.ndarray, prefix: str) -> pd.DataFrame:
    """One row per grid point, one column per curve"""
    frame = pd.DataFrame(np.asarray(curves).T, columns=[f"{prefix}{j + 1}" for j in range(curves.shape[0])])
    frame.insert(0, 'x', x_grid)
    return frame


def _factor_frame(t_grid: np.ndarray, values: np.ndarray, prefix: str) -> pd.DataFrame:
    return MultiPath(t_grid, values, [f"{prefix}{j + 1}" for j in range(values.shape[1])]).to_frame()


class ExperimentService:
    """Runs one command for one seed (or one input file) and packs the results"""

    def __init__(self, config: RunConfig):
        self.config = config

    def execute(self, seed: int) -> ResultBundle:
        command = self.config.command
        handlers: Dict[str, Callable[[int], ResultBundle]] = {
            'simulate': self.simulate,
            'pca': self.pca,
            'factors': self.factors,
            'manifold': self.manifold,
            'qdim': self.qdim,
            'distance': self.distance,
        }
        started = time.perf_counter()
        try:
            logger.info(f"ExperimentService.execute - command: {command}, seed: {seed}")
            bundle = handlers[command](seed)
        except QvManifoldError as e:
            logger.error(f"ExperimentService.{command} error: {e}")
            raise CommandError(f"Failed to {command}: {e}", command, e.module) from e
        except Exception as e:
            logger.exception(f"ExperimentService.{command} unexpected error")
            raise CommandError(f"Failed to {command}: {e}", command) from e
        bundle.summary.setdefault('seed', seed if self.config.simulated else None)
        bundle.summary['config'] = self.config.to_dict()
        bundle.summary['versions'] = versions()
        bundle.summary['timings'] = {'seconds': time.perf_counter() - started}
        return bundle

    def _simulation(self, seed: int) -> Simulation:
        cfg = self.config
        return simulate_model(cfg.model, seed=seed, n_points=cfg.n_points, horizon=cfg.horizon,
                              n_space=cfg.n_space, space_interval=cfg.space_interval,
                              noise=NoiseSpec(cfg.noise, cfg.noise_scale))

    def _load_panel(self, seed: int) -> SpaceTimePanel:
        if self.config.input_path is not None:
            return panel_io.ingest_panel(self.config.input_path, self.config.phi_path)
        simulation = self._simulation(seed)
        if 'panel' not in simulation.panels:
            raise InvalidInputError(f"model {self.config.model} does not produce a panel", 'service')
        return simulation.panels['panel']

    def _load_path(self, seed: int) -> MultiPath:
        if self.config.input_path is not None:
            return panel_io.read_path(self.config.input_path)
        simulation = self._simulation(seed)
        if 'M' not in simulation.paths:
            raise InvalidInputError(f"model {self.config.model} does not produce a path", 'service')
        return simulation.paths['M']

    def simulate(self, seed: int) -> ResultBundle:
        simulation = self._simulation(seed)
        bundle = ResultBundle('simulate', summary=simulation.to_dict())
        for name, path in simulation.paths.items():
            bundle.add_table('paths' if name == 'M' else f"paths_{name}", path.to_frame())
        for name, panel in simulation.panels.items():
            bundle.add_table(name, panel.to_frame())
            if panel.phi is not None:
                bundle.add_table('phi', panel.to_frame(panel.phi))
            if panel.latent is not None:
                bundle.add_table('factors', panel.latent.to_frame())
        logger.info(f"ExperimentService.simulate - model: {self.config.model}, tables: {sorted(bundle.tables)}")
        return bundle

    def pca(self, seed: int) -> ResultBundle:
        path = self._load_path(seed)
        split = pca_split(path, self.config.eps_rel)
        eigen = pd.DataFrame({
            'component': np.arange(1, split.dim + 1),
            'eigenvalue': split.eigenvalues,
            'component_qv': split.component_qv(),
        })
        if split.qv.trace > 0:
            eigen['eta'] = explained_qv_ratios(split.eigenvalues)
        rotation = pd.DataFrame(split.rotation, columns=path.names)
        rotation.insert(0, 'component', np.arange(1, split.dim + 1))
        bundle = ResultBundle('pca', summary=split.to_dict())
        bundle.add_table('eigenvalues', eigen)
        bundle.add_table('rotation', rotation)
        bundle.add_table('j_paths', split.j_paths.to_frame())
        logger.info(f"ExperimentService.pca - p_hat: {split.p_hat}")
        return bundle

    def factors(self, seed: int) -> ResultBundle:
        panel = prepare_panel(self._load_panel(seed), self.config.pipeline())
        result = pc_criterion(panel, self.config.kmax, PenaltySpec(self.config.penalty))
        d_hat = self.config.d_hat or result.d_hat
        fit = extract_factors(panel, d_hat)
        bundle = ResultBundle('factors', summary={**result.to_dict(), 'fit': fit.to_dict(),
                                                  'panel': panel.to_dict()})
        bundle.add_table('pc_table', result.table)
        bundle.add_table('factors', _factor_frame(panel.t_grid, fit.y_hat, 'Y'))
        bundle.add_table('loadings', _grid_frame(panel.x_grid, fit.lambda_hat.T, 'Lambda'))
        logger.info(f"ExperimentService.factors - d_hat: {result.d_hat}")
        return bundle

    def manifold(self, seed: int) -> ResultBundle:
        panel = self._load_panel(seed)
        estimate = estimate_manifold(panel, self.config.pipeline())
        bundle = ResultBundle('manifold', summary={**estimate.to_dict(), 'panel': panel.to_dict()})
        bundle.add_table('qv_table', estimate.table())
        bundle.add_table('y_factors', _factor_frame(panel.t_grid, estimate.fit.y_hat, 'Y'))
        bundle.add_table('z_factors', estimate.z_paths.to_frame())
        bundle.add_table('loadings', _grid_frame(panel.x_grid, estimate.phi_hat, 'phi'))
        bundle.add_table('rotated_loadings', _grid_frame(panel.x_grid, estimate.rotated_loadings, 'Lphi'))
        bundle.add_table('q_basis', _grid_frame(panel.x_grid, estimate.q_space.vectors, 'q'))
        bundle.add_table('n_basis', _grid_frame(panel.x_grid, estimate.n_space.vectors, 'n'))
        logger.info(f"ExperimentService.manifold - d_hat: {estimate.d_hat}, p_hat: {estimate.p_hat}")
        return bundle

    def qdim(self, seed: int) -> ResultBundle:
        panel = prepare_panel(self._load_panel(seed), self.config.pipeline())
        est = fourier_qdim.reduced_operator(panel, self.config.fourier_cutoff)
        p_hat = fourier_qdim.qdim_estimate(est, self.config.fourier_eps, self.config.fourier_relative)
        functions = fourier_qdim.eigenfunctions(est, panel, self.config.fourier_eps, self.config.fourier_relative)
        bundle = ResultBundle('qdim', summary={**est.to_dict(), 'p_hat_eps': p_hat,
                                               'eigenfunctions': functions.to_dict()})
        bundle.add_table('eigenvalues', pd.DataFrame({
            'index': np.arange(1, est.eigenvalues.size + 1),
            'eigenvalue': est.eigenvalues,
        }))
        bundle.add_table('eigenfunctions', _grid_frame(panel.x_grid, functions.basis.vectors, 'f'))
        bundle.add_table('kernel_operator', pd.DataFrame(fourier_qdim.kernel_operator(panel, est.cutoff)))
        logger.info(f"ExperimentService.qdim - M: {est.cutoff}, p_hat_eps: {p_hat}")
        return bundle

    def distance(self, seed: int) -> ResultBundle:
        panel = self._load_panel(seed)
        series = dynamic_distance(panel, self.config.lags, self.config.pipeline())
        bundle = ResultBundle('distance', summary={
            'lags': self.config.lags,
            'max_distance': float(series['distance'].max()),
            'lag_trend': distance_trend(series),
            'panel': panel.to_dict(),
        })
        bundle.add_table('distance', series)
        logger.info(f"ExperimentService.distance - lags: {len(series)}")
        return bundle
