import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import pandas as pd
from joblib import Parallel, delayed

from qvmanifold.config import COMMANDS, RunConfig, expand_lags, load_config, resolve_config
from qvmanifold.exceptions import CommandError, ConfigError, QvManifoldError
from qvmanifold.factor_model import PENALTIES
from qvmanifold.results import ResultBundle
from qvmanifold.service import ExperimentService
from qvmanifold.simulation import MODEL_IDS, NOISE_KINDS
from qvmanifold.spde_manifold import QDIM_ROUTES

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
SWEEP_KEYS = ('p_hat', 'd_hat', 'p_hat_eps', 'max_distance', 'lag_trend')


def _run_seed(config: RunConfig, seed: int) -> ResultBundle:
    return ExperimentService(config.for_seed(seed)).execute(seed)


def run(command: str, config: RunConfig) -> ResultBundle:
    """Execute `command` for every configured seed and write the results under config.output_dir"""
    if command != config.command:
        raise ConfigError(f"config was resolved for {config.command!r}, not {command!r}")
    seeds = config.seeds if config.simulated else config.seeds[:1]
    if len(seeds) == 1:
        bundle = _run_seed(config, seeds[0])
    else:
        children = Parallel(n_jobs=config.n_jobs)(delayed(_run_seed)(config, seed) for seed in seeds)
        rows = []
        for seed, child in zip(seeds, children):
            rows.append({'seed': seed, **{k: child.summary[k] for k in SWEEP_KEYS if k in child.summary}})
        bundle = ResultBundle(command, summary={'seeds': seeds, 'config': config.to_dict()},
                              children={f"seed_{seed}": child for seed, child in zip(seeds, children)})
        bundle.add_table('sweep', pd.DataFrame(rows))
    try:
        bundle.write(config.output_dir)
    except OSError as e:
        raise CommandError(f"Failed to write results to {config.output_dir}: {e}", command, 'results') from e
    return bundle


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='qvmanifold',
                                     description='Quadratic-variation PCA and invariant manifold estimation')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', help='key=value configuration file')
    parser.add_argument('--seed', dest='seeds', help='seed or comma-separated seeds')
    parser.add_argument('--model', choices=MODEL_IDS)
    parser.add_argument('--input', dest='input_path', help='CSV panel or path file')
    parser.add_argument('--phi', dest='phi_path', help='CSV file with the known parametrization')
    parser.add_argument('--n', dest='n_points', type=int, help='number of time points')
    parser.add_argument('--n-space', type=int, help='number of space points')
    parser.add_argument('--horizon', type=float)
    parser.add_argument('--space-interval', help='a,b')
    parser.add_argument('--kmax', type=int)
    parser.add_argument('--penalty', choices=PENALTIES)
    parser.add_argument('--d-hat', type=int, help='skip the PC criterion and use this many factors')
    parser.add_argument('--eps-rel', type=float)
    parser.add_argument('--qdim-route', choices=QDIM_ROUTES)
    parser.add_argument('--fourier-eps', type=float)
    parser.add_argument('--fourier-relative', action='store_true', default=None)
    parser.add_argument('--cutoff', dest='fourier_cutoff', type=int, help='Fourier cutoff M')
    parser.add_argument('--lags', help='comma-separated lags or start:stop:step')
    parser.add_argument('--noise', choices=NOISE_KINDS)
    parser.add_argument('--noise-scale', type=float)
    parser.add_argument('--no-demean', dest='demean', action='store_false', default=None)
    parser.add_argument('--n-jobs', type=int)
    parser.add_argument('--output', dest='output_dir')
    parser.add_argument('--verbose', action='store_true')
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    values = {k: v for k, v in vars(args).items() if k not in ('command', 'config', 'verbose')}
    try:
        if values.get('seeds') is not None:
            values['seeds'] = [int(s) for s in values['seeds'].split(',') if s.strip()]
        if values.get('lags') is not None:
            values['lags'] = expand_lags(values['lags'])
        if values.get('space_interval') is not None:
            values['space_interval'] = tuple(float(v) for v in values['space_interval'].split(','))
    except ValueError as e:
        raise ConfigError(f"invalid command-line value: {e}") from e
    return values


def _error_payload(command: Optional[str], error: QvManifoldError) -> str:
    cause = error.__cause__ if isinstance(error, CommandError) and error.__cause__ else error
    return json.dumps({
        'status': 'error',
        'command': command,
        'module': error.module,
        'error': type(cause).__name__,
        'message': str(error),
    })


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        file_values = load_config(args.config) if args.config else {}
        config = resolve_config(args.command, file_values, _overrides(args))
        bundle = run(args.command, config)
    except ConfigError as e:
        print(_error_payload(args.command, e), file=sys.stderr)
        return 2
    except QvManifoldError as e:
        print(_error_payload(args.command, e), file=sys.stderr)
        return 1
    print(json.dumps({'status': 'ok', 'command': args.command,
                      'output_dir': os.path.abspath(config.output_dir),
                      'tables': sorted(bundle.tables)}))
    return 0
