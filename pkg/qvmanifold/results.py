"""
Result bundles: CSV tables plus a JSON run summary per output directory
"""
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from typing import Dict, List

import joblib
import numpy as np
import pandas as pd
import scipy

from qvmanifold import __version__
from qvmanifold.panel_io import write_frame

logger = logging.getLogger(__name__)

SUMMARY_FILE = 'summary.json'


def versions() -> Dict[str, str]:
    return {
        'qvmanifold': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'joblib': joblib.__version__,
    }


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


@dataclass
class ResultBundle:
    """Tables and summary of one command run; children are written to subdirectories"""

    command: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)
    children: Dict[str, 'ResultBundle'] = field(default_factory=dict)

    def add_table(self, name: str, frame: pd.DataFrame):
        self.tables[name] = frame

    def to_dict(self) -> Dict:
        result = {
            'command': self.command,
            'tables': {name: list(frame.shape) for name, frame in self.tables.items()},
            'summary': self.summary,
        }
        if self.children:
            result['children'] = {name: child.to_dict() for name, child in self.children.items()}
        return result

    def write(self, output_dir: str) -> List[str]:
        """Write every table as <name>.csv and the summary as summary.json; returns the files written"""
        os.makedirs(output_dir, exist_ok=True)
        written = []
        for name, frame in self.tables.items():
            target = os.path.join(output_dir, f"{name}.csv")
            write_frame(frame, target)
            written.append(target)
        target = os.path.join(output_dir, SUMMARY_FILE)
        with open(target, 'w', encoding='utf-8') as handle:
            json.dump({'command': self.command, **self.summary}, handle, indent=2, sort_keys=True,
                      default=_json_default)
            handle.write('\n')
        written.append(target)
        for name, child in self.children.items():
            written.extend(child.write(os.path.join(output_dir, name)))
        logger.info(f"ResultBundle.write - {self.command}: {len(written)} files under {output_dir}")
        return written
