"""
CSV ingestion and emission for panels and paths

Layout: the header row is 't' followed by the column labels (x-grid values for panels,
component names for paths); each further row is a time point followed by its values.
Floats are written with 17 significant digits so files round-trip exactly.
"""
import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

from qvmanifold.exceptions import PanelParseError, ShapeError
from qvmanifold.models import MultiPath, SpaceTimePanel

logger = logging.getLogger(__name__)

MODULE = 'panel_io'

FLOAT_FORMAT = '%.17g'
TIME_HEADER = 't'


def _read_cells(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise PanelParseError(f"file not found: {path}", module=MODULE)
    try:
        cells = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as e:
        raise ShapeError(f"{path}: ragged rows ({e})", MODULE) from e
    except pd.errors.EmptyDataError as e:
        raise PanelParseError(f"{path}: file is empty", module=MODULE) from e
    except UnicodeDecodeError as e:
        raise PanelParseError(f"{path}: not UTF-8 encoded", module=MODULE) from e
    cells = cells.fillna('').apply(lambda column: column.str.strip())
    if cells.shape[0] < 2 or cells.shape[1] < 2:
        raise PanelParseError(f"{path}: need a header and at least one data row with two columns", module=MODULE)
    if cells.iat[0, 0] != TIME_HEADER:
        raise PanelParseError(f"{path}: first header cell must be {TIME_HEADER!r}", row=1, column=1, module=MODULE)
    return cells


def _check_ragged(cells: pd.DataFrame, path: str):
    for i, row in enumerate(cells.to_numpy()):
        filled = np.flatnonzero(row != '')
        if filled.size == 0:
            raise ShapeError(f"{path}: row {i + 1} is empty", MODULE)
        if filled[-1] < row.size - 1:
            raise ShapeError(f"{path}: row {i + 1} has {filled[-1] + 1} fields, expected {row.size}", MODULE)


def _to_float(block: np.ndarray, path: str, row_offset: int, column_offset: int) -> np.ndarray:
    try:
        values = block.astype(float)
    except ValueError:
        for (i, j), cell in np.ndenumerate(block):
            try:
                float(cell)
            except ValueError:
                raise PanelParseError(f"{path}: cannot parse {cell!r} as a number",
                                      row=i + row_offset, column=j + column_offset, module=MODULE) from None
        raise
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = bad[0]
        raise PanelParseError(f"{path}: non-finite value {block[i, j]!r}",
                              row=int(i) + row_offset, column=int(j) + column_offset, module=MODULE)
    return values


def _check_increasing(grid: np.ndarray, path: str, label: str, along_row: bool):
    steps = np.diff(grid)
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0)) + 1
        if along_row:
            raise PanelParseError(f"{path}: {label} is not strictly increasing", row=1, column=k + 2, module=MODULE)
        raise PanelParseError(f"{path}: {label} is not strictly increasing", row=k + 2, column=1, module=MODULE)


def _parse(path: str):
    cells = _read_cells(path)
    _check_ragged(cells, path)
    raw = cells.to_numpy()
    header = raw[0, 1:]
    t_grid = _to_float(raw[1:, :1], path, 2, 1)[:, 0]
    _check_increasing(t_grid, path, 'time column', along_row=False)
    values = _to_float(raw[1:, 1:], path, 2, 2)
    return header, t_grid, values


def ingest_panel(path: str, phi_path: Optional[str] = None, name: Optional[str] = None) -> SpaceTimePanel:
    header, t_grid, values = _parse(path)
    x_grid = _to_float(header[None, :], path, 1, 2)[0]
    _check_increasing(x_grid, path, 'x grid', along_row=True)
    phi = None
    if phi_path is not None:
        phi_panel = ingest_panel(phi_path)
        if not (np.array_equal(phi_panel.t_grid, t_grid) and np.array_equal(phi_panel.x_grid, x_grid)):
            raise ShapeError(f"{phi_path}: grids differ from {path}", MODULE)
        phi = phi_panel.values
    logger.info(f"ingest_panel - {path}: {values.shape[0]} times x {values.shape[1]} points")
    return SpaceTimePanel(t_grid=t_grid, x_grid=x_grid, values=values, phi=phi,
                          name=name or os.path.splitext(os.path.basename(path))[0])


def read_path(path: str) -> MultiPath:
    header, t_grid, values = _parse(path)
    return MultiPath(t_grid, values, [str(h) for h in header])


def write_frame(frame: pd.DataFrame, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_panel(panel: SpaceTimePanel, path: str, surface: Optional[np.ndarray] = None):
    write_frame(panel.to_frame(surface), path)


def write_path(multipath: MultiPath, path: str):
    write_frame(multipath.to_frame(), path)
