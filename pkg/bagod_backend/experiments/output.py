"""
Figure-ready ``.dat`` tables and the JSON metadata sidecar of a run.
"""
import json
import logging
import math
from dataclasses import asdict
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)

# (method, metric) behind y1..y8
DAT_COLUMNS = (
    ('amp', 'p_d'), ('amp', 'p_fa'),
    ('bagod', 'p_d'), ('bagod', 'p_fa'),
    ('bagod', 'p_d_s'), ('bagod', 'p_fa_s'),
    ('bagod', 'p_d_m'), ('bagod', 'p_fa_m'),
)
VERSIONED_PACKAGES = ('Django', 'djangorestframework', 'numpy', 'scipy', 'cvxpy', 'joblib')


def format_number(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return 'nan'
    return f'{float(value):.10g}'


def render_dat(table) -> str:
    if not len(table):
        raise ConfigurationError("cannot write an empty results table")
    lines = ['t ' + ' '.join(f'y{i}' for i in range(1, len(DAT_COLUMNS) + 1))]
    for row in table.rows:
        cells = [format_number(row.value)]
        for method, name in DAT_COLUMNS:
            metrics = row.metrics.get(method)
            cells.append(format_number(getattr(metrics, name) if metrics else None))
        lines.append(' '.join(cells))
    return '\n'.join(lines) + '\n'


def emit_dat(table, path) -> Path:
    """Write ``table`` as whitespace-separated text; write errors propagate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_dat(table))
    logger.info("wrote %s", path)
    return path


def render_spectrum_dat(spectrum, estimated=(), truth=(), scale: float = 1.0, marks: bool = True) -> str:
    """
    Columns x1 (degrees), y1 the scaled spectrum, y2 and y3 the spectrum at
    the grid points nearest to the estimated and true angles, ``nan`` elsewhere.
    With ``marks=False`` only x1 and y1 are written.
    """
    grid = np.asarray(spectrum.grid)
    values = scale * np.asarray(spectrum.values)
    if not marks:
        lines = ['x1 y1'] + [f'{format_number(x)} {format_number(y)}' for x, y in zip(np.degrees(grid), values)]
        return '\n'.join(lines) + '\n'
    columns = []
    for angles in (estimated, truth):
        column = np.full(grid.shape, np.nan)
        for theta in angles:
            i = int(np.argmin(np.abs(grid - theta)))
            column[i] = values[i]
        columns.append(column)
    lines = ['x1 y1 y2 y3']
    for x, y, est, true in zip(np.degrees(grid), values, *columns):
        lines.append(' '.join(format_number(v) for v in (x, y, est, true)))
    return '\n'.join(lines) + '\n'


def emit_spectrum_dat(spectrum, path, estimated=(), truth=(), scale: float = 1.0, marks: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_spectrum_dat(spectrum, estimated, truth, scale, marks))
    logger.info("wrote %s", path)
    return path


def package_versions() -> dict:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def jsonable(value):
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def build_metadata(spec, table, options) -> dict:
    """Resolved parameters, options, versions, timings and failure counts."""
    return jsonable({
        'name': spec.name,
        'config': spec.config,
        'resolved': {
            'sweep': spec.sweep,
            'values': list(spec.values),
            'trials': spec.trials,
            'seed': spec.seed,
            'methods': list(spec.methods),
            'threads': spec.threads,
            'exclude_failures': spec.exclude_failures,
            'scenario': asdict(spec.scenario),
        },
        'options': options.as_dict(),
        'versions': package_versions(),
        'rows': [
            {
                'value': row.value,
                'trials_used': row.trials_used,
                'failures': row.failures,
                'scenario_failures': row.scenario_failures,
                'wall_time': row.wall_time,
                'flags': row.flags,
            }
            for row in table.rows
        ],
        'flags': table.flags,
    })


def emit_metadata(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path
