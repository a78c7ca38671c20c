#!/usr/bin/env python3
"""
Shared helpers for writing run outputs: CSV tables and JSON documents.

Both writers are atomic (write to a temp file in the target directory, then
rename), so an interrupted run never leaves a truncated file behind.
"""

import json
import logging
import os
import tempfile
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Full double precision; floats read back bit-identical
CSV_FLOAT_FORMAT = '%.17g'


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, complex):
        return {'real': value.real, 'imag': value.imag}
    return value


def _atomic_write(path: str, write) -> None:
    dir_name = os.path.dirname(os.path.abspath(path))
    os.makedirs(dir_name, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(suffix='.tmp', prefix='.' + os.path.basename(path) + '_', dir=dir_name)
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            write(f)
        os.replace(tmp_path, path)
    except Exception:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def write_json(path: str, data: Any) -> str:
    """Write data as indented, key-sorted JSON; infinities become Infinity."""
    payload = to_jsonable(data)

    def _dump(f):
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')

    try:
        _atomic_write(path, _dump)
    except (OSError, TypeError, ValueError) as exc:
        logger.error(f"Failed to write {path}: {exc}")
        raise
    logger.info(f"Wrote {path}")
    return path


def read_json(path: str) -> Any:
    with open(path, 'r') as f:
        return json.load(f)


def write_csv(path: str, table: pd.DataFrame) -> str:
    """Write a DataFrame without its index at full float precision."""
    try:
        _atomic_write(path, lambda f: table.to_csv(f, index=False, float_format=CSV_FLOAT_FORMAT))
    except OSError as exc:
        logger.error(f"Failed to write {path}: {exc}")
        raise
    logger.info(f"Wrote {path} ({len(table)} rows)")
    return path


def format_run_name(name: str) -> str:
    """Normalize a target or preset description to a lowercase_underscored directory name."""
    name = name.lower().replace(' ', '_').replace('-', '_').replace(':', '_').replace(',', '_').replace('=', '')
    name = name.replace('.', 'p').replace(';', '_')
    name = ''.join(c for c in name if c.isalnum() or c == '_')
    while '__' in name:
        name = name.replace('__', '_')
    return name.strip('_') or 'run'
