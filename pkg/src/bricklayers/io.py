"""Plain-text output: CSV tables with a one-line JSON header, and JSON documents.

Every table file looks like::

    # {"beta": 1.0, "theta": 0.0, ...}
    z,pmf
    -8,6.0758828498232861e-08
    ...

Numbers are written with 17 significant digits so a round trip is lossless
and repeated runs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .gibbs import GibbsMarginal
from .rates import RateFunction, from_document, to_document

OUTPUT_DIR_ENV = "BRICKLAYERS_OUTPUT_DIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj, indent: int | None = 2) -> str:
    return json.dumps(_jsonable(obj), indent=indent, sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path, header: dict, columns: list[str], rows) -> Path:
    """CSV with a ``# {json}`` header line, then the column names, then rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + dumps(header, indent=None), ",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the columns")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise ValueError(f"{path}: missing header line")
    header = json.loads(text[0][2:])
    columns = text[1].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in text[2:]]).reshape(-1, len(columns))
    return header, columns, data


# --- specific exports -------------------------------------------------------------------


def export_marginal(path, m: GibbsMarginal) -> Path:
    header = {"theta": m.theta, "beta": m.rf.beta, "log_Z": m.log_Z, "tail_bound": m.tail_bound}
    return write_table(path, header, ["z", "pmf"], zip(m.support.tolist(), m.pmf.tolist()))


def export_histogram(path, counts: dict[int, int], header: dict) -> Path:
    rows = sorted((int(z), int(c)) for z, c in counts.items())
    return write_table(path, header, ["z", "count"], rows)


def save_rate_function(path, rf: RateFunction) -> Path:
    return write_json(path, to_document(rf))


def load_rate_function(path) -> RateFunction:
    return from_document(read_json(path))
