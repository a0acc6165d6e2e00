"""CSV and JSON artifacts.

Every CSV starts with a ``# config_hash=<hex>`` comment line and every JSON
document carries a ``config_hash`` key.  Floats are written with 17
significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .asymptotics import TailCurve
from .branching import OutcomeBatch
from .errors import BranchmaxError

OUTCOME_COLUMNS = ("run_index", "max", "extinction_time", "particles", "censored")
CURVE_COLUMNS = ("x", "value", "stderr", "upper", "upper_stderr")
SOLUTION_COLUMNS = ("x", "u", "R", "P_sup")


class ArtifactError(BranchmaxError):
    """Missing, malformed, or mismatched artifact file."""


def fmt(v) -> str:
    return format(float(v), ".17g")


def _write_rows(path: Path, config_hash: str, header, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(row) + "\n")


def _read_rows(path: Path):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run the producing command first")
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# config_hash="):
            raise ArtifactError(f"{path}: no config_hash header line")
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {name: [r[i] for r in rows] for i, name in enumerate(header)}
    return first.split("=", 1)[1], cols


def write_outcomes(path, batch: OutcomeBatch, config_hash: str):
    _write_rows(path, config_hash, OUTCOME_COLUMNS, [
        [str(i) for i in batch.run_index],
        [fmt(v) for v in batch.max],
        [fmt(v) for v in batch.extinction_time],
        [str(int(v)) for v in batch.particles],
        ["1" if c else "0" for c in batch.censored],
    ])


def read_outcomes(path) -> tuple[OutcomeBatch, str]:
    h, cols = _read_rows(path)
    idx = np.array(cols["run_index"], dtype=np.int64)
    batch = OutcomeBatch(np.array(cols["max"], dtype=np.float64),
                         np.array(cols["extinction_time"], dtype=np.float64),
                         np.array(cols["particles"], dtype=np.int64),
                         np.array(cols["censored"], dtype=np.int64).astype(bool),
                         int(idx[0]) if idx.size else 0)
    return batch, h


def write_curve(path, curve: TailCurve, config_hash: str, xname: str = "x"):
    upper = curve.upper if curve.upper is not None else curve.value
    upper_se = curve.upper_stderr if curve.upper_stderr is not None else curve.stderr
    header = (xname,) + CURVE_COLUMNS[1:]
    _write_rows(path, config_hash, header, [[fmt(v) for v in a] for a in
                                            (curve.x, curve.value, curve.stderr, upper, upper_se)])


def read_curve(path, n: int | None = None) -> tuple[TailCurve, str]:
    h, cols = _read_rows(path)
    xname = next(iter(cols))
    arr = {k: np.array(v, dtype=np.float64) for k, v in cols.items()}
    return TailCurve(arr[xname], arr["value"], arr["stderr"], arr["upper"], arr["upper_stderr"], n), h


def write_solution(path, x, u, R, p_sup, config_hash: str):
    _write_rows(path, config_hash, SOLUTION_COLUMNS, [[fmt(v) for v in a] for a in (x, u, R, p_sup)])


def read_solution(path) -> tuple[dict, str]:
    h, cols = _read_rows(path)
    return {k: np.array(v, dtype=np.float64) for k, v in cols.items()}, h


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, doc: dict, config_hash: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(doc)
    doc["config_hash"] = config_hash
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run the producing command first")
    return json.loads(path.read_text())


def require_hash(found: str, expected: str, path):
    if found != expected:
        raise ArtifactError(f"{path} was produced by config {found}, current config is {expected}; "
                            "re-run the producing command")
