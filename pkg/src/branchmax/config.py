"""Experiment configuration: YAML in, validated dataclass out, canonical hash."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, BranchmaxError
from .levy import model_from_dict
from .offspring import law_from_dict

DEFAULTS = {
    "model": {"variant": "bm", "mu": 1.0, "eta": 1.0},
    "offspring": {"family": "canonical", "beta": 1.5, "c": 0.5},
    "runs": 100_000,
    "seed": 20240501,
    "limits": {"particle_cap": 1_000_000},
    "grid": {"x_max": 200.0, "h": 0.05, "tol": 1e-8, "max_iter": 10_000, "truncation_check": False},
    "x_grid": {"min": 0.1, "max": 1000.0, "num": 240, "spacing": "log"},
    "t_grid": {"min": 0.1, "max": 1000.0, "num": 121, "spacing": "log"},
    "kernel": {"type": "analytic", "m": 100_000},
    "fit": {
        "mc_window": None,
        "solver_window": None,
        "extinction_window": [10.0, 1000.0],
        "tolerances": {"exponent": 0.15, "constant": 0.25},
        "mc_tolerances": None,
        "extinction_tolerance": 0.15,
        "cross_upto": 50.0,
        "routes": ["mc", "solver"],
    },
    "output": "out",
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                lines[path] = key.start_mark.line + 1
                walk(value, path)

    if root is not None:
        walk(root, "")
    return lines


def grid_points(spec: dict, zero: bool = True) -> np.ndarray:
    lo, hi, num = float(spec["min"]), float(spec["max"]), int(spec["num"])
    if spec.get("spacing", "log") == "log":
        pts = np.geomspace(lo, hi, num)
    else:
        pts = np.linspace(lo, hi, num)
    if zero and pts[0] > 0:
        pts = np.concatenate([[0.0], pts])
    return pts


@dataclass
class ExperimentConfig:
    data: dict
    source: str | None = None

    # typed views -----------------------------------------------------------
    @property
    def model(self):
        return model_from_dict(self.data["model"])

    @property
    def law(self):
        return law_from_dict(self.data["offspring"])

    @property
    def runs(self) -> int:
        return int(self.data["runs"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    @property
    def x_grid(self) -> np.ndarray:
        return grid_points(self.data["x_grid"])

    @property
    def t_grid(self) -> np.ndarray:
        return grid_points(self.data["t_grid"])

    # identity --------------------------------------------------------------
    def canonical(self) -> str:
        """Sorted-key JSON of everything that affects artifacts (output dir excluded)."""
        d = {k: v for k, v in self.data.items() if k != "output"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"), default=float)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        for k, v in kw.items():
            if v is not None:
                data[k] = v
        return validate(data, self.source)


def validate(data: dict, source: str | None = None, lines: dict | None = None) -> ExperimentConfig:
    lines = lines or {}

    def fail(path, msg):
        where = f"{source or '<config>'}"
        if path in lines:
            where += f":{lines[path]}"
        raise ConfigError(f"{where}: {path}: {msg}")

    unknown = set(data) - set(DEFAULTS)
    for key in sorted(unknown):
        fail(key, "unknown key")
    merged = _merge(DEFAULTS, data)
    if "model" in data:
        # a model replaces the default one wholesale; variants share no keys
        merged["model"] = copy.deepcopy(data["model"])
    data = merged
    for key in ("runs", "seed"):
        if isinstance(data[key], float) and data[key].is_integer():
            data[key] = int(data[key])
    if not isinstance(data["runs"], int) or data["runs"] < 1:
        fail("runs", f"must be a positive integer, got {data['runs']!r}")
    if not isinstance(data["seed"], int) or not 0 <= data["seed"] < 2 ** 64:
        fail("seed", "must be an integer in [0, 2^64)")
    try:
        model_from_dict(data["model"])
    except (BranchmaxError, KeyError, TypeError, ValueError) as e:
        fail("model", str(e))
    try:
        law_from_dict(data["offspring"])
    except (BranchmaxError, KeyError, TypeError, ValueError) as e:
        fail("offspring", str(e))
    cap = data["limits"].get("particle_cap")
    if not isinstance(cap, int) or cap < 1:
        fail("limits.particle_cap", "must be a positive integer")
    g = data["grid"]
    for key in ("x_max", "h", "tol"):
        if not isinstance(g.get(key), (int, float)) or g[key] <= 0:
            fail(f"grid.{key}", "must be a positive number")
    for name in ("x_grid", "t_grid"):
        spec = data[name]
        if spec.get("spacing", "log") not in ("log", "linear"):
            fail(f"{name}.spacing", "must be 'log' or 'linear'")
        floor = 0.0 if spec.get("spacing", "log") == "linear" else 1e-300
        if not (floor <= float(spec["min"]) < float(spec["max"])) or int(spec["num"]) < 2:
            fail(name, "needs 0 < min < max (min = 0 allowed for linear spacing) and num >= 2")
    if data["kernel"].get("type") not in ("analytic", "empirical"):
        fail("kernel.type", "must be 'analytic' or 'empirical'")
    routes = data["fit"].get("routes")
    if not routes or not set(routes) <= {"mc", "solver"}:
        fail("fit.routes", "must be a nonempty subset of [mc, solver]")
    for key in ("mc_window", "solver_window", "extinction_window"):
        w = data["fit"].get(key)
        if w is not None and (len(w) != 2 or not w[0] < w[1]):
            fail(f"fit.{key}", "must be a pair [lo, hi] with lo < hi")
    return ExperimentConfig(data, source)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{where}: YAML syntax error: {getattr(e, 'problem', e)}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate(data, str(path), _line_map(text))
