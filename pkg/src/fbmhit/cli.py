"""Command-line experiment runner ``hitlab``.

Every subcommand reads a JSON config (``--config``), validates it against a
versioned schema, runs the corresponding pipeline and writes ``report.json``
plus CSV tables into ``--out``. Exit codes: 0 success, 1 a validation check
inside the report failed, 2 configuration or budget error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .gauss import Drift, ProcessSpec, empirical_covariance, freeze_drift, simulate, validate_modulus, write_cache
from .hitlab import (
    HittingExperiment,
    Target,
    Thresholds,
    TimeSet,
    estimate_hitting,
    image_measure_estimate,
    kernel_expectation_check,
    polarity_dichotomy,
    sharpness_experiment,
)
from .metric import MetricDescriptor, PointCloud, box_dimension
from .potential import RadialKernel, capacity
from .sets import (
    ScalingProfile,
    build_cantor_lambda,
    build_e_phi,
    build_nu_pair,
    certify_ahlfors,
    interval_cloud,
    planar_cantor_cloud,
)
from .svf import SlowVarySpec

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "dimension", "capacity", "construct-set", "hitting", "polarity", "sharpness",
            "kernel-check", "image-measure", "validate")
MAX_SAMPLES = 4_000_000_000


class ConfigError(ValueError):
    """Raised for schema violations and budget exceedance (exit code 2)."""


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_unit_open = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_int = {"type": "integer", "minimum": 1}

SLOW = {
    "type": "object",
    "properties": {
        "family": {"enum": ["constant", "log_power", "exp_log_power"]},
        "c": _pos,
        "beta": {"type": "number", "minimum": 0},
        "gamma": _unit_open,
        "x0": {"type": "number", "minimum": 1},
    },
    "additionalProperties": False,
}
PROCESS = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["fbm", "delta_theta", "mixed"]},
        "H": _unit_open,
        "alpha": _unit_open,
        "d": _pos_int,
        "slow": SLOW,
    },
    "additionalProperties": False,
}
PROFILE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["power", "power_log_plus", "power_log_minus", "regvar_power"]},
        "alpha": _unit_open,
        "beta": _pos,
        "slow": SLOW,
        "m": _pos,
        "x0": _pos,
    },
    "additionalProperties": False,
}
TIME_SET = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["interval", "cantor_lambda", "e_phi", "nu_E1", "nu_E2"]},
        "a": {"type": "number", "minimum": 0},
        "b": {"type": "number", "maximum": 1},
        "lam": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "depth": {"type": "integer", "minimum": 0, "maximum": 24},
        "l0": _pos,
        "origin": {"type": "number", "minimum": 0},
        "profile": PROFILE,
        "alpha": _unit_open,
        "beta": {"type": "number", "exclusiveMinimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
TARGET = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["point", "ball", "planar_cantor"]},
        "x": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "radius": _pos,
        "lam": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "depth": {"type": "integer", "minimum": 0, "maximum": 10},
        "l0": _pos,
    },
    "required": ["kind"],
    "additionalProperties": False,
}
DRIFT = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "power", "frozen"]},
        "a": {"type": "number"},
        "H": _unit_open,
        "alpha": _unit_open,
        "slow": SLOW,
        "seed": {"type": "integer", "minimum": 0},
        "n": _pos_int,
    },
    "required": ["kind"],
    "additionalProperties": False,
}
METRIC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["euclidean", "power_time", "regvar_time"]},
        "H": _unit_open,
        "slow": SLOW,
    },
    "required": ["kind"],
    "additionalProperties": False,
}
THRESHOLDS = {
    "type": "object",
    "properties": {k: _pos for k in Thresholds().to_dict()},
    "additionalProperties": False,
}
LADDER = {"type": "array", "items": _pos, "minItems": 2}

BLOCKS: dict[str, dict] = {
    "simulate": {
        "process": PROCESS,
        "n": _pos_int,
        "n_paths": _pos_int,
        "times": {"type": "array", "items": _unit_open},
        "modulus": {"type": "boolean"},
        "z_max": _pos,
        "cache": {"type": "string"},
    },
    "dimension": {
        "set": TIME_SET,
        "n_grid": _pos_int,
        "metric": METRIC,
        "radii": LADDER,
        "expected": {"type": "number"},
        "tolerance": _pos,
    },
    "capacity": {
        "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                   "minItems": 1},
        "set": TIME_SET,
        "n_grid": _pos_int,
        "resolution": _pos,
        "metric": METRIC,
        "kernel": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["riesz", "phi_hl"]},
                "alpha": {"type": "number"},
                "r0": {"type": "number", "minimum": 0},
                "H": _unit_open,
                "d": _pos_int,
                "slow": SLOW,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "tol": _pos,
        "max_iter": _pos_int,
    },
    "construct-set": {"set": TIME_SET, "ahlfors_gamma": _pos, "radii": LADDER},
    "hitting": {
        "process": PROCESS,
        "drift": DRIFT,
        "time_set": TIME_SET,
        "target": TARGET,
        "rungs": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "prefixItems": [_pos_int, _pos], "minItems": 2, "maxItems": 2}},
        "n_paths": _pos_int,
        "bridge": {"type": "boolean"},
        "allow_subfloor": {"type": "boolean"},
        "expected": {"type": "number", "minimum": 0, "maximum": 1},
        "tolerance": _pos,
    },
    "polarity": {
        "H": _unit_open,
        "d": _pos_int,
        "beta": {"type": "number", "exclusiveMinimum": 1},
        "K": {"type": "integer", "minimum": 2, "maximum": 16},
        "n_paths": _pos_int,
        "drift": DRIFT,
        "x": {"type": "array", "items": {"type": "number"}},
        "eps": _pos,
        "l0": _pos,
        "origin": _pos,
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
        "potential_evidence": {"type": "boolean"},
    },
    "sharpness": {
        "H": _unit_open,
        "d": _pos_int,
        "gamma": {"type": "number", "minimum": 0},
        "slow": SLOW,
        "K": {"type": "integer", "minimum": 2, "maximum": 16},
        "n_paths": _pos_int,
        "drift_seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "l0": _pos,
        "origin": _pos,
        "eps": _pos,
        "control": {"type": "boolean"},
    },
    "kernel-check": {
        "alpha": _unit_open,
        "slow": SLOW,
        "d": _pos_int,
        "t_ladder": {"type": "array", "items": _unit_open, "minItems": 2},
        "n_paths": _pos_int,
        "band": _pos,
    },
    "image-measure": {
        "process": PROCESS,
        "drift": DRIFT,
        "time_set": TIME_SET,
        "n": _pos_int,
        "widths": LADDER,
        "n_paths": _pos_int,
        "budget": _pos_int,
        "expect": {"enum": ["positive_stable", "decays", "none"]},
    },
}

DEFAULTS: dict[str, dict] = {
    "simulate": {"process": {"kind": "fbm", "H": 0.5, "d": 1}, "n": 1024, "n_paths": 1000,
                 "times": [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0], "modulus": False, "z_max": 4.0},
    "dimension": {"set": {"kind": "interval", "a": 0.0, "b": 1.0}, "n_grid": 10001, "metric": {"kind": "euclidean"},
                  "radii": [0.001, 0.002, 0.005, 0.01, 0.02, 0.05], "tolerance": 0.05},
    "capacity": {"metric": {"kind": "euclidean"}, "kernel": {"kind": "riesz", "alpha": 0.5, "r0": 0.0},
                 "n_grid": 257, "tol": 1e-8, "max_iter": 200000},
    "construct-set": {"set": {"kind": "cantor_lambda", "lam": 1 / 3, "depth": 8, "l0": 1.0, "origin": 0.0}},
    "hitting": {"process": {"kind": "fbm", "H": 0.5, "d": 1}, "drift": {"kind": "zero"},
                "time_set": {"kind": "interval", "a": 0.25, "b": 1.0}, "target": {"kind": "point", "x": [0.0]},
                "rungs": [[256, 1e-12], [1024, 1e-12]], "n_paths": 10000, "bridge": True, "allow_subfloor": False,
                "tolerance": 0.02},
    "polarity": {"H": 0.5, "d": 1, "beta": 2.0, "K": 10, "n_paths": 20000, "drift": {"kind": "zero"}, "eps": 1e-12,
                 "l0": 0.04, "origin": 0.5, "potential_evidence": True},
    "sharpness": {"H": 0.5, "d": 1, "gamma": 0.0, "slow": {"family": "log_power", "beta": 1.0}, "K": 10,
                  "n_paths": 20000, "drift_seeds": [0, 1, 2], "origin": 0.5, "eps": 1e-12, "control": True},
    "kernel-check": {"alpha": 0.5, "slow": {"family": "constant", "c": 1.0}, "d": 1,
                     "t_ladder": [0.25, 0.1, 0.03, 0.01, 0.003], "n_paths": 200000, "band": 3.0},
    "image-measure": {"process": {"kind": "fbm", "H": 0.25, "d": 1}, "drift": {"kind": "zero"},
                      "time_set": {"kind": "interval", "a": 0.25, "b": 1.0}, "n": 1024,
                      "widths": [0.04, 0.02, 0.01, 0.005], "n_paths": 100, "budget": 10_000_000, "expect": "none"},
}


def schema_for(command: str) -> dict:
    props = {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": [c for c in COMMANDS if c != "validate"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "thresholds": THRESHOLDS,
        "budget": {"type": "object", "properties": {"max_samples": _pos_int}, "additionalProperties": False},
    }
    props.update(BLOCKS[command])
    return {"type": "object", "properties": props, "required": ["schema_version", "experiment"],
            "additionalProperties": False}


def _field(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path = ".".join([path, *extra]) if path else ".".join(extra)
    if err.validator == "required":
        missing = [m for m in err.validator_value if m not in err.instance]
        path = ".".join([path, *missing]) if path else ".".join(missing)
    return path or "<root>"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("drift", "time_set", "target", "set",
                                                                              "metric", "kernel", "slow", "process"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path, command: str, seed: int | None = None) -> dict:
    """Read, schema-validate and resolve a config; raises ConfigError naming the offending field."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    experiment = raw.get("experiment")
    if command != "validate" and experiment not in (None, command):
        raise ConfigError(f"field 'experiment': config is for {experiment!r}, not {command!r}")
    target = command if command != "validate" else experiment
    if target not in BLOCKS:
        raise ConfigError(f"field 'experiment': must be one of {sorted(BLOCKS)}")
    raw = dict(raw)
    raw.setdefault("experiment", target)
    validator = jsonschema.Draft202012Validator(schema_for(target))
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"field '{_field(e)}': {e.message}")
    cfg = _merge(DEFAULTS[target], raw)
    cfg["seed"] = int(seed if seed is not None else raw.get("seed", 0))
    cfg["thresholds"] = _merge(Thresholds().to_dict(), raw.get("thresholds", {}))
    cfg["budget"] = _merge({"max_samples": MAX_SAMPLES}, raw.get("budget", {}))
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: dict) -> None:
    exp = cfg["experiment"]
    try:
        if "process" in cfg:
            ProcessSpec.from_dict(cfg["process"])
        if "slow" in cfg:
            SlowVarySpec.from_dict(cfg["slow"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"field 'process': {e}") from e
    if exp == "hitting":
        ts = cfg["time_set"]
        if ts["kind"] == "interval" and not 0 < ts.get("a", 0.25) < ts.get("b", 1.0) <= 1:
            raise ConfigError("field 'time_set': interval needs 0 < a < b <= 1")
        tgt = cfg["target"]
        if tgt["kind"] in ("point", "ball") and len(tgt.get("x", [0.0])) != cfg["process"].get("d", 1):
            raise ConfigError("field 'target.x': length must equal process.d")
    if exp == "polarity" and not cfg["H"] * cfg["d"] < 1:
        raise ConfigError("field 'H': the dichotomy needs H * d < 1")
    if exp == "sharpness" and not 0 <= cfg["gamma"] < cfg["d"]:
        raise ConfigError("field 'gamma': must lie in [0, d)")
    planned = _planned_samples(cfg)
    if planned > cfg["budget"]["max_samples"]:
        raise ConfigError(f"field 'budget.max_samples': planned {planned} samples exceed the budget "
                          f"{cfg['budget']['max_samples']}")


def _planned_samples(cfg: dict) -> int:
    exp = cfg["experiment"]
    d = cfg.get("process", {}).get("d", cfg.get("d", 1))
    if exp == "simulate":
        return cfg["n_paths"] * (cfg["n"] + 1) * d
    if exp == "hitting":
        n = max(r[0] for r in cfg["rungs"])
        if cfg["time_set"]["kind"] != "interval":
            n = 2 ** (cfg["time_set"].get("depth", 10) + 1)
        return cfg["n_paths"] * (n + 1) * d
    if exp in ("polarity", "sharpness"):
        return 2 * cfg["n_paths"] * 2 ** (cfg["K"] + 1) * d
    if exp == "image-measure":
        return cfg["n_paths"] * (cfg["n"] + 1) * d
    if exp == "kernel-check":
        return cfg["n_paths"] * len(cfg["t_ladder"]) * cfg["d"]
    return 0


# ---------------------------------------------------------------------------
# builders from config blocks
# ---------------------------------------------------------------------------

def _slow(d: dict | None) -> SlowVarySpec:
    return SlowVarySpec.from_dict(d or {})


def build_time_set(d: dict):
    """Interval (a, b) tuple or CantorTree from a ``time_set`` block."""
    kind = d["kind"]
    if kind == "interval":
        return None
    origin = d.get("origin", 0.0)
    if kind == "cantor_lambda":
        return build_cantor_lambda(d.get("lam", 1 / 3), d.get("depth", 8), d.get("l0", 1.0), origin)
    if kind == "e_phi":
        return build_e_phi(ScalingProfile.from_dict(d["profile"]), d.get("l0", 0.05), d.get("depth", 10), origin)
    E1, E2 = build_nu_pair(d.get("alpha", 0.5), d.get("beta", 2.0), d.get("l0", 0.04), d.get("depth", 10), origin)
    return E1 if kind == "nu_E1" else E2


def build_drift(d: dict, dim: int, times=None) -> Drift:
    kind = d["kind"]
    if kind == "zero":
        return Drift.zero(dim)
    if kind == "power":
        return Drift.power(d.get("a", 0.3), d.get("H", 0.5), dim)
    spec = ProcessSpec.delta_theta(d.get("alpha", 0.5), _slow(d.get("slow")), dim)
    return freeze_drift(spec, d.get("n", 4096), d.get("seed", 0), times=times)


def build_target(d: dict, dim: int) -> Target:
    if d["kind"] == "planar_cantor":
        cl = planar_cantor_cloud(d.get("lam", 0.25), d.get("depth", 4), d.get("l0", 0.5), tuple(d.get("x", [0.0, 0.0])))
        return Target("cloud", np.asarray(d.get("x", [0.0, 0.0])), cloud=cl.points)
    x = d.get("x", [0.0] * dim)
    return Target(d["kind"], x, radius=d.get("radius", 0.0))


def build_metric(d: dict) -> MetricDescriptor:
    if d["kind"] == "euclidean":
        return MetricDescriptor.euclidean()
    if d["kind"] == "power_time":
        return MetricDescriptor.power_time(d.get("H", 0.5))
    return MetricDescriptor.regvar_time(d.get("H", 0.5), _slow(d.get("slow")))


def _set_cloud(d: dict, n_grid: int, metric: MetricDescriptor) -> PointCloud:
    tree = build_time_set(d)
    if tree is None:
        return interval_cloud(d.get("a", 0.0), d.get("b", 1.0), n_grid, metric)
    return tree.leaf_cloud(metric)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def clean(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# pipelines: each returns (result, checks, csv tables)
# ---------------------------------------------------------------------------

def run_simulate(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    spec = ProcessSpec.from_dict(cfg["process"])
    ens = simulate(spec, cfg["n"], cfg["n_paths"], cfg["seed"])
    rows, zs = [], []
    for t in cfg["times"]:
        i = int(round(t * cfg["n"]))
        x = ens.paths[:, i, 0]
        v = float(spec.variance(ens.t[i]))
        m2 = float(np.mean(x**2))
        se = float(np.std(x**2, ddof=1) / math.sqrt(x.size))
        z = (m2 - v) / se
        zs.append(z)
        rows.append([float(ens.t[i]), m2 / v, z])
    cov, cov_se = empirical_covariance(ens, 0.5, 1.0)
    exact = 0.5 * (float(spec.variance(0.5)) + float(spec.variance(1.0)) - float(spec.variance(1.0 - 0.5)))
    z_cov = (cov - exact) / cov_se
    result = {"variance": [{"t": r[0], "ratio": r[1], "z": r[2]} for r in rows],
              "covariance_05_1": {"estimate": cov, "exact": exact, "z": z_cov}}
    if cfg["modulus"]:
        result["modulus"] = validate_modulus(ens, spec.H if spec.kind == "fbm" else spec.alpha, spec.slow)
    if "cache" in cfg:
        write_cache(ens, out / cfg["cache"])
    checks = {"variance_within_z": bool(max(abs(z) for z in zs) <= cfg["z_max"]),
              "covariance_within_z": bool(abs(z_cov) <= cfg["z_max"])}
    return result, checks, {"variance.csv": (["t", "ratio", "z"], rows)}


def run_dimension(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    cloud = _set_cloud(cfg["set"], cfg["n_grid"], build_metric(cfg["metric"]))
    stats = box_dimension(cloud, cfg["radii"])
    checks = {}
    if "expected" in cfg:
        checks["slope_within_tolerance"] = bool(abs(stats.slope - cfg["expected"]) <= cfg["tolerance"])
    rows = [[float(r), int(n), bool(u)] for r, n, u in zip(stats.radii, stats.counts, stats.used)]
    return {"n_points": len(cloud), "resolution": cloud.resolution, **stats.to_dict()}, checks, \
        {"covering.csv": (["r", "N", "used"], rows)}


def run_capacity(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    metric = build_metric(cfg["metric"])
    kd = cfg["kernel"]
    if "points" in cfg:
        pts = np.asarray(cfg["points"], dtype=float)
        if "resolution" not in cfg:
            raise ConfigError("field 'resolution': required when 'points' is given")
        cloud = PointCloud(pts, cfg["resolution"], metric)
    elif "set" in cfg:
        cloud = _set_cloud(cfg["set"], cfg["n_grid"], metric)
    else:
        raise ConfigError("field 'points': give either 'points' or 'set'")
    if kd["kind"] == "riesz":
        kernel = RadialKernel.riesz(kd.get("alpha", 0.5), r0=kd.get("r0", 0.0))
    else:
        kernel = RadialKernel.phi(kd.get("H", 0.5), kd.get("d", 1), _slow(kd.get("slow")), r0=kd.get("r0", 0.0))
    res = capacity(cloud, kernel, cfg["tol"], cfg["max_iter"], threads=threads)
    rows = [[*map(float, p), float(w)] for p, w in zip(cloud.points, res.weights)]
    header = [f"x{i}" for i in range(cloud.points.shape[1])] + ["weight"]
    return {"n_points": len(cloud), "kernel": kernel.to_dict(), **res.to_dict()}, {"converged": res.converged}, \
        {"weights.csv": (header, rows)}


def run_construct(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    tree = build_time_set(cfg["set"])
    if tree is None:
        raise ConfigError("field 'set.kind': construct-set needs a Cantor construction")
    tree.check()
    result = {"tree": tree.to_dict()}
    checks = {"nested_disjoint": True}
    if "ahlfors_gamma" in cfg:
        radii = cfg.get("radii") or list(np.geomspace(tree.leaf_length * 4, tree.l0 / 2, 8))
        rep = certify_ahlfors(tree, cfg["ahlfors_gamma"], radii, seed=cfg["seed"])
        result["ahlfors"] = rep.to_dict()
        checks["ahlfors"] = bool(rep.passed)
    rows = [[float(a), float(tree.leaf_length)] for a in tree.leaf_lefts]
    lrows = [[k, float(l)] for k, l in enumerate(tree.lengths)]
    return result, checks, {"leaves.csv": (["left", "length"], rows), "lengths.csv": (["level", "length"], lrows)}


def _hitting_experiment(cfg: dict, threads: int) -> HittingExperiment:
    spec = ProcessSpec.from_dict(cfg["process"])
    tree = build_time_set(cfg["time_set"])
    E = TimeSet(cfg["time_set"].get("a", 0.25), cfg["time_set"].get("b", 1.0)) if tree is None else TimeSet(tree=tree)
    times = None
    if tree is not None and cfg["drift"]["kind"] == "frozen":
        times = np.sort(np.concatenate([tree.leaf_lefts, tree.leaf_lefts + tree.leaf_length]))
    drift = build_drift(cfg["drift"], spec.d, times)
    rungs = [(int(n), float(e)) for n, e in cfg["rungs"]]
    return HittingExperiment(spec, E, build_target(cfg["target"], spec.d), rungs, cfg["n_paths"], cfg["seed"], drift,
                             cfg["bridge"], cfg["allow_subfloor"], threads)


def run_hitting(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    try:
        exp = _hitting_experiment(cfg, threads)
        est = estimate_hitting(exp)
    except ValueError as e:
        raise ConfigError(f"field 'rungs': {e}") from e
    checks = {}
    if "expected" in cfg:
        checks["p_hat_within_tolerance"] = bool(abs(est.p_hat - cfg["expected"]) <= cfg["tolerance"])
    key = "n" if exp.E.is_interval else "level"
    rows = [[r[key], r["eps"], r["p_hat"], r["ci"][0], r["ci"][1]] for r in est.ladder]
    return est.to_dict(), checks, {"ladder.csv": ([key, "eps", "p_hat", "ci_lo", "ci_hi"], rows)}


def run_polarity(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    th = Thresholds(**cfg["thresholds"])
    drift = build_drift(cfg["drift"], cfg["d"])
    rep = polarity_dichotomy(cfg["H"], cfg["d"], cfg["beta"], cfg["K"], cfg["n_paths"], drift, cfg.get("x"),
                             cfg["eps"], cfg["l0"], cfg["origin"], cfg.get("levels"), cfg["seed"], th,
                             cfg["potential_evidence"], threads)
    checks = {"separated": rep["separated"]}
    if cfg["potential_evidence"]:
        checks["capacity_stable"] = rep["potential"]["capacity_stable"]
        checks["hausdorff_decays"] = rep["potential"]["hausdorff_decays"]
    rows = [[name, r["level"], r["p_hat"], r["ci"][0], r["ci"][1]] for name in ("E1", "E2") for r in rep[name]["ladder"]]
    return rep, checks, {"ladders.csv": (["set", "level", "p_hat", "ci_lo", "ci_hi"], rows)}


def run_sharpness(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    th = Thresholds(**cfg["thresholds"])
    rep = sharpness_experiment(cfg["H"], cfg["d"], cfg["gamma"], _slow(cfg["slow"]), cfg["K"], cfg["n_paths"],
                               cfg["drift_seeds"], cfg.get("l0"), cfg["origin"], cfg["eps"], seed=cfg["seed"],
                               thresholds=th, control=cfg["control"], threads=threads)
    checks = dict(rep["main"]["checks"])
    if cfg["control"]:
        checks["control_not_separated"] = not rep["control_separated"]
    rows = []
    for run in ("main", "control") if cfg["control"] else ("main",):
        m = rep[run]
        for i, k in enumerate(m["levels"]):
            rows.append([run, k, m["hausdorff"]["values"][i], m["capacity"]["values"][i]]
                        + [h["ladder"][i]["p_hat"] for h in m["hitting"]])
    header = ["run", "level", "hausdorff", "capacity"] + [f"p_hat_seed{s}" for s in cfg["drift_seeds"]]
    return rep, checks, {"ladders.csv": (header, rows)}


def run_kernel(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    rep = kernel_expectation_check(cfg["alpha"], _slow(cfg["slow"]), cfg["d"], cfg["t_ladder"], cfg["n_paths"],
                                   cfg["seed"], cfg["band"])
    rows = [[r["t"], r["mc"], r["se"], r["quadrature"], r["phi"], r["ratio"]] for r in rep["rows"]]
    return rep, {"agree_3sigma": rep["agree_3sigma"], "bounded": rep["bounded"]}, \
        {"kernel.csv": (["t", "mc", "se", "quadrature", "phi", "ratio"], rows)}


def run_image(cfg: dict, threads: int, out: Path) -> tuple[dict, dict, dict]:
    spec = ProcessSpec.from_dict(cfg["process"])
    ts = cfg["time_set"]
    if ts["kind"] != "interval":
        raise ConfigError("field 'time_set.kind': image-measure uses interval time sets")
    try:
        rep = image_measure_estimate(spec, TimeSet(ts.get("a", 0.25), ts.get("b", 1.0)), cfg["n"], cfg["widths"],
                                     cfg["n_paths"], cfg["seed"], build_drift(cfg["drift"], spec.d), cfg["budget"],
                                     Thresholds(**cfg["thresholds"]))
    except ValueError as e:
        raise ConfigError(f"field 'budget': {e}") from e
    checks = {}
    if cfg["expect"] != "none":
        checks[cfg["expect"]] = rep[cfg["expect"]]
    rows = [[w, v] for w, v in zip(rep["widths"], rep["mean_volume"])]
    return rep, checks, {"volume.csv": (["width", "mean_volume"], rows)}


PIPELINES = {
    "simulate": run_simulate,
    "dimension": run_dimension,
    "capacity": run_capacity,
    "construct-set": run_construct,
    "hitting": run_hitting,
    "polarity": run_polarity,
    "sharpness": run_sharpness,
    "kernel-check": run_kernel,
    "image-measure": run_image,
}


def plan(cfg: dict) -> dict:
    return {"experiment": cfg["experiment"], "seed": cfg["seed"], "planned_samples": _planned_samples(cfg),
            "outputs": ["report.json", "*.csv"]}


def execute(cfg: dict, threads: int = 1, out: str | Path = ".") -> tuple[dict, int]:
    """Run a resolved config; returns the report and the exit code."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result, checks, tables = PIPELINES[cfg["experiment"]](cfg, threads, out)
    passed = all(checks.values())
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg["experiment"],
        "code_version": __version__,
        "seed": cfg["seed"],
        "threads": threads,
        "config": cfg,
        "result": result,
        "checks": checks,
        "passed": passed,
    }
    (out / "report.json").write_text(dumps(report))
    for name, (header, rows) in tables.items():
        _write_csv(out / name, header, rows)
    return report, 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hitlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config path")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads (1 keeps runs byte-reproducible)")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("field 'seed': must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("field 'threads': must be at least 1")
        cfg = load_config(args.config, args.command, args.seed)
        if args.command == "validate":
            print(f"ok: {cfg['experiment']} config is valid")
            return 0
        if args.dry_run:
            print(dumps(plan(cfg)), end="")
            return 0
        report, code = execute(cfg, args.threads, args.out)
    except ConfigError as e:
        print(f"hitlab: config error: {e}", file=sys.stderr)
        return 2
    status = "passed" if code == 0 else "failed: " + ", ".join(k for k, v in report["checks"].items() if not v)
    print(f"{report['experiment']}: {status}; report written to {Path(args.out) / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
