"""Experiment configuration: schema, defaults and object builders."""
from __future__ import annotations

import copy

import jsonschema
import numpy as np
import yaml

from . import sde
from .divergence import CATALOG_DOC, catalog
from .grid import Grid, gaussian_density, read_density_csv
from .slowfast import SlowFastParams, averaged_model, fluctuation_model, full_model

COMMANDS = ["divergence", "bound", "fpe", "reconstruct-bound", "ftdr-field", "pathspace-bound", "case-study"]

_num = {"type": "number"}
_numlist = {"type": "array", "items": _num, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["preset"],
    "properties": {
        "preset": {"enum": ["ou", "double-well", "custom-polynomial", "slowfast"]},
        "beta": _num, "sigma": _num, "mean": _num, "a": _num, "b": _num,
        "drift": _numlist, "diffusion": _numlist,
        "calculus": {"enum": ["ito", "stratonovich"]},
        "gamma": _num, "sigma_x": _num, "sigma_y": _num,
        "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "reduction": {"enum": ["full", "averaged", "fluctuation"]},
    },
    "additionalProperties": False,
}

DENSITY_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "csv"]},
        "mean": _num, "var": {"type": "number", "exclusiveMinimum": 0},
        "path": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["command"],
    "properties": {
        "command": {"enum": COMMANDS},
        "phi": {
            "type": "object", "required": ["name"],
            "properties": {"name": {"enum": ["kl", "hellinger", "tv", "chi2", "alpha", "chi_alpha"]},
                           "params": {"type": "object", "properties": {"alpha": _num},
                                      "additionalProperties": False}},
            "additionalProperties": False,
        },
        "grid": {
            "type": "object", "required": ["lo", "hi", "n"],
            "properties": {"lo": _numlist, "hi": _numlist,
                           "n": {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 1}},
            "additionalProperties": False,
        },
        "models": {"type": "object", "additionalProperties": MODEL_SCHEMA},
        "densities": {"type": "object", "additionalProperties": DENSITY_SCHEMA},
        "observable": {
            "type": "object",
            "properties": {"polynomial": _numlist,
                           "function": {"enum": ["x", "tanh", "sin", "cos", "abs", "indicator"]},
                           "scale": _num},
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "t0": _num, "t1": _num, "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "snapshots": {"type": "integer", "minimum": 2},
                "record_times": _numlist,
                "N": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "eps_ball": {"type": "number", "exclusiveMinimum": 0},
                "seeds": _numlist,
                "n_boot": {"type": "integer", "minimum": 2},
                "tol": {"type": "number", "minimum": 0},
                "gate_checks": {"type": "boolean"},
                "with_bounds": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"directory": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["json", "csv"]}}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

RUN_DEFAULTS = {"t0": 0.0, "t1": 1.0, "dt": None, "snapshots": 21, "N": 10000, "seed": 0,
                "eps_ball": 0.1, "n_boot": 20, "tol": 1e-3, "gate_checks": True, "with_bounds": True}


class ConfigError(ValueError):
    pass


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def validate(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}") from e


def resolve(cfg, command=None, seed=None, out=None):
    """Validated copy with defaults filled in and CLI overrides applied."""
    cfg = copy.deepcopy(cfg)
    if command is not None:
        cfg["command"] = command
    validate(cfg)
    run = {**RUN_DEFAULTS, **cfg.get("run", {})}
    if seed is not None:
        run["seed"] = int(seed)
    cfg["run"] = run
    cfg.setdefault("phi", {"name": "kl"})
    cfg["phi"].setdefault("params", {})
    outp = cfg.setdefault("output", {})
    outp.setdefault("directory", f"luq_out/{cfg['command']}")
    outp.setdefault("formats", ["json", "csv"])
    if out is not None:
        outp["directory"] = out
    validate(cfg)
    return cfg


def build_phi(cfg):
    return catalog(cfg["phi"]["name"], cfg["phi"].get("params") or None)


def build_grid(cfg):
    if "grid" not in cfg:
        raise ConfigError("this command needs a grid block")
    g = cfg["grid"]
    if not (len(g["lo"]) == len(g["hi"]) == len(g["n"])):
        raise ConfigError("grid lo/hi/n lengths differ")
    return Grid(tuple(g["lo"]), tuple(g["hi"]), tuple(g["n"]))


def build_density(cfg, name, grid):
    ds = cfg.get("densities", {})
    if name not in ds:
        raise ConfigError(f"densities.{name} is required")
    d = ds[name]
    if d["kind"] == "gaussian":
        if "var" not in d:
            raise ConfigError(f"densities.{name}: gaussian needs var")
        return gaussian_density(grid, d.get("mean", 0.0), d["var"])
    if "path" not in d:
        raise ConfigError(f"densities.{name}: csv needs path")
    rho = read_density_csv(d["path"])
    if rho.grid != grid:
        raise ConfigError(f"densities.{name}: CSV grid differs from the configured grid")
    return rho


def slowfast_params(m):
    return SlowFastParams(m.get("beta", 1.0), m.get("gamma", 1.0), m.get("sigma_x", 1.0),
                          m.get("sigma_y", 1.0), m.get("eps", 0.05))


def build_model(cfg, name):
    ms = cfg.get("models", {})
    if name not in ms:
        raise ConfigError(f"models.{name} is required")
    m = ms[name]
    kind = m["preset"]
    if kind == "ou":
        return sde.ou(m.get("beta", 1.0), m.get("sigma", float(np.sqrt(2.0))), m.get("mean", 0.0))
    if kind == "double-well":
        return sde.double_well(m.get("a", 1.0), m.get("b", 1.0), m.get("sigma", 1.0))
    if kind == "custom-polynomial":
        if "drift" not in m or "diffusion" not in m:
            raise ConfigError(f"models.{name}: custom-polynomial needs drift and diffusion coefficient lists")
        return sde.polynomial(m["drift"], m["diffusion"], m.get("calculus", "ito"))
    p = slowfast_params(m)
    return {"full": full_model, "averaged": averaged_model,
            "fluctuation": fluctuation_model}[m.get("reduction", "full")](p)


def build_observable(cfg):
    ob = cfg.get("observable", {"function": "x"})
    s = ob.get("scale", 1.0)
    if "polynomial" in ob:
        c = np.asarray(ob["polynomial"], dtype=float)
        return lambda x, *rest: s * np.polynomial.polynomial.polyval(x, c)
    f = {"x": lambda x: x, "tanh": np.tanh, "sin": np.sin, "cos": np.cos, "abs": np.abs,
         "indicator": lambda x: (x > 0).astype(float)}[ob.get("function", "x")]
    return lambda x, *rest: s * f(x)


def record_times(run):
    if "record_times" in run:
        return [float(t) for t in run["record_times"]]
    return np.linspace(run["t0"], run["t1"], run["snapshots"]).tolist()


def presets_text():
    lines = ["phi-divergences:"]
    for k, v in CATALOG_DOC.items():
        lines.append(f"  {k:18s} {v}")
    lines += [
        "models:",
        "  ou                 beta, sigma, mean        dX = -beta (X - mean) dt + sigma dW",
        "  double-well        a, b, sigma              dX = (a X - b X^3) dt + sigma dW",
        "  custom-polynomial  drift[], diffusion[], calculus   polynomial coefficient lists (lowest order first)",
        "  slowfast           beta, gamma, sigma_x, sigma_y, eps, reduction (full | averaged | fluctuation)",
        "commands:",
        "  " + ", ".join(COMMANDS),
    ]
    return "\n".join(lines)
