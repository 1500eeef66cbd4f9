"""Command-line front end.

    luq <command> --config <path> [--seed N] [--workers K] [--out DIR]

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 an inequality check or verdict failed (gated by run.gate_checks).
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .bounds import information_bounds
from .config import (COMMANDS, ConfigError, build_density, build_grid, build_model, build_observable,
                     build_phi, load, presets_text, record_times, resolve, slowfast_params)
from .divergence import divergence
from .errors import LuqError, SimulationError
from .ftdr import ftdr_bound_check, ftdr_field, pathspace_marginal_bound
from .grid import gaussian_density
from .kolmogorov import fpe_solve
from .reconstruction import divergence_bound_reconstruction, theta_field
from .sde import RngSpec, default_workers
from .slowfast import compare_reductions, default_grids, reduced_moments

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        if np.isfinite(f):
            return f
        return "nan" if np.isnan(f) else ("inf" if f > 0 else "-inf")
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


class Gate(Exception):
    """Raised after outputs are written when a gated check fails."""


def _grid_meta(grid):
    return {"lo": list(grid.lo), "hi": list(grid.hi), "n": list(grid.n)}


def _init_density(cfg, grid):
    name = "init" if "init" in cfg.get("densities", {}) else "mu"
    return build_density(cfg, name, grid)


def cmd_divergence(cfg, out, workers):
    grid = build_grid(cfg)
    phi = build_phi(cfg)
    mu, nu = build_density(cfg, "mu", grid), build_density(cfg, "nu", grid)
    D = divergence(phi, mu, nu)
    write_json(os.path.join(out, "divergence.json"),
               {"phi": phi.label, "divergence": D, "finite": bool(np.isfinite(D)),
                "resolution": {"grid": _grid_meta(grid)}})
    if not np.isfinite(D):
        raise SimulationError("divergence is infinite (absolute continuity fails at grid resolution)")


def cmd_bound(cfg, out, workers):
    grid = build_grid(cfg)
    phi = build_phi(cfg)
    mu, nu = build_density(cfg, "mu", grid), build_density(cfg, "nu", grid)
    rep = information_bounds(phi, mu, nu, build_observable(cfg))
    payload = rep.to_dict()
    payload["resolution"] = {"grid": _grid_meta(grid)}
    payload["sandwich_holds"] = rep.sandwich_ok
    write_json(os.path.join(out, "bound.json"), payload)
    if not rep.available:
        raise SimulationError("phi-bounds unavailable: divergence is infinite")
    if cfg["run"]["gate_checks"] and not rep.sandwich_ok:
        raise Gate("bound sandwich violated")


def _fpe(cfg, model, rho0):
    run = cfg["run"]
    return fpe_solve(model, rho0, run["t0"], run["t1"], run["dt"], record_times(cfg["run"]))


def cmd_fpe(cfg, out, workers):
    grid = build_grid(cfg)
    model = build_model(cfg, "mu")
    sol = _fpe(cfg, model, _init_density(cfg, grid))
    fmts = cfg["output"]["formats"]
    if "csv" in fmts:
        sol.to_csv(os.path.join(out, "snapshots"))
    write_json(os.path.join(out, "fpe.json"),
               {"model": sol.model_tag, "times": sol.times, "diagnostics": sol.diagnostics,
                "means": [d.mean() for d in sol.densities], "variances": [d.var() for d in sol.densities],
                "resolution": {"grid": _grid_meta(grid), "dt": sol.diagnostics["dt"]}})


def _pair(cfg):
    grid = build_grid(cfg)
    rho0 = _init_density(cfg, grid)
    mm, mn = build_model(cfg, "mu"), build_model(cfg, "nu")
    return grid, mm, mn, _fpe(cfg, mm, rho0), _fpe(cfg, mn, rho0)


def cmd_reconstruct_bound(cfg, out, workers):
    phi = build_phi(cfg)
    grid, mm, mn, sm, sn = _pair(cfg)
    th = theta_field(mm, mn, sm)
    res = divergence_bound_reconstruction(phi, sm, sn, th, mn)
    if "csv" in cfg["output"]["formats"]:
        th.to_csv(os.path.join(out, "theta.csv"))
    payload = res.to_dict()
    payload["resolution"] = {"grid": _grid_meta(grid), "dt_mu": sm.diagnostics["dt"], "dt_nu": sn.diagnostics["dt"],
                             "snapshots": len(sm.snapshots)}
    payload["holds"] = bool(res.margin >= -cfg["run"]["tol"])
    write_json(os.path.join(out, "reconstruct_bound.json"), payload)
    if not np.isfinite(res.lhs):
        raise SimulationError("divergence is infinite")
    if cfg["run"]["gate_checks"] and not payload["holds"]:
        raise Gate(f"reconstruction bound violated: margin {res.margin:.3g}")


def cmd_ftdr_field(cfg, out, workers):
    run = cfg["run"]
    phi = build_phi(cfg)
    model = build_model(cfg, "mu")
    seeds = run.get("seeds", [0.0])
    dt = run["dt"] or 1e-3
    f = ftdr_field(model, phi, seeds, run["eps_ball"], run["t0"], run["t1"], run["N"], RngSpec(run["seed"]),
                   dt=dt, n_boot=run["n_boot"], workers=workers)
    if "csv" in cfg["output"]["formats"]:
        f.to_csv(os.path.join(out, "ftdr_field.csv"))
    write_json(os.path.join(out, "ftdr_field.json"),
               {"seeds": f.seeds, "values": f.values, "stderr": f.stderr, "phi": f.phi, "eps_ball": f.eps_ball,
                "t0": f.t0, "t": f.t, "resolution": {"N": f.n, "dt": dt, **f.metadata}, "seed": run["seed"]})


def cmd_pathspace_bound(cfg, out, workers):
    phi = build_phi(cfg)
    grid, mm, mn, sm, sn = _pair(cfg)
    times = sm.times
    mus, nus = sm.densities[1:], sn.densities[1:]
    pb = pathspace_marginal_bound(phi, mus, nus, sm.densities[0], times)
    tol = cfg["run"]["tol"]
    checks = [dict(ftdr_bound_check(phi, m, n, sm.densities[0], tol).to_dict(), t=float(t))
              for t, m, n in zip(times[1:], mus, nus)]
    payload = {"phi": phi.label, "bound": pb.to_dict(), "ftdr_checks": checks,
               "resolution": {"grid": _grid_meta(grid), "dt_mu": sm.diagnostics["dt"], "dt_nu": sn.diagnostics["dt"]}}
    write_json(os.path.join(out, "pathspace_bound.json"), payload)
    if cfg["run"]["gate_checks"] and any(c["status"] == "violated" for c in checks):
        raise Gate("FTDR difference bound violated at " +
                   ", ".join(f"t={c['t']:g}" for c in checks if c["status"] == "violated"))


def cmd_case_study(cfg, out, workers):
    run = cfg["run"]
    ms = cfg.get("models", {})
    m = next((v for v in ms.values() if v["preset"] == "slowfast"), {"preset": "slowfast"})
    p = slowfast_params(m)
    t_final = run["t1"]
    rep = compare_reductions(p, t_final=t_final, N=run["N"], rng=RngSpec(run["seed"]), n_snap=run["snapshots"],
                             n_boot=run["n_boot"], dt=run["dt"], with_bounds=run["with_bounds"], workers=workers)
    write_json(os.path.join(out, "case_study.json"), rep.to_dict())
    if "csv" in cfg["output"]["formats"]:
        xg, _ = default_grids(p)
        for which in ("I", "F"):
            mean, var = reduced_moments(p, which, t_final)
            gaussian_density(xg, mean, var, t_final).to_csv(os.path.join(out, f"reduced_{which}.csv"))
    if run["gate_checks"] and not rep.ordering_holds:
        raise Gate("fluctuation model scored worse than the averaged model")


PIPELINES = {
    "divergence": cmd_divergence, "bound": cmd_bound, "fpe": cmd_fpe,
    "reconstruct-bound": cmd_reconstruct_bound, "ftdr-field": cmd_ftdr_field,
    "pathspace-bound": cmd_pathspace_bound, "case-study": cmd_case_study,
}


def run(config_path, command=None, seed=None, workers=None, out=None, stderr=None):
    """Run one pipeline; returns the exit code."""
    err = stderr or sys.stderr
    try:
        cfg = resolve(load(config_path), command, seed, out)
    except ConfigError as e:
        print(f"luq: {e}", file=err)
        return EXIT_CONFIG
    workers = workers or default_workers()
    outdir = cfg["output"]["directory"]
    try:
        # build everything that depends only on the config before touching disk
        _dry_build(cfg)
    except (ConfigError, ValueError) as e:
        print(f"luq: invalid configuration: {e}", file=err)
        return EXIT_CONFIG
    os.makedirs(outdir, exist_ok=True)
    write_json(os.path.join(outdir, "config_resolved.json"), cfg)
    write_json(os.path.join(outdir, "run_info.json"),
               {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(), "version": __version__,
                "command": cfg["command"], "workers": workers})
    try:
        PIPELINES[cfg["command"]](cfg, outdir, workers)
    except Gate as e:
        print(f"luq: check failed: {e}", file=err)
        return EXIT_CHECK
    except (LuqError, FloatingPointError, ArithmeticError) as e:
        print(f"luq: numerical failure: {e}", file=err)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"luq: invalid input: {e}", file=err)
        return EXIT_CONFIG
    return EXIT_OK


def _dry_build(cfg):
    c = cfg["command"]
    build_phi(cfg)
    if c in ("divergence", "bound"):
        g = build_grid(cfg)
        build_density(cfg, "mu", g)
        build_density(cfg, "nu", g)
        if c == "bound":
            build_observable(cfg)
    elif c in ("fpe", "reconstruct-bound", "pathspace-bound"):
        g = build_grid(cfg)
        _init_density(cfg, g)
        build_model(cfg, "mu")
        if c != "fpe":
            build_model(cfg, "nu")
        rt = record_times(cfg["run"])
        if min(rt) < cfg["run"]["t0"] or max(rt) > cfg["run"]["t1"]:
            raise ConfigError("record_times must lie in [t0, t1]")
    elif c == "ftdr-field":
        build_model(cfg, "mu")
    elif c == "case-study":
        for v in cfg.get("models", {}).values():
            if v["preset"] == "slowfast":
                slowfast_params(v)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="luq", description="Divergence-based error bounds for reduced SDE models.")
    ap.add_argument("command", choices=COMMANDS + ["run", "list-presets"])
    ap.add_argument("--config", help="YAML experiment file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    a = ap.parse_args(argv)
    if a.command == "list-presets":
        print(presets_text())
        return EXIT_OK
    if not a.config:
        print("luq: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    cmd = None if a.command == "run" else a.command
    return run(a.config, cmd, a.seed, a.workers, a.out)


if __name__ == "__main__":
    sys.exit(main())
