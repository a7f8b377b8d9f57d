"""Batch front-end: subcommands for every study, CSV/JSON artifacts out.

Exit codes: 0 success, 2 numerical non-convergence, 64 bad configuration,
66 missing input artifact.  A JSON config file supplies defaults; command
line flags override it.  Identical configurations produce byte-identical
CSV output regardless of --threads (heavy kernels are single-threaded
vectorized numpy, and dense eigensolves run under a BLAS thread limit).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import critparam, fixedpoint, model, rgflow, spectral
from .density import GridDensity, GridSpec, ModelParams
from .errors import DysonRGError

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_BAD_CONFIG = 64
EXIT_MISSING_INPUT = 66


class ConfigError(Exception):
    pass


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
            f.write("\n")


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _params(cfg) -> ModelParams:
    try:
        return ModelParams(float(cfg["a"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grid(cfg) -> GridSpec:
    try:
        return GridSpec(L=float(cfg["grid_l"]), N=int(cfg["grid_n"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _outdir(cfg) -> str:
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out!r} is not writable")
    return out


def _load_fixed_point(cfg, params, grid):
    """Non-Gaussian fixed point: from an artifact if given, else solved."""
    path = cfg.get("fixed_point")
    if path:
        if not os.path.exists(path):
            print(f"missing fixed-point artifact: {path}", file=sys.stderr)
            raise SystemExit(EXIT_MISSING_INPUT)
        return GridDensity.from_json(path), None
    result = fixedpoint.find_non_gaussian_fixed_point(params, grid, int(cfg["m_basis"]))
    if not result.converged:
        print("fixed-point solve did not converge: " + "; ".join(result.diagnostics),
              file=sys.stderr)
        raise SystemExit(EXIT_NUMERICAL)
    return result.density, result


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fixed_point(cfg) -> int:
    params = _params(cfg)
    grid = _grid(cfg)
    out = _outdir(cfg)
    if cfg["non_gaussian"]:
        result = fixedpoint.find_non_gaussian_fixed_point(params, grid, int(cfg["m_basis"]))
        density = result.density
        payload = {
            "a": params.a,
            "kind": "non-gaussian",
            "residual_l1": result.residual_l1,
            "seed_constant": result.seed_constant,
            "converged": result.converged,
            "trace": [list(t) for t in result.newton_trace],
            "density_file": "fixed_point.json",
            "variance": density.variance(),
        }
    else:
        density = fixedpoint.gaussian_fixed_point(params, grid)
        resid = rgflow.rg_step(density, params).l1_distance(density)
        result = None
        payload = {
            "a": params.a,
            "kind": "gaussian",
            "residual_l1": resid,
            "variance": density.variance(),
            "sigma": params.sigma,
            "density_file": "fixed_point.json",
        }
    density.to_csv(os.path.join(out, "fixed_point.csv"))
    density.to_json(os.path.join(out, "fixed_point.json"))
    _write_json(os.path.join(out, "fixed_point_result.json"), payload)
    if result is not None and not result.converged:
        print("; ".join(result.diagnostics), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_spectrum(cfg) -> int:
    params = _params(cfg)
    grid = _grid(cfg)
    out = _outdir(cfg)
    k = int(cfg["k"])
    if cfg["at"] == "non-gaussian":
        base, _ = _load_fixed_point(cfg, params, grid)
    else:
        base = fixedpoint.gaussian_fixed_point(params, grid)
    op = spectral.build_linearization(base, params)
    spec = spectral.eigen_spectrum(op, k)
    _write_csv(
        os.path.join(out, "eigenvalues.csv"),
        ["j", "eigenvalue", "residual"],
        [(j, float(spec.eigenvalues[j]), float(spec.residuals[j])) for j in range(k)],
    )
    _write_json(os.path.join(out, "spectrum.json"), {
        "a": params.a,
        "at": cfg["at"],
        "eigenvalues": [float(x) for x in spec.eigenvalues],
        "residuals": [float(x) for x in spec.residuals],
        "normalizer": op.normalizer,
    })
    s = base.nodes()
    for j in range(k):
        _write_csv(
            os.path.join(out, f"eigenfunction_{j}.csv"),
            ["s", "e"],
            zip((float(x) for x in s), (float(x) for x in spec.eigenfunctions[j])),
        )
    return EXIT_OK


def cmd_flow(cfg) -> int:
    params = _params(cfg)
    grid = _grid(cfg)
    out = _outdir(cfg)
    if cfg.get("t") is not None:
        fam = critparam.default_gaussian_family(params, grid)
        p0 = critparam.family_density(fam, float(cfg["t"]))
    else:
        tau = float(cfg["tau"]) if cfg.get("tau") is not None else params.sigma
        try:
            p0 = rgflow.scale_density(
                fixedpoint.gaussian_fixed_point(params, grid),
                math.sqrt(tau / params.sigma),
            )
        except DysonRGError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_NUMERICAL
    trace = rgflow.flow(p0, params, int(cfg["m_max"]))
    trace.to_csv(os.path.join(out, "flow.csv"))
    _write_json(os.path.join(out, "flow.json"), {
        "a": params.a,
        "classification": trace.classification.value,
        "steps": len(trace.iterates) - 1,
        "final_variance": trace.final_density.variance(),
    })
    return EXIT_OK


def _family_for(cfg, params, grid):
    if cfg["base"] == "non-gaussian":
        base, _ = _load_fixed_point(cfg, params, grid)
        return critparam.non_gaussian_family(params, base)
    return critparam.default_gaussian_family(params, grid)


def cmd_critical(cfg) -> int:
    params = _params(cfg)
    grid = _grid(cfg)
    out = _outdir(cfg)
    fam = _family_for(cfg, params, grid)
    res = critparam.critical_search(fam, int(cfg["m_max"]), float(cfg["tol_t"]))
    _write_csv(
        os.path.join(out, "brackets.csv"),
        ["m", "t1", "t2"],
        [(i, lo, hi) for i, (lo, hi) in enumerate(res.brackets)],
    )
    _write_json(os.path.join(out, "critical.json"), {
        "a": params.a,
        "base": cfg["base"],
        "t_c": res.t_c,
        "brackets": [[lo, hi] for lo, hi in res.brackets],
        "m_used": res.m_used,
        "terminal_l1": res.terminal_l1,
        "collapsed_side": res.collapsed_side,
    })
    return EXIT_OK


def cmd_observables(cfg) -> int:
    params = _params(cfg)
    grid = _grid(cfg)
    out = _outdir(cfg)
    side = cfg["side"]
    if side not in ("high", "low"):
        raise ConfigError("side must be 'high' (disordered) or 'low' (ordered)")

    lambda1 = None
    if cfg["base"] == "non-gaussian":
        base, _ = _load_fixed_point(cfg, params, grid)
        fam = critparam.non_gaussian_family(params, base)
        op = spectral.build_linearization(base, params)
        lambda1 = float(spectral.eigen_spectrum(op, 2).eigenvalues[1])
    elif side == "low":
        fam = critparam.ordered_probe_family(params, grid)
    else:
        fam = critparam.default_gaussian_family(params, grid)

    search = critparam.critical_search(fam, int(cfg["m_max"]), float(cfg["tol_t"]))
    t1, t2 = fam.t_range
    span = t2 - t1
    offsets = np.geomspace(span / 2.0 ** 10, span / 2.0 ** 4, int(cfg["n_points"]))

    summary = {
        "a": params.a,
        "base": cfg["base"],
        "side": side,
        "t_c": search.t_c,
        "brackets": [[lo, hi] for lo, hi in search.brackets],
        "lambda1_used": lambda1,
        "gamma_fit": None,
        "beta_fit": None,
    }
    if side == "high":
        ts = [search.disordered_t(o) for o in offsets]
        pts = critparam.susceptibility_curve(fam, search.t_c, ts, int(cfg["n_iter"]))
        _write_csv(os.path.join(out, "susceptibility.csv"),
                   ["t", "tau"],
                   [(p.t, p.tau) for p in pts])
        usable = [(abs(p.t - search.t_c), p.tau) for p in pts if p.stabilized]
        if len(usable) >= 4:
            slope, err = critparam.fit_exponent(usable)
            summary["gamma_fit"] = -slope
            summary["gamma_fit_stderr"] = err
    else:
        ts = [search.ordered_t(o) for o in offsets]
        pts = critparam.magnetization_curve(fam, search.t_c, ts, int(cfg["n_iter"]))
        _write_csv(os.path.join(out, "magnetization.csv"),
                   ["t", "M", "tau"],
                   [(p.t, p.M, p.tau) for p in pts])
        usable = [(abs(p.t - search.t_c), p.M) for p in pts if p.resolved]
        if len(usable) >= 4:
            slope, err = critparam.fit_exponent(usable)
            summary["beta_fit"] = slope
            summary["beta_fit_stderr"] = err
    _write_json(os.path.join(out, "observables.json"), summary)
    return EXIT_OK


def cmd_oracle(cfg) -> int:
    params = _params(cfg)   # validates a
    out = _outdir(cfg)
    n = int(cfg["n"])
    beta = float(cfg["beta"])
    if n < 1 or n > 4:
        raise ConfigError("oracle supports 1 <= n <= 4")
    nu = model.AtomicMeasure.two_point(1.0)
    exact = model.enumerate_total_spin(n, nu, beta, params.a)
    recursed = nu
    for _ in range(n):
        recursed = model.rg_step_atomic(recursed, beta, params.a)
    dist = exact.total_variation_distance(recursed)
    _write_json(os.path.join(out, "oracle.json"), {
        "a": params.a, "n": n, "beta": beta,
        "tv_distance": dist,
        "atoms_exact": exact.n_atoms,
        "atoms_recursed": recursed.n_atoms,
    })
    print(f"enumeration vs {n}-fold recursion: TV distance {dist:.3e}")
    return EXIT_OK if dist < 1e-10 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

DEFAULTS = {
    "fixed-point": {
        "a": 1.5, "non_gaussian": False, "m_basis": 12,
        "grid_l": 10.0, "grid_n": 2048, "output_dir": ".", "threads": 1,
    },
    "spectrum": {
        "a": 1.25, "k": 5, "at": "gaussian", "fixed_point": None, "m_basis": 12,
        "grid_l": 10.0, "grid_n": 2048, "output_dir": ".", "threads": 1,
    },
    "flow": {
        "a": 1.25, "tau": None, "t": None, "m_max": 50,
        "grid_l": 10.0, "grid_n": 2048, "output_dir": ".", "threads": 1,
    },
    "critical": {
        "a": 1.25, "base": "gaussian", "fixed_point": None, "m_basis": 12,
        "tol_t": 1e-13, "m_max": 250,
        "grid_l": 10.0, "grid_n": 2048, "output_dir": ".", "threads": 1,
    },
    "observables": {
        "a": 1.25, "base": "gaussian", "fixed_point": None, "m_basis": 12,
        "side": "high", "n_points": 7, "n_iter": 200, "tol_t": 1e-9, "m_max": 250,
        "grid_l": 10.0, "grid_n": 2048, "output_dir": ".", "threads": 1,
    },
    "oracle": {
        "a": 1.5, "n": 3, "beta": 0.7, "output_dir": ".", "threads": 1,
    },
}

COMMANDS = {
    "fixed-point": cmd_fixed_point,
    "spectrum": cmd_spectrum,
    "flow": cmd_flow,
    "critical": cmd_critical,
    "observables": cmd_observables,
    "oracle": cmd_oracle,
}


def _add_flags(sub, defaults):
    for key, val in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(val, bool):
            sub.add_argument(flag, action="store_true", default=None)
        elif key in ("grid_n", "k", "m_max", "m_basis", "n", "n_points", "n_iter", "threads"):
            sub.add_argument(flag, type=int, default=None)
        elif key in ("output_dir", "at", "base", "side", "fixed_point"):
            sub.add_argument(flag, type=str, default=None)
        else:
            sub.add_argument(flag, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dysonrg",
        description="RG studies of the Dyson hierarchical model",
    )
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file with per-command defaults")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        sub = subparsers.add_parser(name)
        _add_flags(sub, defaults)
    return parser


def _merge_config(args) -> dict:
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        if not os.path.exists(args.config):
            print(f"missing config file: {args.config}", file=sys.stderr)
            raise SystemExit(EXIT_MISSING_INPUT)
        with open(args.config) as f:
            try:
                file_cfg = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed config file: {exc}") from None
        section = file_cfg.get(args.command, file_cfg)
        unknown = set(section) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg.update(section)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if int(cfg.get("threads", 1)) < 1:
        raise ConfigError("threads must be a positive integer")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        if args.print_config:
            print(json.dumps({args.command: cfg}, indent=2, sort_keys=True))
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except SystemExit as exc:
        return int(exc.code)
    except DysonRGError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
