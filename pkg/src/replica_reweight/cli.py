"""Command-line front end.

Every subcommand reads an optional flat TOML file (``--config``) and flags;
precedence is flags > file > built-in defaults.  Results carry a metadata
header: CSV files start with ``# generated: <timestamp>`` and ``# meta:
<json>`` comment lines, JSON documents have ``generated`` and ``meta`` keys.
The timestamp is the only run-dependent line.

Exit codes: 0 success, 2 config/schema error, 3 I/O error.  Scientific
non-convergence is reported in the output rows, never through the exit code.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .eos import OrderParams, ProblemParams, solve_eos
from .erm import (
    ERM_COLUMNS, FITTED_BIAS_COLUMNS, RNG_ID, OptimizerOptions, experiment_metadata, make_rng,
    result_table, run_experiment, run_fitted_bias_experiment,
)
from .losses import LossSpec, UnsupportedLossOperation
from .multiclass import ToyParams, generate_toy, leading_direction, sigma_mse, uniform_weights, verify_uniform_optimal, weighted_scatter
from .quadrature import build_quadrature
from .sensitivity import SensitivityError, check_extremum_identity, compute_sensitivity, finite_difference_dm_ds
from .sweeps import CSV_COLUMNS, EXTRA_COLUMNS, default_s_grid, format_value, sweep_b, sweep_s

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("replica_reweight")

ENV_WORKERS = "REPLICA_REWEIGHT_WORKERS"
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class ConfigError(Exception):
    pass


class OutputError(Exception):
    pass


# ---------------------------------------------------------------- converters

def _bool(x):
    if isinstance(x, bool):
        return x
    if isinstance(x, (int, float)) and x in (0, 1):
        return bool(x)
    s = str(x).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {x!r}")


def _float_or_none(x):
    if x is None or (isinstance(x, str) and x.strip().lower() in ("", "none", "null")):
        return None
    return float(x)


def parse_grid(x):
    """A list of floats from a TOML array, ``"a,b,c"`` or ``"linspace:lo:hi:n"``."""
    if x is None:
        return None
    if isinstance(x, (list, tuple)):
        return [float(v) for v in x]
    s = str(x).strip()
    if s.startswith("linspace:"):
        parts = s.split(":")[1:]
        if len(parts) != 3:
            raise ValueError("linspace grids are written linspace:lo:hi:n")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(v) for v in np.linspace(lo, hi, n)]
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _default_workers():
    raw = os.environ.get(ENV_WORKERS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


PROBLEM_KEYS = {
    "alpha": (float, 20.0),
    "r_plus": (float, 0.5),
    "sigma": (_float_or_none, None),
    "sigma_plus": (float, 0.6),
    "sigma_minus": (float, 0.6),
    "s_plus": (float, 0.5),
    "b": (float, 0.0),
    "loss": (str, "ce_logistic"),
    "gamma": (_float_or_none, None),
}
SOLVER_KEYS = {
    "damping": (float, 0.5),
    "tol": (float, 1e-9),
    "max_iter": (int, 5000),
    "quadrature_order": (int, 100),
    "init_m": (float, 0.5),
    "init_chi": (float, 1.0),
    "accelerate": (_bool, True),
}
COMMON_KEYS = {
    "output": (str, None),
    "format": (str, None),
    "parallelism": (int, None),
    "seed": (int, 0),
}
SWEEP_B_KEYS = {"b_grid": (parse_grid, "linspace:-6:6:121"), "warm_start": (_bool, True)}
SWEEP_S_KEYS = {
    "s_grid": (parse_grid, None),
    "mode": (str, "b0"),
    "b_min": (float, -6.0),
    "b_max": (float, 6.0),
    "coarse_points": (int, 121),
    "b_tol": (float, 1e-4),
    "warm_start": (_bool, True),
}
DERIV_KEYS = {"fd_step": (float, 1e-3)}
ERM_KEYS = {
    "n": (int, 400),
    "reps": (int, 100),
    "b_grid": (parse_grid, "linspace:-2:2:9"),
    "opt_tol": (float, 1e-9),
    "opt_max_iter": (int, 20000),
}
TOY_KEYS = {
    "n": (int, 200),
    "m": (int, 10000),
    "k": (int, 3),
    "sigma": (float, 0.5),
    "weights": (str, "uniform"),
    "trials": (int, 10000),
    "seed": (int, 0),
}
FIGURE_KEYS = {"figure": (str, None), "n": (int, 400), "reps": (int, 100)}

SCHEMAS = {
    "eos-solve": {**PROBLEM_KEYS, **SOLVER_KEYS},
    "sweep-b": {**PROBLEM_KEYS, **SOLVER_KEYS, **SWEEP_B_KEYS},
    "sweep-s": {**PROBLEM_KEYS, **SOLVER_KEYS, **SWEEP_S_KEYS},
    "derivative-check": {**PROBLEM_KEYS, **SOLVER_KEYS, **DERIV_KEYS},
    "erm-sim": {**PROBLEM_KEYS, **ERM_KEYS},
    "multiclass-toy": dict(TOY_KEYS),
    "reproduce-figure": {**SOLVER_KEYS, **FIGURE_KEYS},
}
DEFAULT_FORMAT = {
    "eos-solve": "json", "sweep-b": "csv", "sweep-s": "csv", "derivative-check": "json",
    "erm-sim": "csv", "multiclass-toy": "json", "reproduce-figure": "csv",
}


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """Merge defaults, file and flags for ``command``; validate and convert types."""
    schema = {**COMMON_KEYS, **SCHEMAS[command]}
    file_values = dict(file_values)
    named = file_values.pop("command", command)
    if named != command:
        raise ConfigError(f"config file is for command {named!r}, not {command!r}")
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default) in schema.items():
        if flag_values.get(key) is not None:
            raw = flag_values[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            raw = default
        try:
            cfg[key] = raw if raw is None else conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    if cfg.get("parallelism") is None:
        cfg["parallelism"] = _default_workers()
    if cfg["parallelism"] < 1:
        raise ConfigError("parallelism must be at least 1")
    fmt = cfg.get("format") or DEFAULT_FORMAT[command]
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    cfg["format"] = fmt
    if "sigma" in cfg and cfg["sigma"] is not None and command != "multiclass-toy":
        # shorthand for equal class variances; explicit per-class flags still win
        if flag_values.get("sigma_plus") is None and "sigma_plus" not in file_values:
            cfg["sigma_plus"] = cfg["sigma"]
        if flag_values.get("sigma_minus") is None and "sigma_minus" not in file_values:
            cfg["sigma_minus"] = cfg["sigma"]
    return cfg


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read config file {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    nested = sorted(k for k, v in data.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"config must be flat key-value pairs; tables found: {', '.join(nested)}")
    return data


def problem_from_config(cfg: dict) -> ProblemParams:
    try:
        loss = LossSpec.parse(cfg["loss"], cfg.get("gamma"))
        return ProblemParams(cfg["alpha"], cfg["r_plus"], cfg["sigma_plus"], cfg["sigma_minus"],
                             cfg["s_plus"], cfg["b"], loss)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def solver_kwargs(cfg: dict) -> dict:
    if not 0 < cfg["damping"] <= 1:
        raise ConfigError("damping must lie in (0, 1]")
    try:
        quad = build_quadrature(cfg["quadrature_order"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return {
        "damping": cfg["damping"], "tol": cfg["tol"], "max_iter": cfg["max_iter"],
        "quad": quad, "accelerate": cfg["accelerate"],
    }


# ---------------------------------------------------------------- output

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def metadata(command: str, cfg: dict, extra: dict | None = None) -> dict:
    meta = {"tool": "replica_reweight", "version": __version__, "command": command,
            "config": cfg, "rng": RNG_ID}
    if extra:
        meta.update(extra)
    return _clean(meta)


def _timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def render_csv(meta: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# generated: {_timestamp()}\n")
    buf.write("# meta: " + json.dumps(meta, sort_keys=True) + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(format_value(v) for v in row) + "\n")
    return buf.getvalue()


def render_json(meta: dict, result) -> str:
    doc = {"generated": _timestamp(), "meta": meta, "result": _clean(result)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit(text: str, output: str | None):
    if output in (None, "", "-"):
        sys.stdout.write(text)
        return
    try:
        path = Path(output)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {output}: {exc}") from None


def sweep_table(rows):
    cols = CSV_COLUMNS + EXTRA_COLUMNS
    return cols, [[getattr(r, c) for c in cols] for r in rows]


def _rows_output(command, cfg, rows, extra=None):
    meta = metadata(command, cfg, extra)
    cols, table = sweep_table(rows)
    if cfg["format"] == "csv":
        return render_csv(meta, cols, table)
    return render_json(meta, [dict(zip(cols, t)) for t in table])


# ---------------------------------------------------------------- commands

def cmd_eos_solve(cfg):
    params = problem_from_config(cfg)
    kw = solver_kwargs(cfg)
    if not cfg["init_chi"] > 0:
        raise ConfigError("init_chi must be positive")
    sol = solve_eos(params, init=OrderParams(cfg["init_m"], cfg["init_chi"]), **kw)
    result = {**asdict(sol.order), "energy": sol.energy, "iterations": sol.iterations,
              "residual": sol.residual, "converged": sol.converged, "loss": params.loss.tag}
    meta = metadata("eos-solve", cfg)
    if cfg["format"] == "json":
        return render_json(meta, result)
    cols = list(result)
    return render_csv(meta, cols, [[result[c] for c in cols]])


def cmd_sweep_b(cfg):
    params = problem_from_config(cfg)
    kw = solver_kwargs(cfg)
    grid = cfg["b_grid"]
    if not grid:
        raise ConfigError("b_grid must be nonempty")
    if any(b2 < b1 for b1, b2 in zip(grid, grid[1:])):
        raise ConfigError("b_grid must be sorted")
    rows = sweep_b(params, grid, warm_start=cfg["warm_start"], workers=cfg["parallelism"], **kw)
    return _rows_output("sweep-b", cfg, rows)


def cmd_sweep_s(cfg):
    params = problem_from_config(cfg)
    kw = solver_kwargs(cfg)
    grid = cfg["s_grid"] if cfg["s_grid"] is not None else default_s_grid()
    if any(not 0.0 <= s <= 1.0 for s in grid):
        raise ConfigError("s_grid must lie in [0, 1]")
    if not cfg["b_min"] < cfg["b_max"]:
        raise ConfigError("b_min must be below b_max")
    try:
        rows = sweep_s(params, grid, cfg["mode"], (cfg["b_min"], cfg["b_max"]), cfg["coarse_points"],
                       cfg["b_tol"], warm_start=cfg["warm_start"], workers=cfg["parallelism"], **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return _rows_output("sweep-s", cfg, rows)


def cmd_derivative_check(cfg):
    params = problem_from_config(cfg)
    kw = solver_kwargs(cfg)
    if params.loss.family == "zero_one":
        raise ConfigError("derivatives of the zero-one loss need loss = smoothed_zero_one with a gamma")
    sol = solve_eos(params, init=OrderParams(cfg["init_m"], cfg["init_chi"]), **kw)
    result = {"converged": sol.converged, "m": sol.m, "chi": sol.chi, "dm_ds": None, "dchi_ds": None,
              "identity_lhs": None, "identity_rhs": None, "identity_target": None,
              "fd_dm_ds": None, "fd_dchi_ds": None, "warnings": []}
    if sol.converged:
        try:
            bundle = compute_sensitivity(params, sol, kw["quad"])
            result.update(dm_ds=bundle.dm_ds, dchi_ds=bundle.dchi_ds, condition=bundle.condition,
                          warnings=list(bundle.warnings))
            if params.sigma_plus == params.sigma_minus and params.b == 0 and params.s_plus == 0.5:
                lhs, rhs, target = check_extremum_identity(params, sol, bundle=bundle)
                result.update(identity_lhs=lhs, identity_rhs=rhs, identity_target=target)
        except (SensitivityError, UnsupportedLossOperation) as exc:
            result["warnings"].append(str(exc))
        step = cfg["fd_step"]
        if step < params.s_plus < 1 - step:
            try:
                fd_kw = {k: v for k, v in kw.items() if k != "tol"}
                fd = finite_difference_dm_ds(params, step, tol=min(kw["tol"], 1e-12), init=sol.order, **fd_kw)
                result.update(fd_dm_ds=fd[0], fd_dchi_ds=fd[1])
            except SensitivityError as exc:
                result["warnings"].append(str(exc))
    meta = metadata("derivative-check", cfg)
    if cfg["format"] == "json":
        return render_json(meta, result)
    cols = [c for c in result if c != "warnings"]
    return render_csv(meta, cols, [[result[c] for c in cols]])


def _opt_options(cfg):
    return OptimizerOptions(tol=cfg["opt_tol"], max_iter=cfg["opt_max_iter"])


def cmd_erm_sim(cfg):
    params = problem_from_config(cfg)
    if not params.loss.differentiable:
        raise ConfigError("erm-sim needs a differentiable loss (ce_logistic or smoothed_zero_one)")
    if cfg["reps"] < 2:
        raise ConfigError("reps must be at least 2")
    if not cfg["b_grid"]:
        raise ConfigError("b_grid must be nonempty")
    opts = _opt_options(cfg)
    res = run_experiment(params, cfg["n"], cfg["reps"], cfg["b_grid"], cfg["seed"], opts, cfg["parallelism"])
    extra = {"experiment": experiment_metadata(params, cfg["n"], cfg["reps"], cfg["seed"], opts)}
    meta = metadata("erm-sim", cfg, extra)
    table = result_table(res)
    if cfg["format"] == "csv":
        return render_csv(meta, ERM_COLUMNS, table)
    return render_json(meta, [dict(zip(ERM_COLUMNS, t)) for t in table])


def _toy_weights(spec: str, m: int, seed: int):
    if spec == "uniform":
        return uniform_weights(m)
    if spec.startswith("dirichlet:"):
        a = float(spec.split(":", 1)[1])
        if not a > 0:
            raise ConfigError("dirichlet concentration must be positive")
        w = make_rng(seed + 7919).dirichlet(np.full(m, a))
        return w / w.sum()
    if spec.startswith("file:"):
        path = spec.split(":", 1)[1]
        try:
            w = np.loadtxt(path, dtype=float).ravel()
        except OSError as exc:
            raise OutputError(f"cannot read weights file {path}: {exc}") from None
        if w.size != m:
            raise ConfigError(f"weights file has {w.size} entries, expected M = {m}")
        return w
    raise ConfigError("weights must be uniform, dirichlet:<alpha> or file:<path>")


def cmd_multiclass_toy(cfg):
    n, m, k = cfg["n"], cfg["m"], cfg["k"]
    try:
        w = _toy_weights(cfg["weights"], m, cfg["seed"])
        params = ToyParams(n, m, k, sigma=cfg["sigma"], weights=w, seed=cfg["seed"])
        if m < 2:
            raise ValueError("M must be at least 2")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    smp = generate_toy(params)
    lead = leading_direction(weighted_scatter(smp, params.weights), w0=smp.w0)
    result = {
        "overlap": lead.overlap(smp.w0),
        "eigenvalue": lead.eigenvalue,
        "eigen_residual": lead.residual,
        "power_iterations": lead.iterations,
        "slow_convergence": lead.slow,
        "sum_s2": float(params.weights @ params.weights),
        "sigma_mse": sigma_mse(params.weights, cfg["sigma"]),
        "sigma_mse_uniform": sigma_mse(uniform_weights(m), cfg["sigma"]),
        "uniform_check": verify_uniform_optimal(m, cfg["trials"], cfg["seed"], cfg["sigma"]),
    }
    meta = metadata("multiclass-toy", cfg)
    if cfg["format"] == "json":
        return render_json(meta, result)
    cols = [c for c in result if c != "uniform_check"]
    return render_csv(meta, cols, [[result[c] for c in cols]])


# ---------------------------------------------------------------- figures

THEORY_LOSSES = ("zero_one", "ce_logistic")
EQUAL = (0.6, 0.6)
UNEQUAL = (1.0, 0.5)
MC_B_GRID = [float(b) for b in np.linspace(-2.0, 2.0, 9)]
MC_S_GRID = [float(s) for s in np.linspace(0.1, 0.9, 9)]
B_GRID = [float(b) for b in np.linspace(-6.0, 6.0, 121)]


def _tag(x):
    return format(x, "g")


def figure_jobs(fig: str):
    """Series for one figure: a list of ``(name, kind, payload)`` descriptions."""
    jobs = []

    def theory(name, kind, sig, r, s, loss, **extra):
        params = ProblemParams(20.0, r, sig[0], sig[1], s, 0.0, LossSpec(loss))
        jobs.append((name, kind, {"params": params, **extra}))

    if fig in ("fig2", "fig3"):
        r = 0.5 if fig == "fig2" else 0.2
        for loss in THEORY_LOSSES:
            for s in (0.1, 0.5, 0.9):
                theory(f"{fig}_{loss}_r{_tag(r)}_s{_tag(s)}", "sweep_b", EQUAL, r, s, loss, grid=B_GRID)
    elif fig in ("fig4", "fig5", "fig6", "fig8", "fig9", "fig10"):
        mode = {"fig4": "maximize_m", "fig5": "minimize_u", "fig6": "fixed_b_zero",
                "fig8": "maximize_m", "fig9": "minimize_u", "fig10": "fixed_b_zero"}[fig]
        sig = EQUAL if fig in ("fig4", "fig5", "fig6") else UNEQUAL
        for loss in THEORY_LOSSES:
            for r in (0.5, 0.2):
                theory(f"{fig}_{loss}_r{_tag(r)}", "sweep_s", sig, r, 0.5, loss, mode=mode, grid=default_s_grid())
    elif fig in ("fig11", "fig14"):
        sig = EQUAL if fig == "fig11" else UNEQUAL
        for r in (0.5, 0.2):
            for s in (0.1, 0.5):
                base = f"{fig}_r{_tag(r)}_s{_tag(s)}"
                theory(base + "_theory", "sweep_b", sig, r, s, "ce_logistic", grid=MC_B_GRID)
                theory(base + "_mc", "erm_b", sig, r, s, "ce_logistic", grid=MC_B_GRID)
    elif fig == "fig12":
        for r in (0.5, 0.2):
            theory(f"{fig}_r{_tag(r)}_theory", "sweep_s", EQUAL, r, 0.5, "ce_logistic", mode="minimize_u", grid=MC_S_GRID)
            theory(f"{fig}_r{_tag(r)}_mc", "erm_fitted_bias", EQUAL, r, 0.5, "ce_logistic", grid=MC_S_GRID)
    elif fig == "fig13":
        for r in (0.5, 0.2):
            theory(f"{fig}_r{_tag(r)}_theory", "sweep_s", EQUAL, r, 0.5, "ce_logistic", mode="fixed_b_zero", grid=MC_S_GRID)
            theory(f"{fig}_r{_tag(r)}_mc", "erm_s", EQUAL, r, 0.5, "ce_logistic", grid=MC_S_GRID)
    else:
        raise ConfigError(f"unknown figure {fig!r}; expected one of {', '.join(FIGURES)}")
    return jobs


FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13", "fig14")


def run_series(job, solver_kw, n_dim, reps, seed, opts):
    """Compute one series; returns ``(header, rows, extra_meta)``."""
    name, kind, pay = job
    params = pay["params"]
    if kind == "sweep_b":
        rows = sweep_b(params, pay["grid"], **solver_kw)
        cols, table = sweep_table(rows)
        return cols, table, {}
    if kind == "sweep_s":
        rows = sweep_s(params, pay["grid"], pay["mode"], **solver_kw)
        cols, table = sweep_table(rows)
        return cols, table, {}
    extra = {"experiment": experiment_metadata(params, n_dim, reps, seed, opts)}
    if kind == "erm_b":
        res = run_experiment(params, n_dim, reps, pay["grid"], seed, opts)
        return ERM_COLUMNS, result_table(res), extra
    if kind == "erm_s":
        cols = ("s_plus",) + ERM_COLUMNS
        table = []
        for s in pay["grid"]:
            res = run_experiment(params.replace(s_plus=s), n_dim, reps, [0.0], seed, opts)
            table.append([s] + result_table(res)[0])
        return cols, table, extra
    if kind == "erm_fitted_bias":
        res = run_fitted_bias_experiment(params, n_dim, reps, pay["grid"], seed, opts)
        return FITTED_BIAS_COLUMNS, result_table(res, FITTED_BIAS_COLUMNS), extra
    raise ValueError(f"unknown series kind {kind!r}")


def _series_worker(args):
    job, cfg = args
    kw = solver_kwargs(cfg)
    return run_series(job, kw, cfg["n"], cfg["reps"], cfg["seed"], OptimizerOptions())


def cmd_reproduce_figure(cfg):
    fig = (cfg.get("figure") or "").lower()
    if not fig:
        raise ConfigError("reproduce-figure needs a figure name")
    jobs = figure_jobs(fig)
    if cfg["reps"] < 2:
        raise ConfigError("reps must be at least 2")
    solver_kwargs(cfg)  # validate before spending time
    outdir = Path(cfg["output"] or fig)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {outdir}: {exc}") from None
    args = [(job, cfg) for job in jobs]
    if cfg["parallelism"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["parallelism"]) as pool:
            results = list(pool.map(_series_worker, args))
    else:
        results = [_series_worker(a) for a in args]
    written = []
    for (name, kind, pay), (cols, table, extra) in zip(jobs, results):
        p = pay["params"]
        series_meta = {"series": name, "kind": kind, "params": {**asdict(p), "loss": p.loss.tag},
                       **{k: v for k, v in pay.items() if k != "params"}, **extra}
        meta = metadata("reproduce-figure", cfg, series_meta)
        if cfg["format"] == "csv":
            text, fname = render_csv(meta, cols, table), f"{name}.csv"
        else:
            text, fname = render_json(meta, [dict(zip(cols, t)) for t in table]), f"{name}.json"
        emit(text, str(outdir / fname))
        written.append(fname)
    return f"{fig}: wrote {len(written)} series to {outdir}\n" + "".join(f"  {w}\n" for w in written)


COMMANDS = {
    "eos-solve": cmd_eos_solve,
    "sweep-b": cmd_sweep_b,
    "sweep-s": cmd_sweep_s,
    "derivative-check": cmd_derivative_check,
    "erm-sim": cmd_erm_sim,
    "multiclass-toy": cmd_multiclass_toy,
    "reproduce-figure": cmd_reproduce_figure,
}


# ---------------------------------------------------------------- argparse

class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # grid values such as "-1,0,1" must not be taken for options
        self._negative_number_matcher = re.compile(r"^-\.?\d")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="replica-reweight", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat TOML file with default values")
        if name == "reproduce-figure":
            p.add_argument("figure", nargs="?", choices=FIGURES, help="figure to regenerate")
        for key, (conv, _) in {**COMMON_KEYS, **schema}.items():
            if key == "figure":
                continue
            flag = "--" + key.replace("_", "-")
            if conv is _bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
            elif key == "mode":
                p.add_argument(flag, dest=key, choices=("b0", "mmax", "umin", "fixed_b_zero", "maximize_m", "minimize_u"))
            elif key == "format":
                p.add_argument(flag, dest=key, choices=("csv", "json"))
            else:
                p.add_argument(flag, dest=key, metavar=key.upper())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve_config(ns.command, load_config_file(ns.config), flags)
        text = COMMANDS[ns.command](cfg)
        if ns.command == "reproduce-figure":
            sys.stderr.write(text)
        else:
            emit(text, cfg["output"])
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except OutputError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
