"""Command-line entry point.

Every subcommand reads an optional JSON config (``--config``), applies flag
overrides, and writes deterministic output.  Errors are reported as a single
JSON line on stderr with exit code 1 (configuration), 2 (numerical failure)
or 3 (verification failure).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import blocks, phaseplane, series, verify
from .equilibrium import NoConvergence, critical_points, march, polish, solve, total_population
from .model import (BangBangResource, ConstantResource, Domain, Params, ResourceError,
                    validate)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class CliFailure(Exception):
    def __init__(self, kind: str, message: str, code: int, **extra):
        super().__init__(message)
        self.kind, self.code, self.extra = kind, code, extra


# ---------------------------------------------------------------------------
# config handling


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "config") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "config") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", "config")
    return data


def _number(cfg: dict, key: str, default=None, kind=float):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing field '{key}'", key)
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{key}' must be a number", key)
    if kind is int and int(value) != value:
        raise ConfigError(f"field '{key}' must be an integer", key)
    return kind(value)


def _pair(cfg: dict, key: str, default):
    value = cfg.get(key, default)
    if not (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ConfigError(f"field '{key}' must be a pair of numbers", key)
    return float(value[0]), float(value[1])


def params_from(cfg: dict) -> Params:
    try:
        return Params(mu=_number(cfg, "mu", 1.0), grid_n=_number(cfg, "grid_n", 512, int),
                      tol_residual=_number(cfg, "tol_residual", 1e-10),
                      tol_integral=_number(cfg, "tol_integral", 1e-10))
    except ConfigError:
        raise
    except ValueError as exc:
        field = "mu" if "mu" in str(exc) else "grid_n" if "grid_n" in str(exc) else "params"
        raise ConfigError(str(exc), field) from None


def resource_from(cfg: dict):
    if "resource" not in cfg:
        raise ConfigError("missing field 'resource'", "resource")
    data = cfg["resource"]
    if isinstance(data, dict) and "constant" in data:
        try:
            dom = Domain(*map(float, data.get("domain", [0.0, 1.0])))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field 'resource.domain': {exc}", "resource.domain") from None
        value = data["constant"]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 < value <= 1.0:
            raise ConfigError("field 'resource.constant' must be a number in (0, 1]", "resource.constant")
        return ConstantResource(dom, float(value))
    try:
        m = BangBangResource.from_dict(data)
        validate(m, allow_full=True)
    except ResourceError as exc:
        raise ConfigError(f"{exc.message} (invariant: {exc.invariant})", "resource") from None
    return m


def merge_flags(cfg: dict, args, grid_key: str) -> dict:
    cfg = dict(cfg)
    if args.mu is not None:
        cfg["mu"] = args.mu
    if args.grid is not None:
        cfg[grid_key] = args.grid
    if args.m0 is not None:
        cfg["m0"] = args.m0
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _finite(x: float):
    return float(x) if math.isfinite(x) else None


def solution_csv(sol) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "theta", "dtheta", "m"])
    for row in zip(sol.x, sol.theta.values, sol.dtheta.values, sol.coeff):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _write(path: str | None, text: str, stdout) -> None:
    if path is None:
        stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _solution_summary(m, p, sol) -> dict:
    return {"F": total_population(sol), "theta_min": float(sol.theta.values.min()),
            "theta_max": float(sol.theta.values.max()), "extrema": critical_points(sol),
            "m0": m.m0, "mu": p.mu, "grid_n": p.grid_n, "residual_norm": sol.residual_norm,
            "iterations": sol.iterations}


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: dict, args, stdout) -> int:
    m, p = resource_from(cfg), params_from(cfg)
    sol = solve(m, p)
    if args.out is not None:
        _write(args.out, solution_csv(sol), stdout)
    stdout.write(dumps(_solution_summary(m, p, sol)))
    return EXIT_OK


def cmd_march(cfg: dict, args, stdout) -> int:
    m, p = resource_from(cfg), params_from(cfg)
    theta0 = cfg.get("theta0", m.m0)
    if isinstance(theta0, (int, float)) and not isinstance(theta0, bool):
        theta0 = np.full(p.grid_n + 1, float(theta0))
    elif isinstance(theta0, list) and len(theta0) == p.grid_n + 1:
        theta0 = np.array(theta0, dtype=float)
    else:
        raise ConfigError("field 'theta0' must be a number or a list of grid_n + 1 numbers", "theta0")
    try:
        sol = march(m, p, theta0, dt=_number(cfg, "dt", 0.5))
    except ValueError as exc:
        raise ConfigError(str(exc), "theta0") from None
    if args.out is not None:
        _write(args.out, solution_csv(sol), stdout)
    summary = _solution_summary(m, p, sol)
    summary["steps"] = summary.pop("iterations")
    stdout.write(dumps(summary))
    return EXIT_OK


def cmd_surface(cfg: dict, args, stdout) -> int:
    p = params_from(cfg)
    grid = _number(cfg, "grid", 50, int)
    if grid < 2:
        raise ConfigError("field 'grid' must be at least 2", "grid")
    l_range = _pair(cfg, "l_range", (0.1, 10.0))
    r_range = _pair(cfg, "b_over_l_range", (0.0, 1.0))
    if not (0 < l_range[0] <= l_range[1]):
        raise ConfigError("field 'l_range' must be positive and increasing", "l_range")
    if not (0.0 <= r_range[0] <= r_range[1] <= 1.0):
        raise ConfigError("field 'b_over_l_range' must lie in [0, 1]", "b_over_l_range")
    rows = blocks.advantage_surface(l_range, r_range, grid, p)
    _write(args.out, blocks.surface_csv(rows), stdout)
    return EXIT_OK


def cmd_series(cfg: dict, args, stdout) -> int:
    m0 = _number(cfg, "m0", 0.05)
    mu = _number(cfg, "mu", 10.0)
    K = _number(cfg, "K", series.K_DEFAULT, int)
    if not 0.0 < m0 < 1.0:
        raise ConfigError("field 'm0' must lie in (0, 1)", "m0")
    if not mu > 0:
        raise ConfigError("field 'mu' must be positive", "mu")
    if not 1 <= K <= series.K_MAX:
        raise ConfigError(f"field 'K' must be in 1..{series.K_MAX}", "K")
    p = params_from({**cfg, "mu": mu})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", series.ConvergenceWarning)
        val = series.F_series(m0, mu, K)
    state = series.eta_k_compute(m0, K)
    diag = series.coefficient_diagnostics(state)
    direct = polish(BangBangResource(Domain(0.0, 1.0), ((0.0, m0),)), p).population
    d_m0, d_mu = series.F_partials_series(m0, mu, K)
    out = {"m0": m0, "mu": mu, "K": K, "F_series": val.value, "F_direct": direct,
           "remainder": _finite(val.remainder), "guaranteed_convergence": val.guaranteed,
           "dF_dm0": d_m0, "dF_dmu": d_mu,
           "per_order": [{"k": k, "integral_eta_k": float(i), "nu_eta_k": nu}
                         for k, (i, nu) in enumerate(zip(state.integrals, diag["nu_values"]), start=1)],
           "radius_estimate": _finite(diag["radius_estimate"]),
           "radius_guaranteed": diag["radius_guaranteed"], "flags": diag["flags"]}
    _write(args.out, dumps(out), stdout)
    return EXIT_OK


def cmd_improve(cfg: dict, args, stdout) -> int:
    m, p = resource_from(cfg), params_from(cfg)
    if not isinstance(m, BangBangResource):
        raise ConfigError("improve needs a bang-bang resource", "resource")
    try:
        m_hat, report = phaseplane.improve_resource(m, p)
    except phaseplane.AlreadyDecomposable as exc:
        raise CliFailure("AlreadyDecomposable", str(exc), EXIT_CONFIG) from None
    except phaseplane.SurgeryDegenerate as exc:
        raise CliFailure("SurgeryDegenerate", str(exc), EXIT_NUMERIC) from None
    out = report.to_dict()
    out["m_hat"] = {"breaks": list(m_hat.breaks), "values": list(m_hat.values)}
    _write(args.out, dumps(out), stdout)
    return EXIT_OK


def cmd_optimize(cfg: dict, args, stdout) -> int:
    p = params_from({k: v for k, v in cfg.items() if k != "mu"})
    length = _number(cfg, "domain_length", 1.0)
    m0 = _number(cfg, "m0", 0.05)
    mu = _number(cfg, "mu", 1.0)
    r_max = _number(cfg, "r_max", 2, int)
    grid = _number(cfg, "grid", 20, int)
    if not 0.0 < m0 < 1.0:
        raise ConfigError("field 'm0' must lie in (0, 1)", "m0")
    if not 1 <= r_max <= 3:
        raise ConfigError("field 'r_max' must be 1, 2 or 3", "r_max")
    if grid < r_max:
        raise ConfigError("field 'grid' must be at least r_max", "grid")
    if not (length > 0 and mu > 0):
        raise ConfigError("fields 'domain_length' and 'mu' must be positive", "domain_length")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", blocks.RegimeViolation)
        res = blocks.optimize_small_resource(length, m0, mu, r_max, grid, p)
    out = res.to_dict()
    for key in ("fitted_C3", "gap_correlation", "gap_correlation_comparable"):
        out[key] = _finite(out[key])
    _write(args.out, dumps(out), stdout)
    return EXIT_OK


def cmd_verify(cfg: dict, args, stdout) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("verify needs a seed (--seed N or field 'seed')", "seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("field 'seed' must be a nonnegative integer", "seed")
    scale = _number(cfg, "tolerance_scale", 1.0)
    if not scale > 0:
        raise ConfigError("field 'tolerance_scale' must be positive", "tolerance_scale")
    suites = args.suite or cfg.get("suites")
    if suites is not None and (not isinstance(suites, list) or not all(isinstance(s, str) for s in suites)):
        raise ConfigError("field 'suites' must be a list of names", "suites")
    unknown = sorted(set(suites or ()) - set(verify.SUITES))
    if unknown:
        raise ConfigError(f"unknown suite(s): {', '.join(unknown)}", "suite")
    report = verify.run(suites, seed, scale)
    _write(args.out, verify.dumps(report), stdout)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMANDS = {
    "solve": (cmd_solve, "grid_n", "equilibrium on a grid; CSV via --out, summary JSON on stdout"),
    "march": (cmd_march, "grid_n", "time-march to steady state; CSV via --out, summary JSON on stdout"),
    "surface": (cmd_surface, "grid", "advantage function H on a (l, b/l) grid as CSV"),
    "series": (cmd_series, "K", "large-diffusion series for m = chi_(0, m0)"),
    "improve": (cmd_improve, "grid_n", "one resource-improving surgery; report JSON"),
    "optimize": (cmd_optimize, "grid", "exhaustive block-configuration search; JSON"),
    "verify": (cmd_verify, "grid_n", "run property suites; report JSON, exit 3 on failure"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of printing usage, so errors stay single-line JSON."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, grid_key, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--suite", action="append", metavar="NAME")
        sp.add_argument("--grid", type=int, metavar="N", help=f"overrides '{grid_key}'")
        sp.add_argument("--mu", type=float, metavar="X")
        sp.add_argument("--m0", type=float, metavar="X")
    return parser


def _error_line(kind: str, message: str, code: int, **extra) -> str:
    rec = {"error": kind, "message": message, "exit_code": code}
    rec.update({k: v for k, v in extra.items() if v is not None})
    return json.dumps(rec) + "\n"


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        stderr.write(_error_line("UsageError", str(exc), EXIT_CONFIG))
        return EXIT_CONFIG
    func, grid_key, _ = COMMANDS[args.command]
    try:
        cfg = merge_flags(load_config(args.config), args, grid_key)
        return func(cfg, args, stdout)
    except ConfigError as exc:
        stderr.write(_error_line("ConfigError", str(exc), EXIT_CONFIG, field=exc.field))
        return EXIT_CONFIG
    except CliFailure as exc:
        stderr.write(_error_line(exc.kind, str(exc), exc.code, **exc.extra))
        return exc.code
    except NoConvergence as exc:
        stderr.write(_error_line("NoConvergence", str(exc), EXIT_NUMERIC, residual=_finite(exc.residual)))
        return EXIT_NUMERIC
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        stderr.write(_error_line(type(exc).__name__, str(exc), EXIT_NUMERIC))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
