"""Command-line entry point.

Subcommands (each takes one config file):

  gaussflow solve <config>               integrate a flow to convergence
  gaussflow manufacture <config>         emit the manufactured f field
  gaussflow check-aleksandrov <config>   margin sweep + one-line verdict
  gaussflow validate-operators <config>  discretization order table

Exit codes: 0 Converged/OK, 2 Budget, 3 StepFailure, 4 config error,
1 any other module error (machine-readable reason on stderr).
GAUSSFLOW_OUTDIR overrides the configured output directory.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import fields as fieldsmod
from . import flow as flowmod
from . import grid as gridmod
from .config import ConfigError, SolverConfig, build_grid, build_pair, \
    build_problem, parse_config
from .densities import AleksandrovSettings, check_aleksandrov
from .grid import ScalarField

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2
EXIT_STEP_FAILURE = 3
EXIT_CONFIG = 4

_REASON_CODES = {flowmod.CONVERGED: EXIT_OK,
                 flowmod.BUDGET: EXIT_BUDGET,
                 flowmod.STEP_FAILURE: EXIT_STEP_FAILURE}


def _sha256(path):
    try:
        digest = hashlib.sha256()
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                digest.update(block)
        return digest.hexdigest()
    except OSError:
        return None


def _write_manifest(cfg: SolverConfig, command, termination, wall, outputs,
                    error=None):
    inputs = {}
    if cfg.source_path:
        inputs[cfg.source_path] = _sha256(cfg.source_path)
    for path in cfg.input_files:
        inputs[path] = _sha256(path)
    doc = {
        "tool": "gaussflow %s" % __version__,
        "command": command,
        "config": cfg.flat(),
        "input_digests": inputs,
        "termination": termination,
        "wall_seconds": wall,
        "outputs": outputs,
    }
    if error:
        doc["error"] = error
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(cfg.manifest_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        print("error: manifest write failed: %s" % e, file=sys.stderr)


def _fail(message, code):
    print("error: %s" % message, file=sys.stderr)
    return code


def _aleksandrov_settings(cfg: SolverConfig) -> AleksandrovSettings:
    return AleksandrovSettings(
        n3_center_stride=cfg[("densities", "cap_stride")],
        n3_angles=cfg[("densities", "cap_angles")])


def cmd_solve(cfg: SolverConfig) -> int:
    t0 = time.perf_counter()
    outputs = {"trace": cfg.trace_path, "field": cfg.field_path,
               "checkpoint": cfg.checkpoint_path}
    termination, error = "error", None
    code = EXIT_ERROR
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        grid, pair, start = build_problem(cfg)
        advisory = check_aleksandrov(pair, _aleksandrov_settings(cfg),
                                     collect_rows=False)
        if advisory.worst_margin <= 0.0:
            print("warning: subspace mass condition violated on tested family "
                  "(worst margin %r); proceeding" % advisory.worst_margin,
                  file=sys.stderr)
        final, trace, reason = flowmod.run_flow(
            grid, pair, start, cfg.flow_params(),
            trace_path=cfg.trace_path,
            checkpoint_path=cfg.checkpoint_path,
            trace_stride=cfg.trace_stride)
        comments = ("final support field",
                    "termination = %s" % reason,
                    "t = %r  steps = %d  rejections = %d"
                    % (final.t, final.step_count, final.rejections))
        fieldsmod.write_field(cfg.field_path, final.h, comments=comments)
        termination = reason
        code = _REASON_CODES[reason]
        row = trace.rows[-1]
        print("%s: t=%r steps=%d residual_sup=%r"
              % (reason, final.t, final.step_count,
                 row[flowmod.TRACE_COLUMNS.index("residual_sup")]))
    except ConfigError as e:
        termination, error, code = "config-error", str(e), EXIT_CONFIG
        print("error: config: %s" % e, file=sys.stderr)
    except Exception as e:  # noqa: BLE001 - manifest must still be written
        error = "%s: %s" % (type(e).__name__, e)
        print("error: %s" % error, file=sys.stderr)
    _write_manifest(cfg, "solve", termination, time.perf_counter() - t0,
                    outputs, error)
    return code


def cmd_manufacture(cfg: SolverConfig) -> int:
    from .config import _parse_spec, _resolve
    from .mms import manufacture_f, manufacture_problem
    t0 = time.perf_counter()
    outputs = {"field": cfg.field_path}
    termination, error = "error", None
    code = EXIT_ERROR
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        grid = build_grid(cfg)
        body_text = cfg[("initial", "body")]
        g_text = cfg[("densities", "g")]
        mode = cfg[("initial", "manufacture")]
        g_spec = _density_spec(cfg, grid, g_text)
        spec = _parse_spec(body_text, "body")
        if spec[0] == "file":
            path = _resolve(cfg, spec[1])
            cfg.input_files.append(path)
            h_target, _ = fieldsmod.read_field(path, grid=grid)
            f = manufacture_f(h_target, g_spec)
        else:
            problem = manufacture_problem(grid, spec[0], spec[1], g_spec, mode)
            f = problem.f
        comments = ("manufactured density f",
                    "target = %s" % body_text,
                    "g = %s" % g_text,
                    "mode = %s" % mode)
        fieldsmod.write_field(cfg.field_path, f, comments=comments)
        termination, code = "OK", EXIT_OK
        print("OK: wrote %s" % cfg.field_path)
    except ConfigError as e:
        termination, error, code = "config-error", str(e), EXIT_CONFIG
        print("error: config: %s" % e, file=sys.stderr)
    except Exception as e:  # noqa: BLE001
        error = "%s: %s" % (type(e).__name__, e)
        print("error: %s" % error, file=sys.stderr)
    _write_manifest(cfg, "manufacture", termination,
                    time.perf_counter() - t0, outputs, error)
    return code


def _density_spec(cfg, grid, text):
    from .config import _parse_spec, _resolve
    spec = _parse_spec(text, "density")
    if spec[0] == "file":
        path = _resolve(cfg, spec[1])
        cfg.input_files.append(path)
        f, _ = fieldsmod.read_field(path, grid=grid)
        return f.values
    return spec


def _format_set(s) -> str:
    if s is None:
        return "none"
    center = ";".join(repr(float(c)) for c in np.atleast_1d(s.center))
    return "%s center=%s half_angle=%r" % (s.kind, center, float(s.half_angle))


def cmd_check_aleksandrov(cfg: SolverConfig) -> int:
    t0 = time.perf_counter()
    outputs = {"margins": cfg.margins_path}
    termination, error = "error", None
    code = EXIT_ERROR
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        grid = build_grid(cfg)
        pair = build_pair(cfg, grid)
        report = check_aleksandrov(pair, _aleksandrov_settings(cfg))
        report.write_csv(cfg.margins_path)
        if report.ok:
            print("margins positive on tested family: worst_margin=%r at %s "
                  "(%d sets)" % (report.worst_margin,
                                 _format_set(report.worst_set),
                                 report.sets_tested))
        else:
            print("negative margin found: worst_margin=%r at %s (%d sets)"
                  % (report.worst_margin, _format_set(report.worst_set),
                     report.sets_tested))
        termination, code = "OK", EXIT_OK
    except ConfigError as e:
        termination, error, code = "config-error", str(e), EXIT_CONFIG
        print("error: config: %s" % e, file=sys.stderr)
    except Exception as e:  # noqa: BLE001
        error = "%s: %s" % (type(e).__name__, e)
        print("error: %s" % error, file=sys.stderr)
    _write_manifest(cfg, "check-aleksandrov", termination,
                    time.perf_counter() - t0, outputs, error)
    return code


def _parse_resolutions(text, dim):
    out = []
    for token in text.split():
        if dim == 2:
            out.append(int(token))
        else:
            if "x" in token:
                nt, nph = token.lower().split("x", 1)
                out.append((int(nt), int(nph)))
            else:
                nt = int(token)
                out.append((nt, 2 * nt))
    if len(out) < 2:
        raise ConfigError("key 'resolutions' needs at least two entries")
    return out


def _operator_errors(dim, res):
    g = gridmod.build_grid(dim, res)
    if dim == 2:
        h = ScalarField(g, np.cos(g.theta) + 2.0)
        grad_exact = -np.sin(g.theta)[:, None]
        hess_exact = -np.cos(g.theta)[:, None, None]
    else:
        ct = g.cos_theta()
        st = g.sin_theta()
        h = ScalarField(g, np.repeat(ct, g.shape[1]) + 2.0)
        gx = np.zeros((g.nnodes, 2))
        gx[:, 0] = np.repeat(-st, g.shape[1])
        grad_exact = gx
        eye = np.eye(2)[None, :, :]
        hess_exact = np.repeat(-ct, g.shape[1])[:, None, None] * eye
    grad = gridmod.gradient_components(h, g)
    hess = gridmod.hessian_components(h, g)
    return (float(np.max(np.abs(grad - grad_exact))),
            float(np.max(np.abs(hess - hess_exact))))


def cmd_validate_operators(cfg: SolverConfig) -> int:
    t0 = time.perf_counter()
    outputs = {"table": cfg.table_path}
    termination, error = "error", None
    code = EXIT_ERROR
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        dim = cfg.dim
        resolutions = _parse_resolutions(cfg[("grid", "resolutions")], dim)
        errs = [_operator_errors(dim, r) for r in resolutions]
        labels = [str(r) if dim == 2 else "%dx%d" % r for r in resolutions]
        lines = ["field,op,resolution,sup_err,order"]
        orders = {"gradient": [], "hessian": []}
        field_name = "cos(theta)+2"
        for k, op in enumerate(("gradient", "hessian")):
            for i, lab in enumerate(labels):
                if i == 0:
                    order = ""
                else:
                    ratio = (resolutions[i] / resolutions[i - 1]) if dim == 2 \
                        else (resolutions[i][0] / resolutions[i - 1][0])
                    order = math.log(errs[i - 1][k] / errs[i][k]) / math.log(ratio)
                    orders[op].append(order)
                    order = repr(order)
                lines.append("%s,%s,%s,%r,%s" % (field_name, op, lab,
                                                 errs[i][k], order))
        with open(cfg.table_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        for op in ("gradient", "hessian"):
            print("%s observed order %.3f" % (op, min(orders[op])))
        termination, code = "OK", EXIT_OK
    except ConfigError as e:
        termination, error, code = "config-error", str(e), EXIT_CONFIG
        print("error: config: %s" % e, file=sys.stderr)
    except Exception as e:  # noqa: BLE001
        error = "%s: %s" % (type(e).__name__, e)
        print("error: %s" % error, file=sys.stderr)
    _write_manifest(cfg, "validate-operators", termination,
                    time.perf_counter() - t0, outputs, error)
    return code


_COMMANDS = {
    "solve": cmd_solve,
    "manufacture": cmd_manufacture,
    "check-aleksandrov": cmd_check_aleksandrov,
    "validate-operators": cmd_validate_operators,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gaussflow",
        description="Gauss-image flow solver for convex-body support functions")
    parser.add_argument("--version", action="version",
                        version="gaussflow %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a config file")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as e:
        return _fail("config: %s" % e, EXIT_CONFIG)
    return _COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
