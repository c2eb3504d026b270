"""Solver configuration: a flat, sectioned `key = value` text format.

Sections and keys (defaults in parentheses):

  [grid]       dim (2) | n (256, n=2) | ntheta (64), nphi (128, n=3)
               resolutions ("128 256 512") - validate-operators only
  [densities]  f ("constant 1.0") | g ("constant 1.0") | normalize (true)
               cap_stride (4), cap_angles (12) - n=3 margin sampler
  [initial]    body ("sphere 1.0") | restart (checkpoint path)
               manufacture ("discrete") - manufacture subcommand mode
  [stepping]   dt_initial (1e-3), dt_min (1e-12), dt_safety (0.9),
               dt_growth (1.3), dt_bound (10.0), adaptive (true),
               error_tol (1e-9), convexity_floor (1e-8, relative to h_max),
               j_allowance (0.0), filter_strength (2.0)
  [stopping]   residual_sup_tol (1e-6), max_time (50.0), max_steps (5000000)
  [output]     dir ("."), trace ("trace.csv"), field ("final.field"),
               checkpoint ("checkpoint.field"), margins ("margins.csv"),
               table ("orders.csv"), manifest ("manifest.json"),
               snapshot_interval (0), trace_stride (1)

Density/body values are preset strings ("constant 1.0", "linear 0.5 1 0",
"expbump 0.3 0 0 1", "sphere 1.0", "ellipse 2 1", "ellipsoid 1.5 1.2 1",
"lpball 4 1 1") or "file <path>" for a sphere-field v1 file.  Unknown
keys and sections are rejected with line numbers.  The environment
variable GAUSSFLOW_OUTDIR overrides [output] dir (and nothing else).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .flow import FlowParams


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "grid": {
        "dim": ("int", 2),
        "n": ("int", 256),
        "ntheta": ("int", 64),
        "nphi": ("int", 128),
        "resolutions": ("str", "128 256 512"),
    },
    "densities": {
        "f": ("str", "constant 1.0"),
        "g": ("str", "constant 1.0"),
        "normalize": ("bool", True),
        "cap_stride": ("int", 4),
        "cap_angles": ("int", 12),
    },
    "initial": {
        "body": ("str", "sphere 1.0"),
        "restart": ("str", ""),
        "manufacture": ("str", "discrete"),
    },
    "stepping": {
        "dt_initial": ("float", 1e-3),
        "dt_min": ("float", 1e-12),
        "dt_safety": ("float", 0.9),
        "dt_growth": ("float", 1.3),
        "dt_bound": ("float", 10.0),
        "adaptive": ("bool", True),
        "error_tol": ("float", 1e-9),
        "convexity_floor": ("float", 1e-8),
        "j_allowance": ("float", 0.0),
        "filter_strength": ("float", 2.0),
    },
    "stopping": {
        "residual_sup_tol": ("float", 1e-6),
        "max_time": ("float", 50.0),
        "max_steps": ("int", 5_000_000),
    },
    "output": {
        "dir": ("str", "."),
        "trace": ("str", "trace.csv"),
        "field": ("str", "final.field"),
        "checkpoint": ("str", "checkpoint.field"),
        "margins": ("str", "margins.csv"),
        "table": ("str", "orders.csv"),
        "manifest": ("str", "manifest.json"),
        "snapshot_interval": ("int", 0),
        "trace_stride": ("int", 1),
    },
}


@dataclass
class SolverConfig:
    values: dict                     # {(section, key): value} fully defaulted
    source_path: Optional[str] = None
    input_files: list = field(default_factory=list)   # referenced field files

    def __getitem__(self, seckey):
        return self.values[seckey]

    @property
    def dim(self) -> int:
        return self.values[("grid", "dim")]

    @property
    def out_dir(self) -> str:
        return os.environ.get("GAUSSFLOW_OUTDIR") or self.values[("output", "dir")]

    def _out(self, key) -> str:
        return os.path.join(self.out_dir, self.values[("output", key)])

    @property
    def trace_path(self) -> str:
        return self._out("trace")

    @property
    def field_path(self) -> str:
        return self._out("field")

    @property
    def checkpoint_path(self) -> str:
        return self._out("checkpoint")

    @property
    def margins_path(self) -> str:
        return self._out("margins")

    @property
    def table_path(self) -> str:
        return self._out("table")

    @property
    def manifest_path(self) -> str:
        return self._out("manifest")

    @property
    def trace_stride(self) -> int:
        return self.values[("output", "trace_stride")]

    def flow_params(self) -> FlowParams:
        v = self.values
        return FlowParams(
            dt_initial=v[("stepping", "dt_initial")],
            dt_safety=v[("stepping", "dt_safety")],
            dt_min=v[("stepping", "dt_min")],
            dt_growth=v[("stepping", "dt_growth")],
            dt_bound=v[("stepping", "dt_bound")],
            adaptive=v[("stepping", "adaptive")],
            error_tol=v[("stepping", "error_tol")],
            convexity_floor=v[("stepping", "convexity_floor")],
            j_allowance=v[("stepping", "j_allowance")],
            residual_sup_tol=v[("stopping", "residual_sup_tol")],
            max_time=v[("stopping", "max_time")],
            max_steps=v[("stopping", "max_steps")],
            filter_strength=v[("stepping", "filter_strength")],
            snapshot_interval=v[("output", "snapshot_interval")],
        )

    def flat(self) -> dict:
        return {"%s.%s" % sk: v for sk, v in sorted(self.values.items())}


def _convert(kind, raw, lineno, key):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        return raw
    except ValueError:
        raise ConfigError("line %d: value %r invalid for key %r (%s)"
                          % (lineno, raw, key, kind)) from None


def parse_config(path) -> SolverConfig:
    """Parse and fully validate a config file; defaults applied."""
    values = {}
    seen = {}
    section = None
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e)) from None
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError("line %d: unknown section [%s]" % (lineno, section))
            continue
        if "=" not in text:
            raise ConfigError("line %d: expected key = value, got %r" % (lineno, text))
        if section is None:
            raise ConfigError("line %d: key before any [section]" % lineno)
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError("line %d: unknown key %r in [%s]" % (lineno, key, section))
        if (section, key) in seen:
            raise ConfigError("line %d: duplicate key %r in [%s] (first on line %d)"
                              % (lineno, key, section, seen[(section, key)]))
        seen[(section, key)] = lineno
        kind, _ = _SCHEMA[section][key]
        values[(section, key)] = _convert(kind, raw, lineno, key)
    for section, keys in _SCHEMA.items():
        for key, (kind, default) in keys.items():
            values.setdefault((section, key), default)
    cfg = SolverConfig(values, source_path=str(path))
    _validate(cfg)
    return cfg


def _validate(cfg: SolverConfig):
    v = cfg.values
    dim = v[("grid", "dim")]
    if dim not in (2, 3):
        raise ConfigError("key 'dim' must be 2 or 3, got %r" % dim)
    if dim == 2 and v[("grid", "n")] < 8:
        raise ConfigError("key 'n' must be at least 8")
    if dim == 3:
        if v[("grid", "ntheta")] < 8:
            raise ConfigError("key 'ntheta' must be at least 8")
        if v[("grid", "nphi")] < 8 or v[("grid", "nphi")] % 2:
            raise ConfigError("key 'nphi' must be even and at least 8")
    for sec, key in [("stepping", "dt_initial"), ("stepping", "dt_min"),
                     ("stepping", "dt_safety"), ("stepping", "dt_growth"),
                     ("stepping", "dt_bound"), ("stepping", "error_tol"),
                     ("stepping", "convexity_floor"),
                     ("stopping", "residual_sup_tol"), ("stopping", "max_time")]:
        if v[(sec, key)] <= 0.0:
            raise ConfigError("key %r must be positive, got %r" % (key, v[(sec, key)]))
    if v[("stepping", "j_allowance")] < 0.0:
        raise ConfigError("key 'j_allowance' must be non-negative")
    if v[("stepping", "dt_min")] >= v[("stepping", "dt_initial")]:
        raise ConfigError("key 'dt_min' (%g) must be smaller than key 'dt_initial' (%g)"
                          % (v[("stepping", "dt_min")], v[("stepping", "dt_initial")]))
    if v[("stopping", "max_steps")] <= 0:
        raise ConfigError("key 'max_steps' must be positive")
    if v[("output", "trace_stride")] < 1:
        raise ConfigError("key 'trace_stride' must be at least 1")
    if v[("output", "snapshot_interval")] < 0:
        raise ConfigError("key 'snapshot_interval' must be non-negative")
    body = v[("initial", "body")].split()
    if not body:
        raise ConfigError("key 'body' must not be empty")
    if v[("initial", "manufacture")] not in ("discrete", "analytic"):
        raise ConfigError("key 'manufacture' must be discrete or analytic")
    if v[("densities", "cap_stride")] < 1 or v[("densities", "cap_angles")] < 1:
        raise ConfigError("keys 'cap_stride'/'cap_angles' must be positive")


# ---------------------------------------------------------------------------
# problem construction


def _parse_spec(text: str, want: str):
    """Parse a density/body preset string into a spec tuple."""
    parts = text.split()
    kind = parts[0]
    if kind == "file":
        if len(parts) != 2:
            raise ConfigError("%s spec 'file' needs exactly one path" % want)
        return ("file", parts[1])
    if want == "density":
        if kind == "constant":
            return ("constant", float(parts[1]))
        if kind in ("linear", "expbump"):
            return (kind, float(parts[1]), [float(x) for x in parts[2:]])
        raise ConfigError("unknown density preset %r" % kind)
    if kind in ("sphere", "ellipse", "ellipsoid", "lpball"):
        return (kind, [float(x) for x in parts[1:]])
    raise ConfigError("unknown body preset %r" % kind)


def _resolve(cfg: SolverConfig, relpath: str) -> str:
    if os.path.isabs(relpath) or cfg.source_path is None:
        return relpath
    return os.path.join(os.path.dirname(os.path.abspath(cfg.source_path)), relpath)


def build_grid(cfg: SolverConfig):
    from .grid import build_grid as _bg
    if cfg.dim == 2:
        return _bg(2, cfg[("grid", "n")])
    return _bg(3, (cfg[("grid", "ntheta")], cfg[("grid", "nphi")]))


def _density_values(cfg: SolverConfig, grid, text: str):
    from . import fields as fieldsmod
    spec = _parse_spec(text, "density")
    if spec[0] == "file":
        path = _resolve(cfg, spec[1])
        cfg.input_files.append(path)
        f, _ = fieldsmod.read_field(path, grid=grid)
        return f.values
    if spec[0] == "constant":
        return spec
    return (spec[0], spec[1], spec[2])


def build_pair(cfg: SolverConfig, grid):
    from .densities import make_density_pair
    fs = _density_values(cfg, grid, cfg[("densities", "f")])
    gs = _density_values(cfg, grid, cfg[("densities", "g")])
    return make_density_pair(grid, fs, gs,
                             normalize=cfg[("densities", "normalize")])


def build_initial(cfg: SolverConfig, grid):
    """Initial state: a restored FlowState or a fresh support field."""
    from . import fields as fieldsmod
    from . import flow as flowmod
    from .mms import preset_support
    restart = cfg[("initial", "restart")]
    if restart:
        path = _resolve(cfg, restart)
        cfg.input_files.append(path)
        return flowmod.read_checkpoint(path, grid=grid)
    spec = _parse_spec(cfg[("initial", "body")], "body")
    if spec[0] == "file":
        path = _resolve(cfg, spec[1])
        cfg.input_files.append(path)
        f, _ = fieldsmod.read_field(path, grid=grid)
        return f
    return preset_support(grid, spec[0], spec[1])


def build_problem(cfg: SolverConfig):
    grid = build_grid(cfg)
    pair = build_pair(cfg, grid)
    start = build_initial(cfg, grid)
    return grid, pair, start
