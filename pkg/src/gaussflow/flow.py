"""Normalized Gauss curvature flow of the support function.

    dh/dt = h - f(x) * G(X) * K,     G(y) = |y|^n / g(y/|y|)

integrated with an explicit 4-stage scheme, step-doubling error control,
a frozen-coefficient stability cap on dt, convexity/positivity/Lyapunov
safeguards, and residual-based stopping.  The density-form residual

    R = g(u) rho^{-n} h det(b) - f

vanishes exactly at stationary states; J decreases and V_g is conserved
along the flow for normalized pairs.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend as backendmod
from . import fields as fieldsmod
from .densities import DensityPair
from .geometry import OriginCollision, derive_geometry
from .grid import ScalarField, SphereGrid
from .interpolate import eval_periodic_cubic

TWO_PI = 2.0 * math.pi

TRACE_COLUMNS = ("step", "t", "dt", "J", "Vg", "residual_sup", "residual_l2",
                 "h_min", "h_max", "rho_min", "rho_max", "gradh_max",
                 "K_max", "kappa_min", "rejections")

CONVERGED = "Converged"
BUDGET = "Budget"
STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class FlowParams:
    """Stepping and stopping parameters (see SolverConfig for file keys)."""
    dt_initial: float = 1e-3
    dt_safety: float = 0.9        # fraction of the frozen-coefficient limit
    dt_min: float = 1e-12
    dt_growth: float = 1.3        # max growth per accepted step
    dt_bound: float = 10.0        # dt never exceeds dt_bound*dt_initial
    adaptive: bool = True
    error_tol: float = 1e-9       # relative step-doubling tolerance
    convexity_floor: float = 1e-8  # accepted states need min-eig(b) >= floor*h_max
    j_allowance: float = 0.0      # grid-error allowance added to tol_J
    residual_sup_tol: float = 1e-6
    max_time: float = 50.0
    max_steps: int = 5_000_000
    filter_strength: float = 2.0  # n=3 zonal filter; <= 0 disables
    snapshot_interval: int = 0    # checkpoint every k accepted steps; 0 = off
    hold_steps: int = 4           # suppress dt growth after a rejection

    def validate(self):
        bad = []
        for key in ("dt_initial", "dt_safety", "dt_min", "dt_growth",
                    "dt_bound", "error_tol", "convexity_floor",
                    "residual_sup_tol", "max_time"):
            if getattr(self, key) <= 0.0:
                bad.append(key)
        if bad:
            raise ValueError("parameters must be positive: " + ", ".join(bad))
        if self.dt_min >= self.dt_initial:
            raise ValueError("dt_min (%g) must be smaller than dt_initial (%g)"
                             % (self.dt_min, self.dt_initial))
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        return self


class FlowState:
    """State of the flow at one instant; geom is derived on demand."""

    def __init__(self, grid: SphereGrid, h_values: np.ndarray, t: float = 0.0,
                 step_count: int = 0, dt_next: Optional[float] = None,
                 rejections: int = 0, hold: int = 0):
        self.grid = grid
        self.h = ScalarField(grid, np.asarray(h_values, dtype=float).reshape(grid.nnodes))
        self.t = float(t)
        self.step_count = int(step_count)
        self.dt_next = dt_next
        self.rejections = int(rejections)
        self.hold = int(hold)
        self._geom = None

    @property
    def geom(self):
        if self._geom is None:
            self._geom = derive_geometry(self.h)
        return self._geom


class FlowTrace:
    """Per-accepted-step monitor rows plus in-memory extras."""

    columns = TRACE_COLUMNS

    def __init__(self):
        self.rows = []            # tuples in TRACE_COLUMNS order
        self.mass_gap = []        # extras, same length as rows
        self.dissipation = []
        self.j_violations = 0     # steps with J increase beyond tol_J
        self.worst_j_overshoot = 0.0

    def __len__(self):
        return len(self.rows)

    def append(self, row, mass_gap, dissipation):
        self.rows.append(tuple(row))
        self.mass_gap.append(mass_gap)
        self.dissipation.append(dissipation)

    def column(self, name) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, path):
        with _TraceCSV(path) as w:
            for row in self.rows:
                w.writerow(row)


def _format_cell(name, value):
    if name in ("step", "rejections"):
        return str(int(value))
    return repr(float(value))


class _TraceCSV:
    """Incremental trace writer with round-trip float formatting."""

    def __init__(self, path, append=False):
        self.path = path
        mode = "a" if append and os.path.exists(path) else "w"
        self.fh = open(path, mode, newline="")
        self.writer = csv.writer(self.fh)
        if mode == "w":
            self.writer.writerow(TRACE_COLUMNS)

    def writerow(self, row):
        self.writer.writerow([_format_cell(n, v)
                              for n, v in zip(TRACE_COLUMNS, row)])

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


# ---------------------------------------------------------------------------
# n=3 zonal filter


def make_zonal_filter(grid: SphereGrid, strength: float):
    """Azimuthal spectral taper near the poles.

    Mode m of theta-row j is scaled by
        sigma_{j,m} = min(1, (strength*sin(theta_j)/(m*dtheta))^2),
    which equalizes the azimuthal CFL scale with the meridional one while
    keeping every coefficient positive (stationary states are preserved:
    the filter is linear and sigma > 0).  Returns (sigma, amp_row) where
    amp_row bounds the filtered phi-phi operator amplification per row.
    """
    nt, nph = grid.shape
    st = grid.sin_theta()
    m = np.arange(nph // 2 + 1)
    ratio = (strength * st[:, None]) / (np.maximum(m, 1)[None, :] * grid.dtheta)
    sigma = np.minimum(1.0, ratio * ratio)
    sigma[:, 0] = 1.0
    om = m * grid.dphi
    s2 = (2.0 - 2.0 * np.cos(om)) / (grid.dphi * grid.dphi)
    amp_row = np.max(sigma * s2[None, :], axis=1) / (st * st)
    return sigma, amp_row


def _apply_filter(sigma, rhs2d):
    return np.fft.irfft(np.fft.rfft(rhs2d, axis=1) * sigma,
                        n=rhs2d.shape[1], axis=1)


# ---------------------------------------------------------------------------
# kernel context plumbing


def _kernel_shape(grid, values):
    v = np.asarray(values, dtype=float)
    return v.reshape(grid.shape) if grid.dim == 3 else v.reshape(grid.nnodes)


def make_stepper(grid: SphereGrid, pair: DensityPair,
                 params: Optional[FlowParams] = None, kernels=None):
    params = params or FlowParams()
    if kernels is None:
        _, kernels = backendmod.get_kernels()
    sigma = None
    amp_row = None
    if grid.dim == 3 and params.filter_strength > 0.0:
        sigma, amp_row = make_zonal_filter(grid, params.filter_strength)
    if grid.dim == 2:
        gdata = pair.g_coeffs
    else:
        gdata = None if pair.g_const is not None \
            else pair.g.values.reshape(grid.shape)
    ctx = kernels.make_context(grid, _kernel_shape(grid, pair.f.values),
                               pair.g_const, gdata, pair.mass_f, amp_row)
    return _Stepper(kernels, ctx, sigma, params, grid)


class _Stepper:
    def __init__(self, kernels, ctx, sigma, params, grid):
        self.k = kernels
        self.ctx = ctx
        self.sigma = sigma
        self.params = params
        self.grid = grid
        # compiled backends fuse the n=2 step-doubled sweep (no filter
        # sits between stages there); values equal the generic path
        self.fused = getattr(kernels, "rk4_double_n2", None) \
            if (grid.dim == 2 and sigma is None) else None

    def rhs(self, h):
        """Filtered flow velocity; None when h leaves the convex cone."""
        raw, min_b = self.k.eval_rhs(self.ctx, h)
        if raw is None:
            return None
        if self.sigma is not None:
            return _apply_filter(self.sigma, raw)
        return raw

    def diag(self, h):
        return self.k.eval_diag(self.ctx, h)

    def _rk4(self, h, dt):
        k1 = self.rhs(h)
        if k1 is None:
            return None
        k2 = self.rhs(h + (0.5 * dt) * k1)
        if k2 is None:
            return None
        k3 = self.rhs(h + (0.5 * dt) * k2)
        if k3 is None:
            return None
        k4 = self.rhs(h + dt * k3)
        if k4 is None:
            return None
        return h + (dt / 6.0) * ((k1 + k4) + 2.0 * (k2 + k3))

    def _double(self, h, dt):
        """Step-doubled pair: (y1 one full step, y2 two half steps) or
        None on convexity loss at any stage."""
        if self.fused is not None:
            out = self.fused(self.ctx, h, dt)
            return None if out[0] is None else out
        y1 = self._rk4(h, dt)
        if y1 is None:
            return None
        half = 0.5 * dt
        ym = self._rk4(h, half)
        if ym is None:
            return None
        y2 = self._rk4(ym, half)
        if y2 is None:
            return None
        return y1, y2

    def attempt(self, h, dt, j_prev):
        """One step-doubled attempt.  Returns (h_new, diag_new, err) or
        (None, reason, err)."""
        p = self.params
        pair = self._double(h, dt)
        if pair is None:
            return None, "convexity", 0.0
        y1, y2 = pair
        err = float(np.max(np.abs(y2 - y1))) / 15.0
        scale = float(np.max(np.abs(y2)))
        if p.adaptive and err > p.error_tol * scale:
            return None, "error", err
        d = self.diag(y2)
        if not math.isfinite(d.j):
            return None, "nonfinite", err
        if d.min_b < p.convexity_floor * d.h_max or d.h_min <= 0.0:
            return None, "convexity", err
        tol_j = 10.0 * dt * dt + p.j_allowance
        if d.j > j_prev + tol_j:
            return None, "lyapunov", err
        return y2, d, err


# ---------------------------------------------------------------------------
# public single-quantity operations


def weight_G(X, pair: DensityPair):
    """G(X) = |X|^n / g(X/|X|) for one ambient vector or a stack of them."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xs = X[None, :] if single else X
    n = pair.grid.dim
    rho = np.sqrt((Xs * Xs).sum(axis=1))
    if np.any(rho < 1e-12):
        raise OriginCollision("body boundary passes through the origin")
    if pair.g_const is not None:
        gu = pair.g_const
    elif n == 2:
        ang = np.arctan2(Xs[:, 1], Xs[:, 0]) % TWO_PI
        gu = eval_periodic_cubic(pair.g_coeffs, pair.grid.dtheta, ang)
    else:
        u = Xs / rho[:, None]
        tu = np.arccos(np.clip(u[:, 2], -1.0, 1.0))
        pu = np.arctan2(u[:, 1], u[:, 0]) % TWO_PI
        gu = pair.g_interp(tu, pu)
    out = rho ** n / gu
    return float(out[0]) if single else out


def _h_values(state_or_field):
    if isinstance(state_or_field, FlowState):
        return state_or_field.grid, state_or_field.h.values
    f = state_or_field
    return f.grid, f.values


def flow_rhs(state_or_field, pair: DensityPair) -> ScalarField:
    """Unfiltered flow velocity h - f*G(X)*K as a field (None-safe: raises
    on convexity loss instead of returning None)."""
    grid, h = _h_values(state_or_field)
    stepper = make_stepper(grid, pair, FlowParams(filter_strength=0.0))
    raw, min_b = stepper.k.eval_rhs(stepper.ctx, _kernel_shape(grid, h))
    if raw is None:
        from .geometry import ConvexityViolation, NonPositiveSupport
        if min_b <= 0.0:
            raise ConvexityViolation("min eigenvalue of b is %g" % min_b)
        raise NonPositiveSupport("support function must stay positive")
    return ScalarField(grid, np.asarray(raw).reshape(grid.nnodes))


def residual(state_or_field, pair: DensityPair) -> ScalarField:
    """Density-form residual R = g(u) rho^{-n} h det(b) - f."""
    grid, h = _h_values(state_or_field)
    stepper = make_stepper(grid, pair, FlowParams(filter_strength=0.0))
    r = stepper.k.residual_values(stepper.ctx, _kernel_shape(grid, h))
    return ScalarField(grid, np.asarray(r).reshape(grid.nnodes))


def diagnostics(state_or_field, pair: DensityPair) -> dict:
    """Monitor row for the a priori bounds (no thresholds enforced)."""
    grid, h = _h_values(state_or_field)
    stepper = make_stepper(grid, pair)
    d = stepper.diag(_kernel_shape(grid, h))
    return {"h_min": d.h_min, "h_max": d.h_max,
            "rho_min": d.rho_min, "rho_max": d.rho_max,
            "gradh_max": d.gradh_max, "K_max": d.k_max,
            "kappa_min": d.kappa_min,
            "J": d.j, "Vg": d.vg,
            "residual_sup": d.res_sup, "residual_l2": d.res_l2,
            "mass_gap": d.mass_gap, "dissipation": d.dissipation,
            "min_b": d.min_b}


def step(state: FlowState, pair: DensityPair, dt: float,
         params: Optional[FlowParams] = None):
    """One attempted step.  Returns (new FlowState, info) on acceptance or
    (None, info) on rejection; info carries reason/err/dt_next (halved on
    rejection)."""
    params = params or FlowParams()
    stepper = make_stepper(state.grid, pair, params)
    hk = _kernel_shape(state.grid, state.h.values)
    j_prev = stepper.diag(hk).j
    y2, d_or_reason, err = stepper.attempt(hk, dt, j_prev)
    if y2 is None:
        return None, {"accepted": False, "reason": d_or_reason,
                      "err": err, "dt_next": 0.5 * dt}
    new = FlowState(state.grid, np.asarray(y2).reshape(state.grid.nnodes),
                    t=state.t + dt, step_count=state.step_count + 1,
                    dt_next=dt, rejections=state.rejections)
    return new, {"accepted": True, "reason": "accepted", "err": err,
                 "diag": d_or_reason, "dt_next": dt}


# ---------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, state: FlowState, comments=()):
    meta = {"t": repr(state.t),
            "dt": repr(state.dt_next if state.dt_next is not None else 0.0),
            "step": str(state.step_count),
            "rej": str(state.rejections),
            "hold": str(state.hold)}
    fieldsmod.write_field(path, state.h, comments=comments, meta=meta)


def read_checkpoint(path, grid: Optional[SphereGrid] = None) -> FlowState:
    field, meta = fieldsmod.read_field(path, grid=grid)
    dt = float(meta.get("dt", 0.0))
    return FlowState(field.grid, field.values,
                     t=float(meta.get("t", 0.0)),
                     step_count=int(meta.get("step", 0)),
                     dt_next=dt if dt > 0.0 else None,
                     rejections=int(meta.get("rej", 0)),
                     hold=int(meta.get("hold", 0)))


# ---------------------------------------------------------------------------
# the driver


def _diag_row(step_no, t, dt, d, rejections):
    return (step_no, t, dt, d.j, d.vg, d.res_sup, d.res_l2,
            d.h_min, d.h_max, d.rho_min, d.rho_max, d.gradh_max,
            d.k_max, d.kappa_min, rejections)


def run_flow(grid: SphereGrid, pair: DensityPair, start,
             params: Optional[FlowParams] = None, *,
             trace_path=None, checkpoint_path=None, trace_stride: int = 1,
             kernels=None):
    """Integrate until Converged / Budget / StepFailure.

    start: FlowState (fresh at t=0 or restored checkpoint) or a plain
    h array/ScalarField.  Returns (FlowState, FlowTrace, reason).

    The trace records every trace_stride-th accepted step plus the initial
    and final rows; a restored run does not re-emit the row its checkpoint
    already produced, so restart traces concatenate exactly.
    """
    params = (params or FlowParams()).validate()
    if isinstance(start, FlowState):
        state = start
    elif isinstance(start, ScalarField):
        state = FlowState(grid, start.values)
    else:
        state = FlowState(grid, np.asarray(start, dtype=float))
    restored = state.step_count > 0 or state.t > 0.0

    stepper = make_stepper(grid, pair, params, kernels)
    h = _kernel_shape(grid, state.h.values)
    t = state.t
    step_no = state.step_count
    rejections = state.rejections
    hold = state.hold
    dt = state.dt_next if state.dt_next is not None else params.dt_initial

    trace = FlowTrace()
    writer = _TraceCSV(trace_path, append=restored) if trace_path else None
    last_recorded = -1

    def record(row, d):
        nonlocal last_recorded
        trace.append(row, d.mass_gap, d.dissipation)
        if writer is not None:
            writer.writerow(row)
        last_recorded = row[0]

    try:
        d = stepper.diag(h)
        if not restored:
            record(_diag_row(step_no, t, 0.0, d, rejections), d)
        dt_used = 0.0
        reason = None
        if d.res_sup <= params.residual_sup_tol:
            reason = CONVERGED
        while reason is None:
            if t >= params.max_time or step_no >= params.max_steps:
                reason = BUDGET
                break
            dt_try = min(dt, params.dt_bound * params.dt_initial)
            if params.adaptive and d.lam_cfl > 0.0:
                dt_try = min(dt_try,
                             params.dt_safety * stepper.k.RK4_REAL_AXIS / d.lam_cfl)
            if dt_try < params.dt_min:
                reason = STEP_FAILURE
                break
            y2, d_new, err = stepper.attempt(h, dt_try, d.j)
            if y2 is None:
                rejections += 1
                hold = params.hold_steps
                dt = 0.5 * dt_try
                if dt < params.dt_min:
                    reason = STEP_FAILURE
                    break
                continue
            over = d_new.j - (d.j + 10.0 * dt_try * dt_try + params.j_allowance)
            if over > 0.0:
                trace.j_violations += 1
                if over > trace.worst_j_overshoot:
                    trace.worst_j_overshoot = over
            h = y2
            t += dt_try
            step_no += 1
            d = d_new
            dt_used = dt_try
            if hold > 0:
                hold -= 1
                dt = dt_try
            elif params.adaptive:
                if err > 0.0:
                    target = params.error_tol * max(abs(d.h_max), abs(d.h_min))
                    grow = min(params.dt_growth, 0.9 * (target / err) ** 0.2)
                    grow = max(grow, 0.5)
                else:
                    grow = params.dt_growth
                dt = dt_try * grow
            else:
                dt = dt_try
            if step_no % trace_stride == 0:
                record(_diag_row(step_no, t, dt_try, d, rejections), d)
            if d.res_sup <= params.residual_sup_tol:
                reason = CONVERGED
            if (checkpoint_path and params.snapshot_interval > 0
                    and step_no % params.snapshot_interval == 0):
                write_checkpoint(checkpoint_path,
                                 FlowState(grid, np.asarray(h).reshape(grid.nnodes),
                                           t, step_no, dt, rejections, hold))
        if last_recorded != step_no:
            record(_diag_row(step_no, t, dt_used, d, rejections), d)
    finally:
        if writer is not None:
            writer.close()

    final = FlowState(grid, np.asarray(h).reshape(grid.nnodes), t, step_no,
                      dt, rejections, hold)
    if checkpoint_path:
        write_checkpoint(checkpoint_path, final)
    return final, trace, reason


def run(config):
    """Config-driven entry: build the problem from a SolverConfig and
    integrate.  Returns (FlowState, FlowTrace, reason)."""
    from . import config as configmod
    grid, pair, start = configmod.build_problem(config)
    return run_flow(grid, pair, start, config.flow_params(),
                    trace_path=config.trace_path,
                    checkpoint_path=config.checkpoint_path,
                    trace_stride=config.trace_stride)
