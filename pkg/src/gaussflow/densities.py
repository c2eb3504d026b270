"""Density pairs (f, g) and the subspace mass conditions.

f lives on the normal sphere (the grid of the support field), g on the
radial sphere.  Solvability requires mass balance and, for every
spherical convex set A not the whole sphere,

    integral_{A} f < mass - integral_{A*} g      (A* the polar set)

equivalently margin(A) = mass - int_f(A) - int_g(A*) > 0 with strict
inequality; constant pairs give the classical closed-form margins.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import grid as gridmod
from .grid import ScalarField, SphericalConvexSet, polar_set
from .interpolate import BilinearSphere, eval_periodic_cubic, periodic_cubic_coeffs

TWO_PI = 2.0 * math.pi


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DensityPair:
    grid: object
    f: ScalarField
    g: ScalarField
    mass_f: float
    mass_g: float
    g_const: Optional[float]          # value when g is a constant field
    g_coeffs: Optional[np.ndarray]    # n=2 periodic cubic coefficients of g
    g_interp: Optional[BilinearSphere]  # n=3 interpolant of g

    @property
    def mass_gap(self) -> float:
        return abs(self.mass_f - self.mass_g)

    def g_at_angles(self, angles):
        """Evaluate g at off-node directions.

        n=2: angles is an array of polar angles.
        n=3: angles is a (theta, phi) pair of arrays.
        """
        if self.g_const is not None:
            shape = np.shape(angles[0] if self.grid.dim == 3 else angles)
            return np.full(shape, self.g_const) if shape else self.g_const
        if self.grid.dim == 2:
            return eval_periodic_cubic(self.g_coeffs, self.grid.dtheta, angles)
        return self.g_interp(angles[0], angles[1])


def _const_value(values: np.ndarray) -> Optional[float]:
    v0 = values.flat[0]
    return float(v0) if np.all(values == v0) else None


def _eval_density(spec, g: gridmod.SphereGrid) -> np.ndarray:
    """Build density values from a preset description.

    Accepted forms:
      ("constant", c)
      ("linear", a, d)        1 + a*<x, d>, |a| < 1
      ("expbump", a, d)       exp(a*<x, d>)
      an ndarray of node values, a ScalarField, or a callable(nodes)->values
    """
    if isinstance(spec, ScalarField):
        if spec.grid is not g and spec.grid.shape != g.shape:
            raise DensityError("density field lives on a different grid")
        return spec.values.copy()
    if callable(spec):
        return np.asarray(spec(g.nodes), dtype=float).reshape(g.nnodes)
    if isinstance(spec, np.ndarray):
        return np.asarray(spec, dtype=float).reshape(g.nnodes).copy()
    kind = spec[0]
    if kind == "constant":
        c = float(spec[1])
        if c <= 0.0:
            raise DensityError("constant density must be positive")
        return np.full(g.nnodes, c)
    if kind == "linear":
        a = float(spec[1])
        d = np.asarray(spec[2], dtype=float)
        if abs(a) >= 1.0:
            raise DensityError("linear density needs |a| < 1 for positivity")
        d = d / np.linalg.norm(d)
        return 1.0 + a * (g.nodes @ d)
    if kind == "expbump":
        a = float(spec[1])
        d = np.asarray(spec[2], dtype=float)
        d = d / np.linalg.norm(d)
        return np.exp(a * (g.nodes @ d))
    raise DensityError("unknown density preset %r" % (kind,))


def make_density_pair(grid: gridmod.SphereGrid, f_spec, g_spec,
                      normalize: bool = True) -> DensityPair:
    """Build a positive pair; normalize rescales g to match the mass of f."""
    fv = _eval_density(f_spec, grid)
    gv = _eval_density(g_spec, grid)
    if fv.min() <= 0.0 or gv.min() <= 0.0:
        raise DensityError("densities must be positive everywhere")
    mass_f = gridmod.integrate(ScalarField(grid, fv), grid)
    mass_g = gridmod.integrate(ScalarField(grid, gv), grid)
    if normalize:
        gv = gv * (mass_f / mass_g)
        mass_g = gridmod.integrate(ScalarField(grid, gv), grid)
    g_const = _const_value(gv)
    g_coeffs = None
    g_interp = None
    if g_const is None:
        if grid.dim == 2:
            g_coeffs = periodic_cubic_coeffs(gv, grid.dtheta)
        else:
            g_interp = BilinearSphere.from_grid(grid, gv)
    return DensityPair(grid, ScalarField(grid, fv), ScalarField(grid, gv),
                       mass_f, mass_g, g_const, g_coeffs, g_interp)


# ---------------------------------------------------------------------------
# fractional trapezoid prefix integrals on the circle


def _prefix_trapezoid(values: np.ndarray, dtheta: float) -> np.ndarray:
    """P[k] = trapezoid integral of the periodic extension from node 0 to
    node k, for k = 0..2N (two periods so any arc is a difference)."""
    n = values.size
    v = np.concatenate([values, values, values[:1]])
    seg = 0.5 * dtheta * (v[:-1] + v[1:])
    out = np.empty(2 * n + 1)
    out[0] = 0.0
    np.cumsum(seg, out=out[1:])
    return out


def _frac_prefix(prefix: np.ndarray, values: np.ndarray, dtheta: float, pos):
    """Integral from node 0 to fractional node position pos (node units,
    0 <= pos <= 2N), trapezoid on the piecewise-linear interpolant."""
    n = values.size
    pos = np.asarray(pos, dtype=float)
    j = np.floor(pos).astype(int)
    j = np.clip(j, 0, 2 * n - 1)
    s = pos - j
    v0 = values[j % n]
    v1 = values[(j + 1) % n]
    return prefix[j] + dtheta * (s * v0 + 0.5 * s * s * (v1 - v0))


# ---------------------------------------------------------------------------
# Aleksandrov-type margin sweep


@dataclass(frozen=True)
class AleksandrovSettings:
    n3_center_stride: int = 4      # node stride for cap centers (theta and phi)
    n3_angles: int = 12            # cap half-angle sweep count in (0, pi/2]
    n3_gl_order: int = 8           # Gauss-Legendre order in the polar angle
    n3_phi_points: int = 32        # azimuthal trapezoid points per ring


@dataclass
class AleksandrovReport:
    grid: object
    mass: float
    mass_gap: float
    worst_margin: float
    worst_set: SphericalConvexSet
    sets_tested: int
    rows: list = field(repr=False, default_factory=list)
    # each row: (set_kind, center_repr, angle, integral_f, integral_g_polar, margin)

    @property
    def ok(self) -> bool:
        return self.worst_margin > 0.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set_kind", "center", "angle",
                        "integral_f", "integral_g_polar", "margin"])
            for row in self.rows:
                w.writerow([row[0], row[1]] + [repr(float(x)) for x in row[2:]])


def _center_repr(grid_dim, center) -> str:
    if grid_dim == 2:
        return repr(float(center))
    return ";".join(repr(float(c)) for c in np.asarray(center))


def _check_aleksandrov_n2(pair: DensityPair, collect_rows: bool) -> AleksandrovReport:
    g = pair.grid
    n = g.nnodes
    dth = g.dtheta
    fv = pair.f.values
    gv = pair.g.values
    pf = _prefix_trapezoid(fv, dth)
    pg = _prefix_trapezoid(gv, dth)
    mass = pair.mass_f
    rows = []
    worst = math.inf
    worst_set = None
    sets = 0
    idx = np.arange(n)
    for span in range(1, n // 2 + 1):
        # arcs [theta_i, theta_{i+span}], half-width span*dth/2 <= pi/2
        int_f = pf[idx + span] - pf[idx]
        # polar arc [theta_{i+span} + pi/2, theta_i + 3pi/2], in node units
        p0 = idx + span + 0.25 * n
        p1 = idx + 0.75 * n
        int_g = _frac_prefix(pg, gv, dth, p1) - _frac_prefix(pg, gv, dth, p0)
        margins = mass - int_f - int_g
        half = 0.5 * span * dth
        k = int(np.argmin(margins))
        if margins[k] < worst:
            worst = float(margins[k])
            center = (g.theta[k] + half) % TWO_PI
            worst_set = SphericalConvexSet("arc", float(center), half)
        sets += n
        if collect_rows:
            centers = (g.theta + half) % TWO_PI
            for i in range(n):
                rows.append(("arc", _center_repr(2, centers[i]), half,
                             float(int_f[i]), float(int_g[i]), float(margins[i])))
    return AleksandrovReport(g, mass, pair.mass_gap, worst, worst_set, sets, rows)


def _gl_cap_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _cap_frame(center: np.ndarray):
    """Orthonormal (e1, e2) completing the cap axis."""
    c = center / np.linalg.norm(center)
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(c, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return c, e1, e2


def _cap_integral(values_interp, center, alpha, gl, nphi):
    """Integral of a node field over the cap {<x,c> >= cos(alpha)} by
    Gauss-Legendre in the polar angle and trapezoid in azimuth."""
    c, e1, e2 = _cap_frame(center)
    x, w = gl
    # substitute t = cos(beta), beta in [0, alpha]
    t0 = math.cos(alpha)
    t = 0.5 * (t0 + 1.0) + 0.5 * (1.0 - t0) * x
    wt = 0.5 * (1.0 - t0) * w
    st = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    phi = np.arange(nphi) * (TWO_PI / nphi)
    cp, sp = np.cos(phi), np.sin(phi)
    # points (len(t), nphi, 3)
    pts = (t[:, None, None] * c[None, None, :]
           + (st[:, None] * cp[None, :])[:, :, None] * e1[None, None, :]
           + (st[:, None] * sp[None, :])[:, :, None] * e2[None, None, :])
    theta_p = np.arccos(np.clip(pts[:, :, 2], -1.0, 1.0))
    phi_p = np.arctan2(pts[:, :, 1], pts[:, :, 0]) % TWO_PI
    vals = values_interp(theta_p.ravel(), phi_p.ravel()).reshape(theta_p.shape)
    ring = vals.mean(axis=1) * TWO_PI
    return float(np.dot(wt, ring))


def _check_aleksandrov_n3(pair: DensityPair, st: AleksandrovSettings,
                          collect_rows: bool) -> AleksandrovReport:
    g = pair.grid
    nt, nph = g.shape
    f_interp = BilinearSphere.from_grid(g, pair.f.values)
    g_interp = BilinearSphere.from_grid(g, pair.g.values)
    gl = _gl_cap_rule(st.n3_gl_order)
    mass = pair.mass_f
    rows = []
    worst = math.inf
    worst_set = None
    sets = 0
    angles = [(k + 1) * (0.5 * math.pi / st.n3_angles) for k in range(st.n3_angles)]
    nodes2 = g.nodes.reshape(nt, nph, 3)
    for j in range(0, nt, st.n3_center_stride):
        for k in range(0, nph, st.n3_center_stride):
            center = nodes2[j, k]
            for alpha in angles:
                int_f = _cap_integral(f_interp, center, alpha, gl, st.n3_phi_points)
                int_g = _cap_integral(g_interp, -center, 0.5 * math.pi - alpha,
                                      gl, st.n3_phi_points) if alpha < 0.5 * math.pi else 0.0
                margin = mass - int_f - int_g
                sets += 1
                if collect_rows:
                    rows.append(("cap", _center_repr(3, center), alpha,
                                 int_f, int_g, margin))
                if margin < worst:
                    worst = margin
                    worst_set = SphericalConvexSet("cap", center.copy(), alpha)
    return AleksandrovReport(g, mass, pair.mass_gap, worst, worst_set, sets, rows)


def check_aleksandrov(pair: DensityPair,
                      settings: Optional[AleksandrovSettings] = None,
                      collect_rows: bool = True) -> AleksandrovReport:
    """Sweep spherical convex sets and report the worst mass margin.

    n=2: every arc with node endpoints and half-width in (0, pi/2].
    n=3: caps centered on a node subsample over an angle sweep.
    collect_rows=False skips per-set row assembly (advisory sweeps).
    """
    if pair.grid.dim == 2:
        return _check_aleksandrov_n2(pair, collect_rows)
    return _check_aleksandrov_n3(pair, settings or AleksandrovSettings(),
                                 collect_rows)


# ---------------------------------------------------------------------------
# functionals on the normal grid (change of variables from the radial sphere)


def _tau(geom, pair: DensityPair) -> np.ndarray:
    """Jacobian weight tau = g(u) h det(b) / rho^n pulling radial-sphere
    integrals back to the normal grid."""
    n = pair.grid.dim
    gu = pair.g_const
    if gu is None:
        gu = pair.g_at_angles(geom.u_angles)
    return gu * geom.h * geom.detb / geom.rho ** n


def functional_J(geom, pair: DensityPair) -> float:
    """Lyapunov functional integral f log h - integral g log rho, the second
    term pulled back to the normal grid."""
    w = pair.grid.weights
    t = _tau(geom, pair)
    vals = w * (pair.f.values * np.log(geom.h) - t * np.log(geom.rho))
    return math.fsum(vals.tolist())


def log_volume(geom, pair: DensityPair) -> float:
    """V_g = integral g log rho over the radial sphere, via change of
    variables; invariant along the flow."""
    w = pair.grid.weights
    vals = w * (_tau(geom, pair) * np.log(geom.rho))
    return math.fsum(vals.tolist())


# ---------------------------------------------------------------------------
# pushforward spot-check


def pushforward_check(geom, pair: DensityPair, sets, samples: int = 10000) -> float:
    """Worst gap |integral_A f - integral_{u(A)} g| over the given spherical
    convex sets; the Gauss image relation makes both sides equal in the limit.

    n=2 images are intervals of the monotone angle map; n=3 images are
    rasterized onto grid directions by dense sampling.
    """
    g = pair.grid
    if g.dim == 2:
        return _pushforward_n2(geom, pair, sets, samples)
    return _pushforward_n3(geom, pair, sets, samples)


def _pushforward_n2(geom, pair, sets, samples):
    g = pair.grid
    dth = g.dtheta
    n = g.nnodes
    fv, gv = pair.f.values, pair.g.values
    pf = _prefix_trapezoid(fv, dth)
    pg = _prefix_trapezoid(gv, dth)
    hco = periodic_cubic_coeffs(geom.h, dth)
    worst = 0.0
    for s in sets:
        c = float(s.center)
        a0, a1 = c - s.half_angle, c + s.half_angle
        th = np.linspace(a0, a1, samples)
        hv = eval_periodic_cubic(hco, dth, th)
        hp = eval_periodic_cubic(hco, dth, th, derivative=1)
        alpha = th + np.arctan2(hp, hv)
        lo, hi = float(alpha.min()), float(alpha.max())
        pos0 = (a0 % TWO_PI) / dth
        int_f = float(_frac_prefix(pf, fv, dth, pos0 + (a1 - a0) / dth)
                      - _frac_prefix(pf, fv, dth, pos0))
        posg = (lo % TWO_PI) / dth
        int_g = float(_frac_prefix(pg, gv, dth, posg + (hi - lo) / dth)
                      - _frac_prefix(pg, gv, dth, posg))
        worst = max(worst, abs(int_f - int_g))
    return worst


def _pushforward_n3(geom, pair, sets, samples):
    g = pair.grid
    nt, nph = g.shape
    x_interp = [BilinearSphere.from_grid(g, geom.X[:, d]) for d in range(3)]
    f_interp = BilinearSphere.from_grid(g, pair.f.values)
    gl = _gl_cap_rule(12)
    gv2 = pair.g.values.reshape(nt, nph)
    w2 = g.weights.reshape(nt, nph)
    worst = 0.0
    for s in sets:
        int_f = _cap_integral(f_interp, s.center, s.half_angle, gl, 64)
        # sunflower sampling of the cap
        k = np.arange(samples) + 0.5
        t0 = math.cos(s.half_angle)
        ct = 1.0 - (k / samples) * (1.0 - t0)
        st_ = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
        ang = k * math.pi * (3.0 - math.sqrt(5.0))
        c, e1, e2 = _cap_frame(s.center)
        pts = (ct[:, None] * c[None, :]
               + (st_ * np.cos(ang))[:, None] * e1[None, :]
               + (st_ * np.sin(ang))[:, None] * e2[None, :])
        tp = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
        pp = np.arctan2(pts[:, 1], pts[:, 0]) % TWO_PI
        xs = np.stack([ip(tp, pp) for ip in x_interp], axis=1)
        us = xs / np.linalg.norm(xs, axis=1, keepdims=True)
        tu = np.arccos(np.clip(us[:, 2], -1.0, 1.0))
        pu = np.arctan2(us[:, 1], us[:, 0]) % TWO_PI
        # nearest-direction rasterization
        j = np.clip(np.round(tu / g.dtheta - 0.5).astype(int), 0, nt - 1)
        kk = np.round(pu / g.dphi).astype(int) % nph
        mask = np.zeros((nt, nph), dtype=bool)
        mask[j, kk] = True
        int_g = float((w2[mask] * gv2[mask]).sum())
        worst = max(worst, abs(int_f - int_g))
    return worst
