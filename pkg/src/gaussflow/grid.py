"""Grids on S^1 and S^2: nodes, quadrature, covariant derivatives, convex test sets.

n=2: N equispaced angles theta_i = 2*pi*i/N, periodic trapezoid weights.
n=3: latitude-longitude grid with half-cell offset from the poles,
     theta_j = (j+1/2)*pi/ntheta, phi_k = 2*pi*k/nphi.  No node sits on a
     pole; pole-adjacent stencils use cross-pole continuation
     h(-theta, phi) = h(theta, phi+pi), which requires nphi even.
     Quadrature weights are exact cell areas
     dphi*(cos(theta_j - dtheta/2) - cos(theta_j + dtheta/2)); they
     telescope so the total is 4*pi to rounding.

Derivatives are returned in the fixed per-node orthonormal tangent frame
(e_theta for n=2; (e_theta, e_phi) for n=3).  n=2 stencils are 4th-order
central differences; n=3 stencils are 2nd-order.  Stencils are written as
differences from the center value so constant fields map to exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SphereGrid:
    """Discretization of S^{n-1} with quadrature and stencil metadata."""

    dim: int                 # ambient dimension, 2 or 3
    shape: tuple             # (N,) or (ntheta, nphi)
    nodes: np.ndarray        # (nnodes, dim) unit vectors, fixed order
    weights: np.ndarray      # (nnodes,) positive quadrature weights
    # angular metadata
    theta: np.ndarray        # n=2: node angles (N,); n=3: colatitudes (ntheta,)
    phi: np.ndarray | None   # n=3 only: azimuths (nphi,)
    dtheta: float
    dphi: float | None

    @property
    def nnodes(self):
        return self.nodes.shape[0]

    @property
    def res_label(self):
        if self.dim == 2:
            return str(self.shape[0])
        return "%dx%d" % self.shape

    # --- n=3 helpers -------------------------------------------------
    def to2d(self, values):
        return np.asarray(values).reshape(self.shape)

    def sin_theta(self):
        return np.sin(self.theta)

    def cos_theta(self):
        return np.cos(self.theta)


@dataclass(frozen=True)
class ScalarField:
    """Per-node real values bound to a grid (h, f, g, K, residual, ...)."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float).ravel())
        object.__setattr__(self, "values", v)
        if v.shape[0] != self.grid.nnodes:
            raise GridError(
                "field has %d values for a grid of %d nodes" % (v.shape[0], self.grid.nnodes))
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")


def build_grid(dim, resolution):
    """Build a grid on S^{n-1}.  resolution: int N (dim=2) or (ntheta, nphi)."""
    if dim == 2:
        n = int(resolution)
        # construction is defined down to N=4; solver configs require N >= 8
        if n < 4:
            raise GridError("n=2 grid needs at least 4 nodes, got %d" % n)
        dth = 2.0 * math.pi / n
        theta = np.arange(n) * dth
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(n, dth)
        return SphereGrid(2, (n,), nodes, weights, theta, None, dth, None)
    if dim == 3:
        try:
            ntheta, nphi = (int(r) for r in resolution)
        except TypeError:
            raise GridError("n=3 resolution must be (ntheta, nphi)") from None
        if ntheta < 8 or nphi < 8:
            raise GridError("n=3 grid needs at least 8 nodes per direction")
        if nphi % 2:
            raise GridError("nphi must be even for cross-pole continuation")
        dth = math.pi / ntheta
        dph = 2.0 * math.pi / nphi
        theta = (np.arange(ntheta) + 0.5) * dth
        phi = np.arange(nphi) * dph
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        nodes = np.empty((ntheta * nphi, 3))
        nodes[:, 0] = np.outer(st, cp).ravel()
        nodes[:, 1] = np.outer(st, sp).ravel()
        nodes[:, 2] = np.repeat(ct, nphi)
        # exact latitude-band areas; rows telescope to 2, total 4*pi
        edges = np.cos(np.arange(ntheta + 1) * dth)
        band = edges[:-1] - edges[1:]
        weights = np.repeat(band * dph, nphi)
        return SphereGrid(3, (ntheta, nphi), nodes, weights, theta, phi, dth, dph)
    raise GridError("dim must be 2 or 3, got %r" % (dim,))


def _check_field(field, grid):
    if field.grid is not grid and field.grid.shape != grid.shape:
        raise GridError("field grid does not match")
    return field.values


# --- n=2 stencils (4th-order central, periodic) -----------------------

def d1_periodic(values, dth):
    v = values
    p1, m1 = np.roll(v, -1), np.roll(v, 1)
    p2, m2 = np.roll(v, -2), np.roll(v, 2)
    return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * dth)


def d2_periodic(values, dth):
    v = values
    p1, m1 = np.roll(v, -1), np.roll(v, 1)
    p2, m2 = np.roll(v, -2), np.roll(v, 2)
    return (16.0 * ((p1 - v) + (m1 - v)) - ((p2 - v) + (m2 - v))) / (12.0 * dth * dth)


# --- n=3 stencils (2nd-order, cross-pole continuation) -----------------

def _pole_row(v2d, j, shift):
    # ghost row j<0 or j>=ntheta: reflect through the pole, phi -> phi+pi
    return np.roll(v2d[j], shift)


def _theta_neighbors(v2d):
    """Rows shifted by +-1 in theta with cross-pole ghosts.  v2d: (nt, np)."""
    nt, nph = v2d.shape
    half = nph // 2
    up = np.empty_like(v2d)    # value at j+1
    dn = np.empty_like(v2d)    # value at j-1
    up[:-1] = v2d[1:]
    up[-1] = _pole_row(v2d, nt - 1, half)
    dn[1:] = v2d[:-1]
    dn[0] = _pole_row(v2d, 0, half)
    return dn, up


def d_theta(v2d, dth):
    dn, up = _theta_neighbors(v2d)
    return (up - dn) / (2.0 * dth)


def d_theta2(v2d, dth):
    dn, up = _theta_neighbors(v2d)
    return ((up - v2d) + (dn - v2d)) / (dth * dth)


def d_phi(v2d, dph):
    return (np.roll(v2d, -1, axis=1) - np.roll(v2d, 1, axis=1)) / (2.0 * dph)


def d_phi2(v2d, dph):
    p1 = np.roll(v2d, -1, axis=1)
    m1 = np.roll(v2d, 1, axis=1)
    return ((p1 - v2d) + (m1 - v2d)) / (dph * dph)


def d_theta_phi(v2d, dth, dph):
    return d_theta(d_phi(v2d, dph), dth)


# --- covariant operators ----------------------------------------------

def gradient_components(field, grid):
    """Covariant gradient in the orthonormal frame.

    n=2: (N,1) array [h'].  n=3: (nnodes,2) array [h_theta, h_phi/sin(theta)].
    """
    v = _check_field(field, grid)
    if grid.dim == 2:
        return d1_periodic(v, grid.dtheta)[:, None]
    v2 = grid.to2d(v)
    st = grid.sin_theta()[:, None]
    gt = d_theta(v2, grid.dtheta)
    gp = d_phi(v2, grid.dphi) / st
    return np.column_stack([gt.ravel(), gp.ravel()])


def hessian_components(field, grid):
    """Covariant Hessian in the orthonormal frame.

    n=2: (N,1,1).  n=3: (nnodes,2,2) symmetric, entries
      H_tt = h_theta_theta
      H_tp = (h_theta_phi - cot(theta) h_phi)/sin(theta)
      H_pp = h_phi_phi/sin(theta)^2 + cot(theta) h_theta
    """
    v = _check_field(field, grid)
    if grid.dim == 2:
        return d2_periodic(v, grid.dtheta)[:, None, None]
    v2 = grid.to2d(v)
    st = grid.sin_theta()[:, None]
    cot = (grid.cos_theta() / grid.sin_theta())[:, None]
    htt = d_theta2(v2, grid.dtheta)
    hpp = d_phi2(v2, grid.dphi)
    htp = d_theta_phi(v2, grid.dtheta, grid.dphi)
    hp = d_phi(v2, grid.dphi)
    ht = d_theta(v2, grid.dtheta)
    out = np.empty((grid.nnodes, 2, 2))
    out[:, 0, 0] = htt.ravel()
    tp = ((htp - cot * hp) / st).ravel()
    out[:, 0, 1] = tp
    out[:, 1, 0] = tp
    out[:, 1, 1] = (hpp / (st * st) + cot * ht).ravel()
    return out


def tangent_frame(grid):
    """Per-node orthonormal tangent frame as ambient vectors.

    n=2: (N,1,2) with e_theta = (-sin, cos).
    n=3: (nnodes,2,3) with e_theta, e_phi.
    """
    if grid.dim == 2:
        th = grid.theta
        e = np.column_stack([-np.sin(th), np.cos(th)])
        return e[:, None, :]
    nt, npv = grid.shape
    st, ct = grid.sin_theta(), grid.cos_theta()
    sp, cp = np.sin(grid.phi), np.cos(grid.phi)
    et = np.empty((nt, npv, 3))
    et[:, :, 0] = np.outer(ct, cp)
    et[:, :, 1] = np.outer(ct, sp)
    et[:, :, 2] = -st[:, None]
    ep = np.empty((nt, npv, 3))
    ep[:, :, 0] = -sp[None, :]
    ep[:, :, 1] = cp[None, :]
    ep[:, :, 2] = 0.0
    return np.stack([et.reshape(-1, 3), ep.reshape(-1, 3)], axis=1)


def gradient(field, grid):
    """Ambient-space covariant gradient vectors, (nnodes, dim)."""
    comps = gradient_components(field, grid)
    frame = tangent_frame(grid)
    return np.einsum("nk,nkd->nd", comps, frame)


def hessian(field, grid):
    """Alias for hessian_components (frame-matrix form)."""
    return hessian_components(field, grid)


def integrate(field, grid=None):
    """Quadrature sum(w_i v_i) with compensated, order-fixed summation."""
    if grid is None:
        grid = field.grid
    v = _check_field(field, grid) if isinstance(field, ScalarField) else np.asarray(field)
    if not np.all(np.isfinite(v)):
        raise GridError("integrate: non-finite values")
    return math.fsum((grid.weights * v.ravel()).tolist())


# --- spherically convex test sets --------------------------------------

@dataclass(frozen=True)
class SphericalConvexSet:
    """Arc on S^1 (kind='arc') or spherical cap on S^2 (kind='cap').

    center: angle in radians (arc) or unit vector (cap).
    half_angle: half-width / opening angle, in (0, pi/2].
    """

    kind: str
    center: object
    half_angle: float

    def __post_init__(self):
        if self.kind not in ("arc", "cap"):
            raise ValueError("kind must be 'arc' or 'cap'")
        if not 0.0 < self.half_angle <= math.pi / 2.0 + 1e-15:
            raise ValueError("half-width must lie in (0, pi/2]")
        if self.kind == "cap":
            c = np.asarray(self.center, dtype=float)
            if c.shape != (3,) or abs(np.linalg.norm(c) - 1.0) > 1e-12:
                raise ValueError("cap center must be a unit 3-vector")
            object.__setattr__(self, "center", c)
        else:
            object.__setattr__(self, "center", float(np.ravel(self.center)[0]))


def polar_set(omega):
    """Polar set omega* = {v : <u,v> <= 0 for all u in omega}.

    arc(c, beta)* = arc(c+pi, pi/2-beta); cap(c, t)* = cap(-c, pi/2-t).
    A half-width of exactly pi/2 gives a degenerate zero-width polar; it is
    returned with half_angle = 0 (built outside the type invariant) and
    carries zero measure in every integral.
    """
    rest = math.pi / 2.0 - omega.half_angle
    if omega.kind == "arc":
        c = (omega.center + math.pi) % (2.0 * math.pi)
        return _make_set("arc", c, rest)
    return _make_set("cap", -omega.center, rest)


def _make_set(kind, center, half_angle):
    # bypass the (0, pi/2] invariant for degenerate polars of hemispheres
    s = object.__new__(SphericalConvexSet)
    object.__setattr__(s, "kind", kind)
    object.__setattr__(s, "center", center)
    object.__setattr__(s, "half_angle", half_angle)
    return s


def membership(omega, point):
    """Closed-set membership: angular distance to center <= half_angle."""
    if omega.kind == "arc":
        ang = math.atan2(point[1], point[0])
        d = abs(math.remainder(ang - omega.center, 2.0 * math.pi))
    else:
        p = np.asarray(point, dtype=float)
        d = math.acos(min(1.0, max(-1.0, float(np.dot(p, omega.center)))))
    return d <= omega.half_angle + 1e-14
