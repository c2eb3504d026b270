"""Pointwise geometry of a convex body from its support function.

All quantities live on the grid nodes x_i:
    gradh = covariant gradient of h (ambient vectors)
    b     = hessian(h) + h*I in the orthonormal tangent frame
            (matrix of principal curvature radii)
    K     = 1/det(b)   (Gauss curvature)
    X     = gradh + h*x   (boundary point with outer normal x)
    rho   = |X| = sqrt(h^2 + |gradh|^2)
    u     = X/rho      (radial direction of the boundary point)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .grid import ScalarField


class ConvexityViolation(ValueError):
    pass


class NonPositiveSupport(ValueError):
    pass


class OriginCollision(ValueError):
    pass


@dataclass(frozen=True)
class BodyGeometry:
    grid: object
    h: np.ndarray            # (n,)
    grad_comps: np.ndarray   # (n, dim-1) frame components of grad h
    gradh: np.ndarray        # (n, dim) ambient vectors
    b: np.ndarray            # (n, dim-1, dim-1)
    detb: np.ndarray
    K: np.ndarray
    X: np.ndarray            # (n, dim)
    rho: np.ndarray
    u: np.ndarray            # (n, dim) unit radial directions
    eig_min: np.ndarray      # per-node min eigenvalue of b
    eig_max: np.ndarray

    @property
    def u_angles(self):
        """n=2: angles of u. n=3: (theta_u, phi_u)."""
        if self.grid.dim == 2:
            return np.arctan2(self.u[:, 1], self.u[:, 0]) % (2.0 * math.pi)
        xy = np.hypot(self.u[:, 0], self.u[:, 1])
        return (np.arctan2(xy, self.u[:, 2]),
                np.arctan2(self.u[:, 1], self.u[:, 0]) % (2.0 * math.pi))


def _b_eigs(b):
    if b.shape[1] == 1:
        e = b[:, 0, 0]
        return e, e
    btt, btp, bpp = b[:, 0, 0], b[:, 0, 1], b[:, 1, 1]
    mean = 0.5 * (btt + bpp)
    disc = np.sqrt((0.5 * (btt - bpp)) ** 2 + btp * btp)
    return mean - disc, mean + disc


def derive_geometry(h_field, check=True):
    """Compute the full BodyGeometry of a support field.

    Raises NonPositiveSupport / ConvexityViolation when check is true.
    """
    g = h_field.grid
    h = h_field.values
    if check and h.min() <= 0.0:
        raise NonPositiveSupport("support function must be positive, min=%g" % h.min())
    comps = gridmod.gradient_components(h_field, g)
    hess = gridmod.hessian_components(h_field, g)
    d = g.dim - 1
    b = hess + h[:, None, None] * np.eye(d)[None, :, :]
    eig_min, eig_max = _b_eigs(b)
    if check and eig_min.min() <= 0.0:
        raise ConvexityViolation("min eigenvalue of grad^2 h + h I is %g" % eig_min.min())
    if d == 1:
        detb = b[:, 0, 0].copy()
    else:
        detb = b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]
    K = 1.0 / detb
    frame = gridmod.tangent_frame(g)
    gradh = np.einsum("nk,nkd->nd", comps, frame)
    grad2 = np.einsum("nk,nk->n", comps, comps)
    rho = np.sqrt(h * h + grad2)
    X = gradh + h[:, None] * g.nodes
    u = X / rho[:, None]
    return BodyGeometry(g, h, comps, gradh, b, detb, K, X, rho, u, eig_min, eig_max)


def convexity_check(h_field):
    """Min over nodes of min-eig(grad^2 h + h I); positive iff uniformly convex."""
    geom_b = gridmod.hessian_components(h_field, h_field.grid)
    d = h_field.grid.dim - 1
    b = geom_b + h_field.values[:, None, None] * np.eye(d)[None, :, :]
    eig_min, _ = _b_eigs(b)
    return float(eig_min.min())


def radial_from_support(h_field, directions=None):
    """Radial function by the support-plane minimum
    rho(u) = min over nodes x with <x,u> > 0 of h(x)/<x,u>.

    directions: None (use the field's own grid), a SphereGrid, or an
    (m, dim) array of unit vectors.  Returns a ScalarField when the result
    lives on a grid, else a plain array.
    """
    g = h_field.grid
    h = h_field.values
    if directions is None:
        dirs, out_grid = g.nodes, g
    elif hasattr(directions, "nodes"):
        dirs, out_grid = directions.nodes, directions
    else:
        dirs, out_grid = np.asarray(directions, dtype=float), None
    m = dirs.shape[0]
    rho = np.empty(m)
    chunk = max(1, int(4e6) // max(1, g.nnodes))
    for s in range(0, m, chunk):
        dots = dirs[s:s + chunk] @ g.nodes.T
        ratio = np.where(dots > 0.0, h[None, :] / np.where(dots > 0.0, dots, 1.0), np.inf)
        rho[s:s + chunk] = ratio.min(axis=1)
    if not np.all(np.isfinite(rho)):
        raise RuntimeError("radial_from_support: direction with no supporting node")
    if out_grid is not None:
        return ScalarField(out_grid, rho)
    return rho


def polar_support(h_field, directions=None):
    """Support function of the polar body on the direction grid:
    h_{K*}(u) = 1/rho_K(u); the pairing satisfies rho_{K*} = 1/h_K."""
    r = radial_from_support(h_field, directions)
    if isinstance(r, ScalarField):
        return ScalarField(r.grid, 1.0 / r.values)
    return 1.0 / r
