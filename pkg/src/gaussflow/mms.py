"""Manufactured solutions and independent verification oracles.

Given a target body (support field) and a radial density g, the density

    f(x) = g(u(x)) * rho(x)^{-n} * h(x) * det b(x)

makes the target an exact stationary state.  Discrete manufacture
evaluates this with the production stencils (the target is then a fixed
point of the discrete flow up to interpolation of g); analytic
manufacture uses closed forms for the preset bodies, so recovery errors
measure pure discretization + stopping error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend as backendmod
from . import grid as gridmod
from .densities import DensityPair, make_density_pair, _eval_density
from .geometry import ConvexityViolation, NonPositiveSupport, derive_geometry
from .grid import ScalarField, SphereGrid
from .interpolate import BilinearSphere, eval_periodic_cubic, periodic_cubic_coeffs

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    h_target: ScalarField
    g: ScalarField
    f: ScalarField
    target_vg: float

    @property
    def grid(self) -> SphereGrid:
        return self.h_target.grid


# ---------------------------------------------------------------------------
# target presets


def preset_support(grid: SphereGrid, kind: str, params) -> ScalarField:
    """Body presets by support function.

    sphere r | ellipse a b | ellipsoid a b c | lpball p s1 .. s_dim
    (lpball: h = (sum (s_i |x_i|)^p)^(1/p), even p; near-degenerate
    curvature, for stress tests rather than accuracy studies).
    """
    p = [float(v) for v in params]
    x = grid.nodes
    if kind == "sphere":
        (r,) = p
        return ScalarField(grid, np.full(grid.nnodes, r))
    if kind == "ellipse":
        if grid.dim != 2:
            raise ValueError("ellipse preset is n=2")
        a, b = p
        return ScalarField(grid, np.sqrt((a * x[:, 0]) ** 2 + (b * x[:, 1]) ** 2))
    if kind == "ellipsoid":
        if grid.dim != 3:
            raise ValueError("ellipsoid preset is n=3")
        a, b, c = p
        return ScalarField(grid, np.sqrt((a * x[:, 0]) ** 2 + (b * x[:, 1]) ** 2
                                         + (c * x[:, 2]) ** 2))
    if kind == "lpball":
        pw = p[0]
        scales = p[1:] if len(p) > 1 else [1.0] * grid.dim
        if pw < 4.0 or int(pw) % 2:
            raise ValueError("lpball needs even p >= 4")
        if len(scales) != grid.dim:
            raise ValueError("lpball needs one scale per axis")
        acc = np.zeros(grid.nnodes)
        for i, s in enumerate(scales):
            acc += np.abs(s * x[:, i]) ** pw
        return ScalarField(grid, acc ** (1.0 / pw))
    raise ValueError("unknown body preset %r" % kind)


def analytic_ellipsoid_f(grid: SphereGrid, axes) -> ScalarField:
    """Closed-form manufactured f for an ellipse/ellipsoid target with
    g == 1:  f = (prod a_i)^2 / (sum a_i^4 x_i^2)^{n/2}."""
    axes = [float(a) for a in axes]
    if len(axes) != grid.dim:
        raise ValueError("need %d semi-axes" % grid.dim)
    x = grid.nodes
    den = np.zeros(grid.nnodes)
    for i, a in enumerate(axes):
        den += (a * a) ** 2 * x[:, i] * x[:, i]
    prod = 1.0
    for a in axes:
        prod *= a
    return ScalarField(grid, prod * prod / den ** (grid.dim / 2.0))


# ---------------------------------------------------------------------------
# manufacture


def manufacture_f(h_target: ScalarField, g_spec=("constant", 1.0)) -> ScalarField:
    """Discrete manufacture with the production stencils:
    f_i = g(u_i) rho_i^{-n} h_i det(b_i)."""
    grid = h_target.grid
    h = h_target.values
    if h.min() <= 0.0:
        raise NonPositiveSupport("target support function must be positive")
    gv = _eval_density(g_spec, grid)
    g_const = float(gv.flat[0]) if np.all(gv == gv.flat[0]) else None
    if g_const is None:
        gdata = periodic_cubic_coeffs(gv, grid.dtheta) if grid.dim == 2 \
            else gv.reshape(grid.shape)
    else:
        gdata = None
    _, kern = backendmod.get_kernels()
    zero_f = np.zeros(grid.shape if grid.dim == 3 else grid.nnodes)
    ctx = kern.make_context(grid, zero_f, g_const, gdata, 0.0, None)
    hk = h.reshape(grid.shape) if grid.dim == 3 else h
    _, min_b = kern.eval_rhs(ctx, hk)
    if min_b <= 0.0:
        raise ConvexityViolation("target not uniformly convex: min-eig(b) = %g"
                                 % min_b)
    tau = np.asarray(kern.residual_values(ctx, hk)).reshape(grid.nnodes)
    if tau.min() <= 0.0:
        raise ConvexityViolation("manufactured f not positive (min %g)" % tau.min())
    return ScalarField(grid, tau)


def manufacture_problem(grid: SphereGrid, kind: str, params,
                        g_spec=("constant", 1.0),
                        mode: str = "discrete") -> ManufacturedProblem:
    """Build a ManufacturedProblem from a preset target.

    mode "discrete": f from the production stencils (exact discrete fixed
    point).  mode "analytic": closed-form f (ellipse/ellipsoid/sphere with
    constant g only); the target then carries pure truncation residual.
    """
    h_target = preset_support(grid, kind, params)
    gv = _eval_density(g_spec, grid)
    if mode == "analytic":
        if not np.all(gv == gv.flat[0]):
            raise ValueError("analytic manufacture requires constant g")
        c = float(gv.flat[0])
        if kind == "sphere":
            f = ScalarField(grid, np.full(grid.nnodes, c))
        elif kind in ("ellipse", "ellipsoid"):
            f = ScalarField(grid, c * analytic_ellipsoid_f(grid, params).values)
        else:
            raise ValueError("no closed-form f for preset %r" % kind)
    elif mode == "discrete":
        f = manufacture_f(h_target, g_spec)
    else:
        raise ValueError("mode must be discrete or analytic")
    geom = derive_geometry(h_target)
    from .densities import log_volume
    pair_tmp = make_density_pair(grid, f.values, gv, normalize=True)
    vg = log_volume(geom, pair_tmp)
    name = "%s %s" % (kind, " ".join(repr(float(v)) for v in params))
    return ManufacturedProblem(name, h_target, ScalarField(grid, gv), f, vg)


def matched_ball(problem: ManufacturedProblem, pair: DensityPair) -> ScalarField:
    """Centered ball whose V_g matches the target's (the flow conserves V_g,
    so it converges onto the target's scale ray)."""
    r0 = math.exp(problem.target_vg / pair.mass_g)
    return ScalarField(problem.grid, np.full(problem.grid.nnodes, r0))


# ---------------------------------------------------------------------------
# error measures


def recovery_error(h_final: ScalarField, h_target: ScalarField,
                   pair: Optional[DensityPair] = None):
    """(sup_err, l2_err) after V_g alignment.

    The final field is rescaled by exp((V_g(target) - V_g(final))/mass_g)
    to quotient out the scale ray; pair defaults to g == 1 against f == 1.
    """
    grid = h_final.grid
    if grid.shape != h_target.grid.shape or grid.dim != h_target.grid.dim:
        raise ValueError("recovery_error: grids differ")
    if pair is None:
        pair = make_density_pair(grid, ("constant", 1.0), ("constant", 1.0))
    from .densities import log_volume
    vg_final = log_volume(derive_geometry(h_final), pair)
    vg_target = log_volume(derive_geometry(h_target), pair)
    scale = math.exp((vg_target - vg_final) / pair.mass_g)
    diff = scale * h_final.values - h_target.values
    sup_err = float(np.max(np.abs(diff)))
    l2_err = math.sqrt(math.fsum((grid.weights * diff * diff).tolist()))
    return sup_err, l2_err


def verify_change_of_variables(h_field: ScalarField, phi: ScalarField):
    """Check int phi(u(x)) h/(K rho^n) dx == int phi(u) du.

    Returns (lhs, rhs, gap); phi lives on the direction grid (same grid
    family as h) and is interpolated at the u-image of each node."""
    grid = h_field.grid
    geom = derive_geometry(h_field)
    jac = geom.h * geom.detb / geom.rho ** grid.dim
    if grid.dim == 2:
        co = periodic_cubic_coeffs(phi.values, grid.dtheta)
        phi_u = eval_periodic_cubic(co, grid.dtheta, geom.u_angles)
    else:
        interp = BilinearSphere.from_grid(grid, phi.values)
        tu, pu = geom.u_angles
        phi_u = interp(tu, pu)
    lhs = math.fsum((grid.weights * phi_u * jac).tolist())
    rhs = gridmod.integrate(phi, grid)
    return lhs, rhs, abs(lhs - rhs)
