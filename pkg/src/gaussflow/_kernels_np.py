"""Pure-numpy evaluation kernels for the flow right-hand side and diagnostics.

This is the fallback backend and the semantic reference for the compiled
one: _accel implements the same contexts, the same arithmetic groupings and
the same reduction order.  Reductions here use math.fsum (exactly rounded);
the compiled backend uses Neumaier compensation, so integrals agree across
backends to ~1e-13 relative but are only bit-reproducible per backend.

Arithmetic groupings are chosen so constant spheres are exact fixed points
and the whole RHS is exactly 1-homogeneous under power-of-2 scaling:
    rhs  = h - (f * rho^n) / (g_u * det b)
    tau  = (g_u * h * det b) / rho^n
    R    = tau - f
    rho  = sqrt(h*h + |grad h|^2)
with stencils written as differences from the center value.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .interpolate import BilinearSphere, eval_periodic_cubic

RK4_REAL_AXIS = 2.785  # real-axis stability extent of classical RK4


class DiagOut(NamedTuple):
    """Scalar diagnostics of one state (trace row ingredients + controller)."""

    j: float
    vg: float
    dissipation: float      # integral of R^2/tau (== -dJ/dt up to grid error)
    mass_gap: float         # integral of tau minus mass_f (discrete balance drift)
    res_sup: float
    res_l2: float
    h_min: float
    h_max: float
    rho_min: float
    rho_max: float
    gradh_max: float
    k_max: float
    kappa_min: float
    min_b: float            # min over nodes of min-eig(b)
    lam_cfl: float          # frozen-coefficient stiffness estimate


def _fsum(a):
    return math.fsum(a.tolist())


class Context2D:
    """Precomputed per-(grid, pair) data for n=2 kernels."""

    dim = 2

    def __init__(self, grid, f, g_const, g_coeffs, mass_f):
        self.n = grid.shape[0]
        self.dtheta = grid.dtheta
        self.theta = grid.theta
        self.f = np.ascontiguousarray(f, dtype=float)
        self.g_const = g_const          # float or None
        self.g_coeffs = g_coeffs        # (N,4) or None
        self.mass_f = mass_f


class Context3D:
    """Precomputed per-(grid, pair) data for n=3 kernels."""

    dim = 3

    def __init__(self, grid, f, g_const, g_values2d, mass_f, amp_row):
        self.nt, self.np_ = grid.shape
        self.dtheta = grid.dtheta
        self.dphi = grid.dphi
        self.phi = grid.phi
        st = grid.sin_theta()
        self.sin_t = st
        self.cos_t = grid.cos_theta()
        self.inv_sin = 1.0 / st
        self.cot = self.cos_t / st
        self.f = np.ascontiguousarray(f, dtype=float).reshape(grid.shape)
        self.g_const = g_const
        self.g_values = None if g_values2d is None else np.ascontiguousarray(g_values2d)
        self.g_interp = (None if g_values2d is None
                         else BilinearSphere(self.g_values, grid.dtheta, grid.dphi))
        self.mass_f = mass_f
        self.w_row = grid.weights.reshape(grid.shape)[:, 0]
        # per-row max stiffness amplification of the (filtered) phi-phi operator
        if amp_row is None:
            amp_row = 4.0 / (st * grid.dphi) ** 2   # unfiltered worst case
        self.amp_row = np.ascontiguousarray(amp_row, dtype=float)


def make_context(grid, f_values, g_const, g_interp_data, mass_f, amp_row=None):
    if grid.dim == 2:
        return Context2D(grid, f_values, g_const, g_interp_data, mass_f)
    return Context3D(grid, f_values, g_const, g_interp_data, mass_f, amp_row)


# --- n=2 ----------------------------------------------------------------

def _parts_n2(ctx, h):
    dth = ctx.dtheta
    p1, m1 = np.roll(h, -1), np.roll(h, 1)
    p2, m2 = np.roll(h, -2), np.roll(h, 2)
    hp = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * dth)
    b = (16.0 * ((p1 - h) + (m1 - h)) - ((p2 - h) + (m2 - h))) / (12.0 * dth * dth) + h
    rho2 = h * h + hp * hp
    return hp, b, rho2


def _gu_n2(ctx, h, hp):
    if ctx.g_const is not None:
        return ctx.g_const
    alpha = ctx.theta + np.arctan2(hp, h)
    return eval_periodic_cubic(ctx.g_coeffs, ctx.dtheta, alpha)


def eval_rhs_n2(ctx, h):
    hp, b, rho2 = _parts_n2(ctx, h)
    min_b = float(b.min())
    if min_b <= 0.0 or h.min() <= 0.0:
        return None, min_b
    gu = _gu_n2(ctx, h, hp)
    rhs = h - (ctx.f * rho2) / (gu * b)
    return rhs, min_b


def eval_diag_n2(ctx, h):
    dth = ctx.dtheta
    hp, b, rho2 = _parts_n2(ctx, h)
    gu = _gu_n2(ctx, h, hp)
    rho = np.sqrt(rho2)
    tau = (gu * h * b) / rho2
    R = tau - ctx.f
    logrho = 0.5 * np.log(rho2)
    j = dth * _fsum(ctx.f * np.log(h) - tau * logrho)
    vg = dth * _fsum(tau * logrho)
    diss = dth * _fsum(R * R / tau)
    mass_gap = dth * _fsum(tau) - ctx.mass_f
    res_sup = float(np.max(np.abs(R)))
    res_l2 = math.sqrt(dth * _fsum(R * R))
    bmin = float(b.min())
    bmax = float(b.max())
    lam = (16.0 / 3.0) / (dth * dth) * float(np.max((ctx.f * rho2 / gu) / (b * b)))
    return DiagOut(j, vg, diss, mass_gap, res_sup, res_l2,
                   float(h.min()), float(h.max()),
                   float(np.sqrt(rho2.min())), float(np.sqrt(rho2.max())),
                   float(np.max(np.abs(hp))), 1.0 / bmin, 1.0 / bmax, bmin, lam)


def residual_n2(ctx, h):
    hp, b, rho2 = _parts_n2(ctx, h)
    gu = _gu_n2(ctx, h, hp)
    return (gu * h * b) / rho2 - ctx.f


# --- n=3 ----------------------------------------------------------------

def _neighbors_theta(v):
    nt, npv = v.shape
    half = npv // 2
    dn = np.empty_like(v)
    up = np.empty_like(v)
    up[:-1] = v[1:]
    up[-1] = np.roll(v[-1], half)
    dn[1:] = v[:-1]
    dn[0] = np.roll(v[0], half)
    return dn, up


def _parts_n3(ctx, h):
    """Returns (gt, gp, btt, btp, bpp, detb, rho2).  h: (nt, nphi)."""
    dth, dph = ctx.dtheta, ctx.dphi
    inv_sin = ctx.inv_sin[:, None]
    cot = ctx.cot[:, None]
    dn, up = _neighbors_theta(h)
    ht = (up - dn) / (2.0 * dth)
    htt = ((up - h) + (dn - h)) / (dth * dth)
    p1 = np.roll(h, -1, axis=1)
    m1 = np.roll(h, 1, axis=1)
    hph = (p1 - m1) / (2.0 * dph)
    hpp = ((p1 - h) + (m1 - h)) / (dph * dph)
    dnp, upp = _neighbors_theta(hph)
    htp = (upp - dnp) / (2.0 * dth)
    gt = ht
    gp = hph * inv_sin
    btt = htt + h
    btp = (htp - cot * hph) * inv_sin
    bpp = (hpp * inv_sin) * inv_sin + cot * ht + h
    detb = btt * bpp - btp * btp
    rho2 = h * h + (gt * gt + gp * gp)
    return gt, gp, btt, btp, bpp, detb, rho2


def _eig_bounds_n3(btt, btp, bpp):
    mean = 0.5 * (btt + bpp)
    disc = np.sqrt((0.5 * (btt - bpp)) ** 2 + btp * btp)
    return mean - disc, mean + disc


def _gu_n3(ctx, h, gt, gp):
    if ctx.g_const is not None:
        return ctx.g_const
    st = ctx.sin_t[:, None]
    ct = ctx.cos_t[:, None]
    x3 = -gt * st + h * ct
    xr = gt * ct + h * st
    theta_u = np.arctan2(np.sqrt(xr * xr + gp * gp), x3)
    phi_u = ctx.phi[None, :] + np.arctan2(gp, xr)
    return ctx.g_interp(theta_u, phi_u)


def eval_rhs_n3(ctx, h):
    gt, gp, btt, btp, bpp, detb, rho2 = _parts_n3(ctx, h)
    emin, _ = _eig_bounds_n3(btt, btp, bpp)
    min_b = float(emin.min())
    if min_b <= 0.0 or h.min() <= 0.0:
        return None, min_b
    gu = _gu_n3(ctx, h, gt, gp)
    rho = np.sqrt(rho2)
    rho3 = rho2 * rho
    rhs = h - (ctx.f * rho3) / (gu * detb)
    return rhs, min_b


def eval_diag_n3(ctx, h):
    gt, gp, btt, btp, bpp, detb, rho2 = _parts_n3(ctx, h)
    emin, emax = _eig_bounds_n3(btt, btp, bpp)
    gu = _gu_n3(ctx, h, gt, gp)
    rho = np.sqrt(rho2)
    rho3 = rho2 * rho
    tau = (gu * h * detb) / rho3
    R = tau - ctx.f
    logrho = 0.5 * np.log(rho2)
    w2 = ctx.w_row[:, None]
    j = _fsum((w2 * (ctx.f * np.log(h) - tau * logrho)).ravel())
    vg = _fsum((w2 * (tau * logrho)).ravel())
    diss = _fsum((w2 * (R * R / tau)).ravel())
    mass_gap = _fsum((w2 * tau).ravel()) - ctx.mass_f
    res_sup = float(np.max(np.abs(R)))
    res_l2 = math.sqrt(_fsum((w2 * (R * R)).ravel()))
    grad2 = gt * gt + gp * gp
    c_t = 4.0 / (ctx.dtheta * ctx.dtheta)
    lam_node = (ctx.f * rho3 / gu) / (detb * detb) * (bpp * c_t + btt * ctx.amp_row[:, None])
    lam = 1.15 * float(np.max(lam_node))
    return DiagOut(j, vg, diss, mass_gap, res_sup, res_l2,
                   float(h.min()), float(h.max()),
                   float(np.sqrt(rho2.min())), float(np.sqrt(rho2.max())),
                   float(np.sqrt(grad2.max())),
                   1.0 / float(detb.min()), 1.0 / float(emax.max()),
                   float(emin.min()), lam)


def residual_n3(ctx, h):
    gt, gp, btt, btp, bpp, detb, rho2 = _parts_n3(ctx, h)
    gu = _gu_n3(ctx, h, gt, gp)
    rho = np.sqrt(rho2)
    rho3 = rho2 * rho
    return (gu * h * detb) / rho3 - ctx.f


# --- dispatch -----------------------------------------------------------

def eval_rhs(ctx, h):
    return eval_rhs_n2(ctx, h) if ctx.dim == 2 else eval_rhs_n3(ctx, h)


def eval_diag(ctx, h):
    return eval_diag_n2(ctx, h) if ctx.dim == 2 else eval_diag_n3(ctx, h)


def residual_values(ctx, h):
    return residual_n2(ctx, h) if ctx.dim == 2 else residual_n3(ctx, h)
