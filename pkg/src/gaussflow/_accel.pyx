# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled evaluation kernels.

Semantics mirror gaussflow._kernels_np operation for operation: the same
expression groupings evaluated in the same order, compiled without FMA
contraction, so the arithmetic-only paths (rhs, residual, stability
estimate) reproduce the fallback bit for bit with constant g.  Reductions
use Neumaier compensation and match math.fsum to rounding, so integral
diagnostics agree across backends to ~1e-13 relative.

rk4_double_n2 fuses the step-doubled RK4 sweep for n=2 (where no filter
sits between stages); the produced states equal the driver-level numpy
composition bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, fabs, fmod, log, sqrt

from ._kernels_np import (RK4_REAL_AXIS, DiagOut, make_context,
                          Context2D, Context3D)

cnp.import_array()

cdef double TWO_PI = 6.283185307179586


# ---------------------------------------------------------------------------
# compensated reduction


cdef struct NSum:
    double s
    double c


cdef inline void nadd(NSum* a, double x):
    cdef double t = a.s + x
    if fabs(a.s) >= fabs(x):
        a.c += (a.s - t) + x
    else:
        a.c += (x - t) + a.s
    a.s = t


cdef inline double nval(NSum* a):
    return a.s + a.c


cdef inline double _mod2pi(double x):
    cdef double r = fmod(x, TWO_PI)
    if r != 0.0 and (x < 0.0):
        r += TWO_PI
    return r


# ---------------------------------------------------------------------------
# typed context views, cached on the context objects


cdef double[::1] _c1(obj):
    return np.ascontiguousarray(obj, dtype=np.float64)


cdef double[:, ::1] _c2(obj):
    return np.ascontiguousarray(obj, dtype=np.float64)


cdef class _View2:
    cdef int n
    cdef double dth
    cdef double[::1] theta
    cdef double[::1] f
    cdef bint gconst
    cdef double gval
    cdef double[:, ::1] gco
    cdef int gco_n
    cdef double mass_f
    cdef double last_minb
    cdef double[::1] hp, b, rho2, gu
    cdef double[::1] k1, k2, k3, k4, yt, ym

    def __init__(self, ctx):
        self.n = ctx.f.shape[0]
        self.dth = ctx.dtheta
        self.theta = _c1(ctx.theta)
        self.f = _c1(ctx.f)
        self.gconst = ctx.g_const is not None
        self.gval = ctx.g_const if self.gconst else 0.0
        co = ctx.g_coeffs if ctx.g_coeffs is not None else np.zeros((1, 4))
        self.gco = _c2(co)
        self.gco_n = self.gco.shape[0]
        self.mass_f = ctx.mass_f
        self.last_minb = 0.0
        n = self.n
        self.hp = np.empty(n)
        self.b = np.empty(n)
        self.rho2 = np.empty(n)
        self.gu = np.empty(n)
        self.k1 = np.empty(n)
        self.k2 = np.empty(n)
        self.k3 = np.empty(n)
        self.k4 = np.empty(n)
        self.yt = np.empty(n)
        self.ym = np.empty(n)


cdef class _View3:
    cdef int nt, nph
    cdef double dth, dph
    cdef double[::1] phi, sin_t, cos_t, inv_sin, cot, w_row, amp_row
    cdef double[:, ::1] f
    cdef bint gconst
    cdef double gval
    cdef double[:, ::1] gv
    cdef double mass_f
    cdef double last_minb
    cdef double[:, ::1] gt, gp, btt, btp, bpp, detb, rho2, gu

    def __init__(self, ctx):
        self.nt = ctx.nt
        self.nph = ctx.np_
        self.dth = ctx.dtheta
        self.dph = ctx.dphi
        self.phi = _c1(ctx.phi)
        self.sin_t = _c1(ctx.sin_t)
        self.cos_t = _c1(ctx.cos_t)
        self.inv_sin = _c1(ctx.inv_sin)
        self.cot = _c1(ctx.cot)
        self.w_row = _c1(ctx.w_row)
        self.amp_row = _c1(ctx.amp_row)
        self.f = _c2(ctx.f)
        self.gconst = ctx.g_const is not None
        self.gval = ctx.g_const if self.gconst else 0.0
        gv = ctx.g_values if ctx.g_values is not None else np.zeros((1, 2))
        self.gv = _c2(gv)
        self.mass_f = ctx.mass_f
        self.last_minb = 0.0
        shape = (self.nt, self.nph)
        self.gt = np.empty(shape)
        self.gp = np.empty(shape)
        self.btt = np.empty(shape)
        self.btp = np.empty(shape)
        self.bpp = np.empty(shape)
        self.detb = np.empty(shape)
        self.rho2 = np.empty(shape)
        self.gu = np.empty(shape)


cdef _View2 _view2(ctx):
    v = getattr(ctx, "_accel_view", None)
    if v is None:
        v = _View2(ctx)
        ctx._accel_view = v
    return v


cdef _View3 _view3(ctx):
    v = getattr(ctx, "_accel_view", None)
    if v is None:
        v = _View3(ctx)
        ctx._accel_view = v
    return v


# ---------------------------------------------------------------------------
# n = 2


cdef inline double _spline(double[:, ::1] co, int n, double dth, double ang):
    cdef double a = _mod2pi(ang)
    cdef Py_ssize_t j = <Py_ssize_t>(a / dth)
    if j > n - 1:
        j = n - 1
    cdef double xi = a - j * dth
    return ((co[j, 0] * xi + co[j, 1]) * xi + co[j, 2]) * xi + co[j, 3]


cdef int _parts2(_View2 v, double[::1] h):
    """Fill hp/b/rho2 and last_minb; 1 when positive and convex, else 0.
    The full arrays are always produced (the bail decision uses global
    minima, as in the fallback)."""
    cdef int n = v.n
    cdef double dth = v.dth
    cdef Py_ssize_t i, ip1, im1, ip2, im2
    cdef double hp, b, minb = 1e300, hmin = 1e300
    for i in range(n):
        ip1 = i + 1
        if ip1 >= n:
            ip1 -= n
        im1 = i - 1
        if im1 < 0:
            im1 += n
        ip2 = i + 2
        if ip2 >= n:
            ip2 -= n
        im2 = i - 2
        if im2 < 0:
            im2 += n
        hp = (8.0 * (h[ip1] - h[im1]) - (h[ip2] - h[im2])) / (12.0 * dth)
        b = (16.0 * ((h[ip1] - h[i]) + (h[im1] - h[i]))
             - ((h[ip2] - h[i]) + (h[im2] - h[i]))) / (12.0 * dth * dth) + h[i]
        v.hp[i] = hp
        v.b[i] = b
        v.rho2[i] = h[i] * h[i] + hp * hp
        if b < minb:
            minb = b
        if h[i] < hmin:
            hmin = h[i]
    v.last_minb = minb
    return 1 if (minb > 0.0 and hmin > 0.0) else 0


cdef void _gu2(_View2 v, double[::1] h):
    cdef Py_ssize_t i
    if v.gconst:
        for i in range(v.n):
            v.gu[i] = v.gval
    else:
        for i in range(v.n):
            v.gu[i] = _spline(v.gco, v.gco_n, v.dth,
                              v.theta[i] + atan2(v.hp[i], h[i]))


cdef int _rhs2_into(_View2 v, double[::1] h, double[::1] out):
    if not _parts2(v, h):
        return 0
    _gu2(v, h)
    cdef Py_ssize_t i
    for i in range(v.n):
        out[i] = h[i] - (v.f[i] * v.rho2[i]) / (v.gu[i] * v.b[i])
    return 1


def eval_rhs(ctx, h):
    if ctx.dim == 3:
        return _eval_rhs3(ctx, h)
    v2 = _view2(ctx)
    return _eval_rhs2(v2, h)


def _eval_rhs2(_View2 v, h):
    cdef double[::1] hv = _c1(h)
    out = np.empty(v.n)
    cdef double[::1] ov = out
    if not _rhs2_into(v, hv, ov):
        return None, v.last_minb
    return out, v.last_minb


def eval_diag(ctx, h):
    if ctx.dim == 3:
        return _eval_diag3(ctx, h)
    return _eval_diag2(_view2(ctx), h)


def _eval_diag2(_View2 v, h):
    cdef double[::1] hv = _c1(h)
    _parts2(v, hv)
    _gu2(v, hv)
    cdef int n = v.n
    cdef double dth = v.dth
    cdef NSum sj, svg, sds, smg, sl2
    sj.s = 0.0; sj.c = 0.0
    svg.s = 0.0; svg.c = 0.0
    sds.s = 0.0; sds.c = 0.0
    smg.s = 0.0; smg.c = 0.0
    sl2.s = 0.0; sl2.c = 0.0
    cdef Py_ssize_t i
    cdef double tau, R, logrho, t
    cdef double hmin = 1e300, hmax = -1e300
    cdef double r2min = 1e300, r2max = -1e300, gmax = 0.0
    cdef double bmin = 1e300, bmax = -1e300, ressup = 0.0, lam = -1e300
    for i in range(n):
        tau = (v.gu[i] * hv[i] * v.b[i]) / v.rho2[i]
        R = tau - v.f[i]
        logrho = 0.5 * log(v.rho2[i])
        nadd(&sj, v.f[i] * log(hv[i]) - tau * logrho)
        nadd(&svg, tau * logrho)
        nadd(&sds, R * R / tau)
        nadd(&smg, tau)
        nadd(&sl2, R * R)
        if fabs(R) > ressup:
            ressup = fabs(R)
        if hv[i] < hmin:
            hmin = hv[i]
        if hv[i] > hmax:
            hmax = hv[i]
        if v.rho2[i] < r2min:
            r2min = v.rho2[i]
        if v.rho2[i] > r2max:
            r2max = v.rho2[i]
        if fabs(v.hp[i]) > gmax:
            gmax = fabs(v.hp[i])
        if v.b[i] < bmin:
            bmin = v.b[i]
        if v.b[i] > bmax:
            bmax = v.b[i]
        t = (v.f[i] * v.rho2[i] / v.gu[i]) / (v.b[i] * v.b[i])
        if t > lam:
            lam = t
    return DiagOut(dth * nval(&sj), dth * nval(&svg), dth * nval(&sds),
                   dth * nval(&smg) - v.mass_f, ressup,
                   sqrt(dth * nval(&sl2)), hmin, hmax,
                   sqrt(r2min), sqrt(r2max), gmax,
                   1.0 / bmin, 1.0 / bmax, bmin,
                   (16.0 / 3.0) / (dth * dth) * lam)


def residual_values(ctx, h):
    if ctx.dim == 3:
        return _residual3(ctx, h)
    return _residual2(_view2(ctx), h)


def _residual2(_View2 v, h):
    cdef double[::1] hv = _c1(h)
    _parts2(v, hv)
    _gu2(v, hv)
    out = np.empty(v.n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(v.n):
        ov[i] = (v.gu[i] * hv[i] * v.b[i]) / v.rho2[i] - v.f[i]
    return out


def rk4_double_n2(ctx, h, double dt):
    """Fused step-doubled RK4 sweep for n=2: returns (y1, y2) or
    (None, min_b) when any stage leaves the positive convex cone.  Stage
    arithmetic mirrors the driver's numpy expressions elementwise; the
    first half step reuses the full step's k1 (equal values by
    determinism)."""
    cdef _View2 v = _view2(ctx)
    cdef double[::1] hv = _c1(h)
    cdef int n = v.n
    y1 = np.empty(n)
    y2 = np.empty(n)
    cdef double[::1] y1v = y1
    cdef double[::1] y2v = y2
    cdef double half = 0.5 * dt
    cdef Py_ssize_t i
    cdef double s

    if not _rhs2_into(v, hv, v.k1):
        return None, v.last_minb
    # full step from h
    s = 0.5 * dt
    for i in range(n):
        v.yt[i] = hv[i] + s * v.k1[i]
    if not _rhs2_into(v, v.yt, v.k2):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = hv[i] + s * v.k2[i]
    if not _rhs2_into(v, v.yt, v.k3):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = hv[i] + dt * v.k3[i]
    if not _rhs2_into(v, v.yt, v.k4):
        return None, v.last_minb
    s = dt / 6.0
    for i in range(n):
        y1v[i] = hv[i] + s * ((v.k1[i] + v.k4[i]) + 2.0 * (v.k2[i] + v.k3[i]))
    # first half step from h (k1 unchanged)
    s = 0.5 * half
    for i in range(n):
        v.yt[i] = hv[i] + s * v.k1[i]
    if not _rhs2_into(v, v.yt, v.k2):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = hv[i] + s * v.k2[i]
    if not _rhs2_into(v, v.yt, v.k3):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = hv[i] + half * v.k3[i]
    if not _rhs2_into(v, v.yt, v.k4):
        return None, v.last_minb
    s = half / 6.0
    for i in range(n):
        v.ym[i] = hv[i] + s * ((v.k1[i] + v.k4[i]) + 2.0 * (v.k2[i] + v.k3[i]))
    # second half step from ym
    if not _rhs2_into(v, v.ym, v.k1):
        return None, v.last_minb
    s = 0.5 * half
    for i in range(n):
        v.yt[i] = v.ym[i] + s * v.k1[i]
    if not _rhs2_into(v, v.yt, v.k2):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = v.ym[i] + s * v.k2[i]
    if not _rhs2_into(v, v.yt, v.k3):
        return None, v.last_minb
    for i in range(n):
        v.yt[i] = v.ym[i] + half * v.k3[i]
    if not _rhs2_into(v, v.yt, v.k4):
        return None, v.last_minb
    s = half / 6.0
    for i in range(n):
        y2v[i] = v.ym[i] + s * ((v.k1[i] + v.k4[i]) + 2.0 * (v.k2[i] + v.k3[i]))
    return y1, y2


# ---------------------------------------------------------------------------
# n = 3


cdef inline Py_ssize_t _wrapk(Py_ssize_t k, int nph):
    if k >= nph:
        return k - nph
    if k < 0:
        return k + nph
    return k


cdef inline double _hat(double[:, ::1] h, int nt, int nph,
                        Py_ssize_t j, Py_ssize_t k):
    """h at theta row j and phi index k; rows -1 and nt continue across
    the pole (phi shift by half a period, exact for even nph)."""
    cdef int half = nph // 2
    if j < 0:
        j = 0
        k = k + half
    elif j >= nt:
        j = nt - 1
        k = k + half
    return h[j, _wrapk(k, nph)]


cdef int _parts3(_View3 v, double[:, ::1] h):
    cdef int nt = v.nt, nph = v.nph
    cdef double dth = v.dth, dph = v.dph
    cdef Py_ssize_t j, k
    cdef double up, dn, p1, m1, ht, htt, hph, hpp, htp
    cdef double hph_up, hph_dn
    cdef double inv_sin, cot, gt, gp, btt, btp, bpp, detb
    cdef double minb = 1e300, hmin = 1e300, mean, half_diff, disc, emin
    for j in range(nt):
        inv_sin = v.inv_sin[j]
        cot = v.cot[j]
        for k in range(nph):
            up = _hat(h, nt, nph, j + 1, k)
            dn = _hat(h, nt, nph, j - 1, k)
            p1 = h[j, _wrapk(k + 1, nph)]
            m1 = h[j, _wrapk(k - 1, nph)]
            ht = (up - dn) / (2.0 * dth)
            htt = ((up - h[j, k]) + (dn - h[j, k])) / (dth * dth)
            hph = (p1 - m1) / (2.0 * dph)
            hpp = ((p1 - h[j, k]) + (m1 - h[j, k])) / (dph * dph)
            hph_up = (_hat(h, nt, nph, j + 1, k + 1)
                      - _hat(h, nt, nph, j + 1, k - 1)) / (2.0 * dph)
            hph_dn = (_hat(h, nt, nph, j - 1, k + 1)
                      - _hat(h, nt, nph, j - 1, k - 1)) / (2.0 * dph)
            htp = (hph_up - hph_dn) / (2.0 * dth)
            gt = ht
            gp = hph * inv_sin
            btt = htt + h[j, k]
            btp = (htp - cot * hph) * inv_sin
            bpp = (hpp * inv_sin) * inv_sin + cot * ht + h[j, k]
            detb = btt * bpp - btp * btp
            v.gt[j, k] = gt
            v.gp[j, k] = gp
            v.btt[j, k] = btt
            v.btp[j, k] = btp
            v.bpp[j, k] = bpp
            v.detb[j, k] = detb
            v.rho2[j, k] = h[j, k] * h[j, k] + (gt * gt + gp * gp)
            mean = 0.5 * (btt + bpp)
            half_diff = 0.5 * (btt - bpp)
            disc = sqrt(half_diff * half_diff + btp * btp)
            emin = mean - disc
            if emin < minb:
                minb = emin
            if h[j, k] < hmin:
                hmin = h[j, k]
    v.last_minb = minb
    return 1 if (minb > 0.0 and hmin > 0.0) else 0


cdef inline double _bilin(double[:, ::1] gv, int nt, int nph,
                          double p, double kfrac):
    """Bilinear value at fractional row index p and phi index kfrac,
    mirroring BilinearSphere (pole rows wrap with a half-period shift)."""
    cdef Py_ssize_t j0 = <Py_ssize_t>p
    if p < 0.0 and p != <double>j0:
        j0 -= 1
    cdef double s = p - j0
    cdef int half = nph // 2
    cdef Py_ssize_t jj, k0, k1
    cdef double kf, t, a, lo, hi
    # row j0
    jj = j0
    kf = kfrac
    if jj < 0:
        jj = 0
        kf = kfrac + half
    elif jj >= nt:
        jj = nt - 1
        kf = kfrac + half
    k0 = <Py_ssize_t>kf
    t = kf - k0
    k0 = k0 % nph
    k1 = k0 + 1
    if k1 >= nph:
        k1 -= nph
    a = gv[jj, k0]
    lo = a + t * (gv[jj, k1] - a)
    # row j0 + 1
    jj = j0 + 1
    kf = kfrac
    if jj < 0:
        jj = 0
        kf = kfrac + half
    elif jj >= nt:
        jj = nt - 1
        kf = kfrac + half
    k0 = <Py_ssize_t>kf
    t = kf - k0
    k0 = k0 % nph
    k1 = k0 + 1
    if k1 >= nph:
        k1 -= nph
    a = gv[jj, k0]
    hi = a + t * (gv[jj, k1] - a)
    return lo + s * (hi - lo)


cdef void _gu3(_View3 v, double[:, ::1] h):
    cdef Py_ssize_t j, k
    cdef double st, ct, x3, xr, gp, theta_u, phi_u
    if v.gconst:
        for j in range(v.nt):
            for k in range(v.nph):
                v.gu[j, k] = v.gval
        return
    for j in range(v.nt):
        st = v.sin_t[j]
        ct = v.cos_t[j]
        for k in range(v.nph):
            gp = v.gp[j, k]
            x3 = -v.gt[j, k] * st + h[j, k] * ct
            xr = v.gt[j, k] * ct + h[j, k] * st
            theta_u = atan2(sqrt(xr * xr + gp * gp), x3)
            phi_u = v.phi[k] + atan2(gp, xr)
            v.gu[j, k] = _bilin(v.gv, v.nt, v.nph,
                                theta_u / v.dth - 0.5,
                                _mod2pi(phi_u) / v.dph)


def _eval_rhs3(ctx, h):
    cdef _View3 v = _view3(ctx)
    cdef double[:, ::1] hv = _c2(h)
    if not _parts3(v, hv):
        return None, v.last_minb
    _gu3(v, hv)
    out = np.empty((v.nt, v.nph))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t j, k
    cdef double rho, rho3
    for j in range(v.nt):
        for k in range(v.nph):
            rho = sqrt(v.rho2[j, k])
            rho3 = v.rho2[j, k] * rho
            ov[j, k] = hv[j, k] - (v.f[j, k] * rho3) / (v.gu[j, k] * v.detb[j, k])
    return out, v.last_minb


def _eval_diag3(ctx, h):
    cdef _View3 v = _view3(ctx)
    cdef double[:, ::1] hv = _c2(h)
    _parts3(v, hv)
    _gu3(v, hv)
    cdef NSum sj, svg, sds, smg, sl2
    sj.s = 0.0; sj.c = 0.0
    svg.s = 0.0; svg.c = 0.0
    sds.s = 0.0; sds.c = 0.0
    smg.s = 0.0; smg.c = 0.0
    sl2.s = 0.0; sl2.c = 0.0
    cdef Py_ssize_t j, k
    cdef double rho, rho3, tau, R, logrho, w, t, g2
    cdef double mean, half_diff, disc, emin, emax
    cdef double hmin = 1e300, hmax = -1e300, r2min = 1e300, r2max = -1e300
    cdef double g2max = 0.0, detbmin = 1e300, emaxmax = -1e300, eminmin = 1e300
    cdef double ressup = 0.0, lam = -1e300
    cdef double c_t = 4.0 / (v.dth * v.dth)
    for j in range(v.nt):
        w = v.w_row[j]
        for k in range(v.nph):
            rho = sqrt(v.rho2[j, k])
            rho3 = v.rho2[j, k] * rho
            tau = (v.gu[j, k] * hv[j, k] * v.detb[j, k]) / rho3
            R = tau - v.f[j, k]
            logrho = 0.5 * log(v.rho2[j, k])
            nadd(&sj, w * (v.f[j, k] * log(hv[j, k]) - tau * logrho))
            nadd(&svg, w * (tau * logrho))
            nadd(&sds, w * (R * R / tau))
            nadd(&smg, w * tau)
            nadd(&sl2, w * (R * R))
            if fabs(R) > ressup:
                ressup = fabs(R)
            if hv[j, k] < hmin:
                hmin = hv[j, k]
            if hv[j, k] > hmax:
                hmax = hv[j, k]
            if v.rho2[j, k] < r2min:
                r2min = v.rho2[j, k]
            if v.rho2[j, k] > r2max:
                r2max = v.rho2[j, k]
            g2 = v.gt[j, k] * v.gt[j, k] + v.gp[j, k] * v.gp[j, k]
            if g2 > g2max:
                g2max = g2
            mean = 0.5 * (v.btt[j, k] + v.bpp[j, k])
            half_diff = 0.5 * (v.btt[j, k] - v.bpp[j, k])
            disc = sqrt(half_diff * half_diff + v.btp[j, k] * v.btp[j, k])
            emin = mean - disc
            emax = mean + disc
            if emin < eminmin:
                eminmin = emin
            if emax > emaxmax:
                emaxmax = emax
            if v.detb[j, k] < detbmin:
                detbmin = v.detb[j, k]
            t = (v.f[j, k] * rho3 / v.gu[j, k]) / (v.detb[j, k] * v.detb[j, k]) \
                * (v.bpp[j, k] * c_t + v.btt[j, k] * v.amp_row[j])
            if t > lam:
                lam = t
    return DiagOut(nval(&sj), nval(&svg), nval(&sds),
                   nval(&smg) - v.mass_f, ressup, sqrt(nval(&sl2)),
                   hmin, hmax, sqrt(r2min), sqrt(r2max), sqrt(g2max),
                   1.0 / detbmin, 1.0 / emaxmax, eminmin, 1.15 * lam)


def _residual3(ctx, h):
    cdef _View3 v = _view3(ctx)
    cdef double[:, ::1] hv = _c2(h)
    _parts3(v, hv)
    _gu3(v, hv)
    out = np.empty((v.nt, v.nph))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t j, k
    cdef double rho, rho3
    for j in range(v.nt):
        for k in range(v.nph):
            rho = sqrt(v.rho2[j, k])
            rho3 = v.rho2[j, k] * rho
            ov[j, k] = (v.gu[j, k] * hv[j, k] * v.detb[j, k]) / rho3 - v.f[j, k]
    return out
