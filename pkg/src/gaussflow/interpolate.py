"""Interpolation of direction-space densities at off-grid directions.

n=2: periodic cubic spline, coefficients built once (scipy), evaluated
     manually so the compiled and fallback backends share one algorithm.
n=3: bilinear in (theta, phi) with cross-pole continuation
     g(-theta, phi) = g(theta, phi+pi) and periodic phi.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * math.pi


def periodic_cubic_coeffs(values, dtheta):
    """Cubic-spline coefficients on [0, 2pi), shape (N, 4): c3,c2,c1,c0.

    Piece j covers [j*dtheta, (j+1)*dtheta); evaluate with xi = angle - j*dtheta.
    """
    n = len(values)
    x = np.arange(n + 1) * dtheta
    y = np.concatenate([values, values[:1]])
    cs = CubicSpline(x, y, bc_type="periodic")
    return np.ascontiguousarray(cs.c.T)  # (N,4) highest degree first


def eval_periodic_cubic(coeffs, dtheta, angles, derivative=0):
    """Evaluate spline (or its first derivative) at arbitrary angles."""
    n = coeffs.shape[0]
    a = np.asarray(angles) % TWO_PI
    j = np.minimum((a / dtheta).astype(np.intp), n - 1)
    xi = a - j * dtheta
    c = coeffs[j]
    if derivative:
        return (3.0 * c[:, 0] * xi + 2.0 * c[:, 1]) * xi + c[:, 2]
    return ((c[:, 0] * xi + c[:, 1]) * xi + c[:, 2]) * xi + c[:, 3]


class BilinearSphere:
    """Bilinear interpolation of a field on the n=3 lat-lon grid."""

    def __init__(self, values2d, dtheta, dphi):
        self.v = np.ascontiguousarray(values2d, dtype=float)
        self.nt, self.np_ = self.v.shape
        self.dtheta = dtheta
        self.dphi = dphi

    @classmethod
    def from_grid(cls, grid, values):
        return cls(np.asarray(values, dtype=float).reshape(grid.shape),
                   grid.dtheta, grid.dphi)

    def _row(self, j, kfrac):
        """Value at row j, fractional phi index kfrac; j may be -1 or nt (pole wrap)."""
        half = self.np_ // 2
        if j < 0:
            j, kfrac = 0, kfrac + half
        elif j >= self.nt:
            j, kfrac = self.nt - 1, kfrac + half
        k0 = np.floor(kfrac).astype(np.intp)
        t = kfrac - k0
        k0 = k0 % self.np_
        k1 = (k0 + 1) % self.np_
        row = self.v[j]
        a = row[k0]
        return a + t * (row[k1] - a)

    def __call__(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        p = theta / self.dtheta - 0.5           # fractional row index
        j0 = np.floor(p).astype(np.intp)
        s = p - j0
        kfrac = (phi % TWO_PI) / self.dphi
        out = np.empty(theta.shape)
        flat_j0 = j0.ravel()
        flat_s = s.ravel()
        flat_k = kfrac.ravel()
        res = np.empty(flat_j0.shape)
        # rows are wrapped individually; vectorize over the common in-range case
        inr = (flat_j0 >= 0) & (flat_j0 < self.nt - 1)
        if np.any(inr):
            j = flat_j0[inr]
            kf = flat_k[inr]
            k0 = np.floor(kf).astype(np.intp) % self.np_
            k1 = (k0 + 1) % self.np_
            t = kf - np.floor(kf)
            lo = self.v[j, k0] + t * (self.v[j, k1] - self.v[j, k0])
            hi = self.v[j + 1, k0] + t * (self.v[j + 1, k1] - self.v[j + 1, k0])
            res[inr] = lo + flat_s[inr] * (hi - lo)
        out_idx = np.nonzero(~inr)[0]
        for i in out_idx:
            j0i, si, kfi = int(flat_j0[i]), flat_s[i], flat_k[i]
            lo = self._row(j0i, np.asarray([kfi]))[0]
            hi = self._row(j0i + 1, np.asarray([kfi]))[0]
            res[i] = lo + si * (hi - lo)
        return res.reshape(theta.shape)
