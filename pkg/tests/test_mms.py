"""Manufactured problems, recovery metrics, and change-of-variables checks."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import gaussflow as gf

TWO_PI = 2.0 * math.pi


# --- presets --------------------------------------------------------------

def test_preset_sphere_and_ellipse():
    g = gf.build_grid(2, 128)
    s = gf.preset_support(g, "sphere", (1.5,))
    assert_array_equal(s.values, np.full(g.nnodes, 1.5))
    e = gf.preset_support(g, "ellipse", (2.0, 1.0))
    th = g.theta
    assert_allclose(e.values, np.sqrt((2.0 * np.cos(th)) ** 2
                                      + np.sin(th) ** 2), rtol=1e-15)


def test_preset_lpball():
    g = gf.build_grid(2, 128)
    h = gf.preset_support(g, "lpball", (4.0, 1.0, 1.0))
    # h is the l4 norm of the direction (support function of the dual ball)
    expect = (np.abs(np.cos(g.theta)) ** 4
              + np.abs(np.sin(g.theta)) ** 4) ** 0.25
    assert_allclose(h.values, expect, rtol=1e-12)
    # curvature radius vanishes at the axis nodes; the discrete minimum
    # sits at zero up to stencil error
    assert abs(gf.convexity_check(h)) <= 1e-4
    with pytest.raises(ValueError):
        gf.preset_support(g, "lpball", (3.0, 1.0, 1.0))   # odd exponent
    with pytest.raises(ValueError):
        gf.preset_support(g, "nosuch", (1.0,))


# --- manufactured data ----------------------------------------------------

def test_manufacture_constant_bodies():
    g = gf.build_grid(2, 128)
    f3 = gf.manufacture_f(gf.ScalarField(g, np.full(g.nnodes, 3.0)))
    assert_array_equal(f3.values, np.ones(g.nnodes))
    f1 = gf.manufacture_f(gf.ScalarField(g, np.ones(g.nnodes)))
    assert_array_equal(f1.values, np.ones(g.nnodes))


def test_manufacture_ellipse_matches_closed_form():
    # f(theta) = (ab)^2 / (a^4 cos^2 + b^4 sin^2)^{n/2} on the circle
    g = gf.build_grid(2, 512)
    h = gf.preset_support(g, "ellipse", (2.0, 1.0))
    f = gf.manufacture_f(h)
    assert abs(f.values[0] - 0.25) <= 1e-6
    expect = 4.0 / (16.0 * np.cos(g.theta) ** 2 + np.sin(g.theta) ** 2)
    assert np.abs(f.values - expect).max() <= 1e-6


def test_analytic_vs_discrete_manufacture():
    # the discrete product converges to the closed form at the stencil order
    g = gf.build_grid(2, 256)
    d = gf.manufacture_problem(g, "ellipse", (2.0, 1.0), ("constant", 1.0))
    a = gf.manufacture_problem(g, "ellipse", (2.0, 1.0), ("constant", 1.0),
                               mode="analytic")
    gap256 = np.abs(d.f.values - a.f.values).max()
    assert gap256 <= 1e-5
    g2 = gf.build_grid(2, 512)
    d2 = gf.manufacture_problem(g2, "ellipse", (2.0, 1.0), ("constant", 1.0))
    a2 = gf.manufacture_problem(g2, "ellipse", (2.0, 1.0), ("constant", 1.0),
                                mode="analytic")
    assert gap256 / np.abs(d2.f.values - a2.f.values).max() >= 8.0


def test_analytic_vs_discrete_manufacture_sphere():
    g = gf.build_grid(3, (32, 64))
    d = gf.manufacture_problem(g, "ellipsoid", (1.5, 1.2, 1.0),
                               ("constant", 1.0))
    a = gf.manufacture_problem(g, "ellipsoid", (1.5, 1.2, 1.0),
                               ("constant", 1.0), mode="analytic")
    gap32 = np.abs(d.f.values - a.f.values).max()
    assert gap32 <= 0.05
    g2 = gf.build_grid(3, (64, 128))
    d2 = gf.manufacture_problem(g2, "ellipsoid", (1.5, 1.2, 1.0),
                                ("constant", 1.0))
    a2 = gf.manufacture_problem(g2, "ellipsoid", (1.5, 1.2, 1.0),
                                ("constant", 1.0), mode="analytic")
    assert gap32 / np.abs(d2.f.values - a2.f.values).max() >= 3.0


def test_manufactured_mass_matches_sphere_area():
    # total curvature mass equals the sphere area, up to quadrature error
    g = gf.build_grid(2, 256)
    f = gf.manufacture_f(gf.preset_support(g, "ellipse", (2.0, 1.0)))
    assert abs(gf.integrate(f) - TWO_PI) <= 1e-5
    g3 = gf.build_grid(3, (64, 128))
    f3 = gf.manufacture_f(gf.preset_support(g3, "ellipsoid", (1.5, 1.2, 1.0)))
    assert abs(gf.integrate(f3) - 4.0 * math.pi) <= 2e-2


def test_manufacture_problem_validation():
    g = gf.build_grid(2, 64)
    with pytest.raises(ValueError):
        gf.manufacture_problem(g, "ellipse", (2.0, 1.0), ("constant", 1.0),
                               mode="nosuch")
    with pytest.raises(ValueError):
        # closed-form density only exists for ellipsoidal targets
        gf.manufacture_problem(g, "lpball", (4.0, 1.0, 1.0),
                               ("constant", 1.0), mode="analytic")


def test_manufacture_nonconstant_g():
    g = gf.build_grid(2, 256)
    h = gf.preset_support(g, "ellipse", (2.0, 1.0))
    f = gf.manufacture_f(h, g_spec=("linear", 0.3, np.array([1.0, 0.0])))
    pair = gf.make_density_pair(g, f, ("linear", 0.3, np.array([1.0, 0.0])),
                                normalize=False)
    assert np.abs(gf.residual(h, pair).values).max() <= 1e-12


# --- matched initial ball and recovery metric ------------------------------

def test_matched_ball_volume():
    g = gf.build_grid(2, 256)
    prob = gf.manufacture_problem(g, "ellipse", (2.0, 1.0), ("constant", 1.0))
    pair = gf.make_density_pair(g, prob.f, prob.g)
    ball = gf.matched_ball(prob, pair)
    vg_ball = gf.log_volume(gf.derive_geometry(ball), pair)
    assert abs(vg_ball - prob.target_vg) <= 1e-10


def test_recovery_error_basics():
    g = gf.build_grid(2, 128)
    h = gf.preset_support(g, "ellipse", (2.0, 1.0))
    sup, l2 = gf.recovery_error(h, h)
    assert sup <= 1e-13 and l2 <= 1e-13
    # scaling is quotiented out through the volume alignment, up to the
    # quadrature gap in the discrete curvature mass
    h2 = gf.ScalarField(g, 2.0 * h.values)
    sup2, _ = gf.recovery_error(h2, h)
    assert sup2 <= 2e-5
    with pytest.raises(ValueError):
        gf.recovery_error(gf.ScalarField(gf.build_grid(2, 64),
                                         np.ones(64)), h)


# --- change of variables ---------------------------------------------------

def test_change_of_variables_unit_ball():
    g = gf.build_grid(2, 128)
    h = gf.ScalarField(g, np.ones(g.nnodes))
    phi = gf.ScalarField(g, np.ones(g.nnodes))
    lhs, rhs, gap = gf.verify_change_of_variables(h, phi)
    assert gap == 0.0
    assert abs(lhs - TWO_PI) <= 1e-12


def test_change_of_variables_scaled_ball():
    # u is the identity on any centered ball, so smooth test functions
    # transfer with only interpolation error
    g = gf.build_grid(2, 256)
    h = gf.ScalarField(g, np.full(g.nnodes, 2.0))
    phi = gf.ScalarField(g, 1.0 + 0.5 * np.sin(g.theta))
    lhs, rhs, gap = gf.verify_change_of_variables(h, phi)
    assert gap <= 1e-12


def test_change_of_variables_refinement():
    gaps = []
    for n in (128, 256):
        g = gf.build_grid(2, n)
        h = gf.preset_support(g, "ellipse", (2.0, 1.0))
        u1 = gf.derive_geometry(h).u[:, 0]
        phi = gf.ScalarField(g, u1 * u1)
        gaps.append(gf.verify_change_of_variables(h, phi)[2])
    assert gaps[1] <= 5e-6
    assert gaps[0] / gaps[1] >= 3.5


def test_change_of_variables_sphere():
    gaps = []
    for res in ((16, 32), (32, 64)):
        g = gf.build_grid(3, res)
        h = gf.preset_support(g, "ellipsoid", (1.5, 1.2, 1.0))
        u1 = gf.derive_geometry(h).u[:, 0]
        phi = gf.ScalarField(g, u1 * u1)
        gaps.append(gf.verify_change_of_variables(h, phi)[2])
    assert gaps[0] <= 5e-2
    assert gaps[0] / gaps[1] >= 3.0
