"""Acceptance criteria, one test per numbered requirement.

Run with pytest -v to get one pass/fail line per criterion.  The shared
N=512 circle run backs criteria 2-4; the manufactured N=512 run backs
criteria 5 and 10.  Wall-clock limits are asserted with the tolerances
stated alongside each criterion.
"""
import math
import time

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import gaussflow as gf
from gaussflow import cli
from gaussflow.flow import BUDGET, CONVERGED, FlowParams, run_flow

TWO_PI = 2.0 * math.pi


def const_pair(grid):
    return gf.make_density_pair(grid, ("constant", 1.0), ("constant", 1.0))


def ellipse_values(grid, a=2.0, b=1.0):
    th = grid.theta
    return np.sqrt((a * np.cos(th)) ** 2 + (b * np.sin(th)) ** 2)


@pytest.fixture(scope="module")
def circle_run():
    """N=512 constant pair started from the 2:1 ellipse (criteria 2-4)."""
    grid = gf.build_grid(2, 512)
    pair = const_pair(grid)
    params = FlowParams(residual_sup_tol=1e-6, max_time=600.0)
    t0 = time.perf_counter()
    state, trace, reason = run_flow(grid, pair, ellipse_values(grid), params)
    wall = time.perf_counter() - t0
    return {"grid": grid, "pair": pair, "state": state, "trace": trace,
            "reason": reason, "wall": wall}


@pytest.fixture(scope="module")
def manufactured_run():
    """N=512 manufactured ellipse recovered from the volume-matched ball
    (criteria 5 and 10)."""
    grid = gf.build_grid(2, 512)
    prob = gf.manufacture_problem(grid, "ellipse", (2.0, 1.0),
                                  ("constant", 1.0))
    pair = gf.make_density_pair(grid, prob.f, prob.g)
    start = gf.matched_ball(prob, pair)
    params = FlowParams(residual_sup_tol=1e-7, max_time=600.0)
    t0 = time.perf_counter()
    state, trace, reason = run_flow(grid, pair, start.values, params)
    wall = time.perf_counter() - t0
    sup, _ = gf.recovery_error(state.h, prob.h_target, pair)
    return {"grid": grid, "prob": prob, "pair": pair, "state": state,
            "reason": reason, "wall": wall, "sup": sup}


# --- criterion 1 -----------------------------------------------------------

def test_c01_round_bodies_stationary():
    t0 = time.perf_counter()
    for grid in (gf.build_grid(2, 256), gf.build_grid(3, (32, 64))):
        pair = const_pair(grid)
        for c in (0.5, 1.0, 3.0):
            h = gf.ScalarField(grid, np.full(grid.nnodes, c))
            assert np.abs(gf.flow_rhs(h, pair).values).max() == 0.0
            assert np.abs(gf.residual(h, pair).values).max() == 0.0
    assert time.perf_counter() - t0 < 1.0


# --- criteria 2-4 on the shared circle run ----------------------------------

def test_c02_monotone_J_and_dissipation_identity(circle_run):
    assert circle_run["wall"] < 60.0
    trace = circle_run["trace"]
    assert trace.j_violations == 0
    t = trace.column("t")
    J = trace.column("J")
    dt = trace.column("dt")
    D = np.array(trace.dissipation)
    dJdt = (J[1:] - J[:-1]) / (t[1:] - t[:-1])
    Davg = 0.5 * (D[1:] + D[:-1])
    mask = (dt[1:] <= 1e-3) & (Davg >= max(1e-6, 1e-5 * D.max()))
    assert mask.sum() > 100
    rel = np.abs(dJdt[mask] + Davg[mask]) / Davg[mask]
    assert rel.max() <= 0.05


def test_c03_log_volume_conserved(circle_run):
    vg = circle_run["trace"].column("Vg")
    assert np.abs(vg - vg[0]).max() <= 1e-6


def test_c04_converges_to_matched_circle(circle_run):
    assert circle_run["wall"] < 60.0
    assert circle_run["reason"] == CONVERGED
    trace = circle_run["trace"]
    assert trace.column("residual_sup")[-1] <= 1e-6
    radius = math.exp(trace.column("Vg")[0] / TWO_PI)
    h = circle_run["state"].h.values
    assert np.abs(h / radius - 1.0).max() <= 1e-4


# --- criterion 5 -------------------------------------------------------------

def test_c05_manufactured_recovery_refines(manufactured_run):
    assert manufactured_run["reason"] == CONVERGED
    assert manufactured_run["sup"] <= 1e-3

    grid = gf.build_grid(2, 1024)
    prob = gf.manufacture_problem(grid, "ellipse", (2.0, 1.0),
                                  ("constant", 1.0))
    pair = gf.make_density_pair(grid, prob.f, prob.g)
    start = gf.matched_ball(prob, pair)
    params = FlowParams(residual_sup_tol=1e-8, max_time=600.0)
    t0 = time.perf_counter()
    state, _, reason = run_flow(grid, pair, start.values, params)
    wall = time.perf_counter() - t0
    assert reason == CONVERGED
    sup_fine, _ = gf.recovery_error(state.h, prob.h_target, pair)
    assert manufactured_run["sup"] / sup_fine >= 3.0
    assert manufactured_run["wall"] + wall < 120.0


# --- criterion 6 -------------------------------------------------------------

def test_c06_ellipsoid_recovery():
    grid = gf.build_grid(3, (64, 128))
    prob = gf.manufacture_problem(grid, "ellipsoid", (1.5, 1.2, 1.0),
                                  ("constant", 1.0))
    pair = gf.make_density_pair(grid, prob.f, prob.g)
    start = gf.matched_ball(prob, pair)
    params = FlowParams(residual_sup_tol=1e-2, max_time=600.0)
    t0 = time.perf_counter()
    state, _, reason = run_flow(grid, pair, start.values, params)
    wall = time.perf_counter() - t0
    assert reason == CONVERGED
    sup, _ = gf.recovery_error(state.h, prob.h_target, pair)
    assert sup <= 5e-2
    assert wall < 600.0


# --- criterion 7 -------------------------------------------------------------

def test_c07_scale_equivariance():
    t0 = time.perf_counter()
    grid = gf.build_grid(2, 256)
    pair = const_pair(grid)
    params = FlowParams(adaptive=False, dt_initial=1e-3, max_steps=100,
                        residual_sup_tol=1e-16, max_time=600.0)
    h0 = ellipse_values(grid)
    s1, _, r1 = run_flow(grid, pair, h0, params)
    s2, _, r2 = run_flow(grid, pair, 2.0 * h0, params)
    assert r1 == BUDGET and r2 == BUDGET
    assert s1.step_count == 100 and s2.step_count == 100
    assert s2.t == s1.t
    gap = np.abs(0.5 * s2.h.values - s1.h.values).max()
    assert gap <= 1e-10 * s1.h.values.max()
    assert time.perf_counter() - t0 < 10.0


# --- criterion 8 -------------------------------------------------------------

def test_c08_margin_families():
    t0 = time.perf_counter()
    # S1 constant pair: every proper arc has margin exactly pi
    g2 = gf.build_grid(2, 256)
    rep = gf.check_aleksandrov(const_pair(g2))
    assert rep.ok
    for row in rep.rows:
        assert abs(row[5] - math.pi) <= 1e-10

    # S2 constant pair: caps of opening alpha give 2 pi (cos + sin)
    g3 = gf.build_grid(3, (16, 32))
    rep3 = gf.check_aleksandrov(const_pair(g3))
    assert rep3.ok
    for row in rep3.rows:
        expect = TWO_PI * (math.cos(row[2]) + math.sin(row[2]))
        assert abs(row[5] - expect) <= 1e-6

    # concentrated f (mass 2 pi, half-width 0.1): violation found and located
    raw = np.where(np.abs(g2.theta - math.pi / 2.0) <= 0.1, 1.0, 1e-9)
    f = gf.ScalarField(g2, raw * (TWO_PI / gf.integrate(gf.ScalarField(g2, raw))))
    bad = gf.check_aleksandrov(gf.make_density_pair(g2, f, ("constant", 1.0)))
    assert not bad.ok
    assert bad.worst_margin < 0.0
    assert bad.worst_set.kind == "arc"
    assert abs(bad.worst_set.center - math.pi / 2.0) <= 1e-12
    assert bad.worst_set.half_angle <= 0.2
    assert time.perf_counter() - t0 < 30.0


# --- criterion 9 -------------------------------------------------------------

def test_c09_operator_convergence_orders(tmp_path, capsys):
    t0 = time.perf_counter()
    for dim, res in ((2, "128 256 512"), (3, "16 32 64")):
        cfg = tmp_path / ("ops%d.ini" % dim)
        cfg.write_text("[grid]\ndim = %d\nresolutions = %s\n"
                       "[output]\ndir = %s\n" % (dim, res, tmp_path))
        assert cli.main(["validate-operators", str(cfg)]) == 0
        out = capsys.readouterr().out
        orders = {}
        for line in out.splitlines():
            op, _, _, val = line.split()
            orders[op] = float(val)
        assert orders["gradient"] >= 1.9, "dim %d: %r" % (dim, orders)
        assert orders["hessian"] >= 1.9, "dim %d: %r" % (dim, orders)
    assert time.perf_counter() - t0 < 120.0


# --- criterion 10 ------------------------------------------------------------

def test_c10_pushforward_on_converged_run(manufactured_run):
    t0 = time.perf_counter()
    geom = gf.derive_geometry(manufactured_run["state"].h)
    pair = manufactured_run["pair"]
    sets = [gf.SphericalConvexSet("arc", k * TWO_PI / 8.0, 0.5)
            for k in range(8)]
    worst = gf.pushforward_check(geom, pair, sets)
    assert worst <= 1e-3 * pair.mass_f
    assert time.perf_counter() - t0 < 30.0


# --- criterion 11 ------------------------------------------------------------

def test_c11_determinism_and_restart(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    base = """
[grid]
dim = 2
n = 128
[initial]
body = ellipse 2.0 1.0
"""
    cfg_full = tmp_path / "full.ini"
    cfg_full.write_text(base)

    # identical inputs -> byte-identical traces
    d1, d2 = tmp_path / "run1", tmp_path / "run2"
    monkeypatch.setenv("GAUSSFLOW_OUTDIR", str(d1))
    assert cli.main(["solve", str(cfg_full)]) == 0
    monkeypatch.setenv("GAUSSFLOW_OUTDIR", str(d2))
    assert cli.main(["solve", str(cfg_full)]) == 0
    trace_full = (d1 / "trace.csv").read_bytes()
    assert (d2 / "trace.csv").read_bytes() == trace_full

    # interrupt after 500 steps, restart from the checkpoint: the two trace
    # files concatenate to the uninterrupted one exactly
    d3, d4 = tmp_path / "part", tmp_path / "rest"
    cfg_part = tmp_path / "part.ini"
    cfg_part.write_text(base + "[stopping]\nmax_steps = 500\n")
    monkeypatch.setenv("GAUSSFLOW_OUTDIR", str(d3))
    assert cli.main(["solve", str(cfg_part)]) == 2
    cfg_rest = tmp_path / "rest.ini"
    cfg_rest.write_text("""
[grid]
dim = 2
n = 128
[initial]
restart = %s
""" % (d3 / "checkpoint.field"))
    monkeypatch.setenv("GAUSSFLOW_OUTDIR", str(d4))
    assert cli.main(["solve", str(cfg_rest)]) == 0

    part_lines = (d3 / "trace.csv").read_bytes().splitlines(keepends=True)
    rest_lines = (d4 / "trace.csv").read_bytes().splitlines(keepends=True)
    stitched = b"".join(part_lines + rest_lines[1:])
    assert stitched == trace_full

    # and the recovered final fields agree bitwise
    f1, _ = gf.read_field(d1 / "final.field")
    f4, _ = gf.read_field(d4 / "final.field")
    assert_array_equal(f1.values, f4.values)
    assert time.perf_counter() - t0 < 60.0
