"""Benchmark the compiled kernels against the numpy fallback.

Times the three kernel entry points on representative problem sizes and a
short end-to-end integration, prints a table, and cross-checks that both
backends produce the same numbers (bitwise for constant g; ~1e-13 for
interpolated g, where the two arctan2 implementations differ by one ulp).

Run:  python3 bench/benchmark_backends.py [--quick]
"""
import argparse
import time

import numpy as np

import gaussflow as gf
from gaussflow import _kernels_np
from gaussflow.backend import available_backends, select_backend
from gaussflow.flow import FlowParams, make_stepper, run_flow
from gaussflow.grid import build_grid


def _time(fn, target=0.5, max_reps=10000):
    fn()  # warm up
    t0 = time.perf_counter()
    reps = 0
    while time.perf_counter() - t0 < target and reps < max_reps:
        fn()
        reps += 1
    return (time.perf_counter() - t0) / reps


def _context(kernels, grid, pair, amp_row=None):
    if grid.dim == 2:
        gdata = pair.g_coeffs
    else:
        gdata = None if pair.g_const is not None \
            else pair.g.values.reshape(grid.shape)
    return kernels.make_context(grid, pair.f.values.reshape(
        grid.shape if grid.dim == 3 else grid.nnodes),
        pair.g_const, gdata, pair.mass_f, amp_row)


def _state(grid):
    nodes = grid.nodes
    h = np.sqrt((1.3 * nodes[:, 0]) ** 2 + nodes[:, 1] ** 2
                + (0.8 * nodes[:, 2] if grid.dim == 3 else 0.8 * nodes[:, 1]) ** 2)
    if grid.dim == 2:
        h = np.sqrt((1.3 * nodes[:, 0]) ** 2 + (0.8 * nodes[:, 1]) ** 2)
    return h.reshape(grid.shape) if grid.dim == 3 else h


def bench_kernels(quick=False):
    cases = [("n=2 N=512", build_grid(2, 512)),
             ("n=2 N=1024", build_grid(2, 1024)),
             ("n=3 64x128", build_grid(3, (64, 128)))]
    if quick:
        cases = cases[:1] + cases[-1:]
    compiled = select_backend("compiled")[1] if "compiled" in available_backends() else None
    rows = []
    for label, grid in cases:
        pair = gf.make_density_pair(grid, ("linear", 0.2, [1.0] * grid.dim),
                                    ("constant", 1.0))
        h = _state(grid)
        ctx_np = _context(_kernels_np, grid, pair)
        t_np = {"rhs": _time(lambda: _kernels_np.eval_rhs(ctx_np, h)),
                "diag": _time(lambda: _kernels_np.eval_diag(ctx_np, h)),
                "residual": _time(lambda: _kernels_np.residual_values(ctx_np, h))}
        if compiled is None:
            for op, t in t_np.items():
                rows.append((label, op, t, None))
            continue
        ctx_c = _context(compiled, grid, pair)
        r_np, _ = _kernels_np.eval_rhs(ctx_np, h)
        r_c, _ = compiled.eval_rhs(ctx_c, h)
        assert np.array_equal(r_np, r_c), "backends disagree on rhs"
        t_c = {"rhs": _time(lambda: compiled.eval_rhs(ctx_c, h)),
               "diag": _time(lambda: compiled.eval_diag(ctx_c, h)),
               "residual": _time(lambda: compiled.residual_values(ctx_c, h))}
        for op in ("rhs", "diag", "residual"):
            rows.append((label, op, t_np[op], t_c[op]))
    return rows


def bench_flow(quick=False):
    grid = build_grid(2, 256 if quick else 512)
    pair = gf.make_density_pair(grid, ("constant", 1.0), ("constant", 1.0))
    h0 = 1.0 + 0.3 * np.cos(grid.theta)
    params = FlowParams(max_steps=500 if quick else 2000,
                        residual_sup_tol=1e-14)
    rows = []
    states = {}
    for name in available_backends():
        kernels = select_backend(name)[1]
        t0 = time.perf_counter()
        state, trace, reason = run_flow(grid, pair, h0.copy(), params,
                                        kernels=kernels)
        wall = time.perf_counter() - t0
        rows.append((name, state.step_count, wall,
                     wall / max(state.step_count, 1)))
        states[name] = state.h.values
    if len(states) == 2:
        gap = float(np.max(np.abs(states["compiled"] - states["numpy"])))
        print("trajectory gap after %d steps (constant g): %.3g (expect 0)"
              % (rows[0][1], gap))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller cases, shorter timing windows")
    args = ap.parse_args()

    print("backends available:", ", ".join(available_backends()))
    print()
    print("%-12s %-9s %12s %12s %9s" % ("case", "op", "numpy", "compiled", "speedup"))
    for label, op, t_np, t_c in bench_kernels(args.quick):
        if t_c is None:
            print("%-12s %-9s %10.1fus %12s" % (label, op, t_np * 1e6, "n/a"))
        else:
            print("%-12s %-9s %10.1fus %10.1fus %8.1fx"
                  % (label, op, t_np * 1e6, t_c * 1e6, t_np / t_c))
    print()
    print("end-to-end integration (constant pair):")
    print("%-9s %9s %9s %12s" % ("backend", "steps", "wall", "per step"))
    for name, steps, wall, per in bench_flow(args.quick):
        print("%-9s %9d %8.2fs %10.1fus" % (name, steps, wall, per * 1e6))


if __name__ == "__main__":
    main()
