#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy/Python fallback.

Times the two hot loops (exit-time Monte Carlo stepping and the control
forward/adjoint sweep pair) under:
  1. numba @njit kernels (the default backend)
  2. the identical uncompiled functions (what FWEXIT_DISABLE_NUMBA=1 selects)

and checks that both produce bit-identical results.

Usage:
    python benchmarks/benchmark_kernels.py [--paths N] [--steps S] [--modes M]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fwexit import kernels
from fwexit.model import builtin_spec
from fwexit.simulate import path_rng, step_tables


def bench_exit(kernel, spec, tables, n_paths, n_steps, seed=123):
    """Drive n_paths OU-type paths through one gaussian chunk each."""
    t = tables
    exits = 0
    t0 = time.perf_counter()
    for p in range(n_paths):
        g = path_rng(seed, p).standard_normal((n_steps, spec.mode_count))
        x = np.zeros(spec.mode_count)
        hit = kernel(x, g, t.sg, t.fdt, t.anoise, t.snoise, t.q, t.phi,
                     t.pinv, t.f_mode, t.lam, t.b_mode, t.use_grid,
                     t.norm_mode, spec.domain_radius, 0, np.empty((0, 1)))
        if hit >= 0:
            exits += 1
    return time.perf_counter() - t0, exits


def bench_sweeps(forward, adjoint, spec, tables, n_steps, iters, seed=7):
    t = tables
    n = spec.mode_count
    rng = np.random.default_rng(seed)
    psi = 0.3 * rng.standard_normal((n_steps, n))
    xs = np.empty((n_steps + 1, n))
    grad = np.empty_like(psi)
    lam_term = rng.standard_normal(n)
    t0 = time.perf_counter()
    for _ in range(iters):
        forward(np.zeros(n), psi, t.sg, t.fdt, t.cfac, t.q, t.phi, t.pinv,
                t.f_mode, t.lam, t.b_mode, t.use_grid, xs)
        adjoint(xs, psi, lam_term, t.sg, t.fdt, t.cfac, t.q, t.phi, t.pinv,
                t.f_mode, t.lam, t.b_mode, t.use_grid, 0.01, grad)
    return time.perf_counter() - t0, xs.copy(), grad.copy()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--modes", type=int, default=8)
    ap.add_argument("--sweep-iters", type=int, default=50)
    args = ap.parse_args()

    if not kernels.USE_NUMBA:
        print("active backend is already the NumPy fallback "
              "(numba missing or FWEXIT_DISABLE_NUMBA set); nothing to compare")
        return

    spec_ou = builtin_spec("ou")
    spec_cubic = builtin_spec("heat_cubic", mode_count=args.modes)
    rows = []

    for label, spec, eps in (("exit MC, OU scalar", spec_ou, 0.25),
                             ("exit MC, cubic grid", spec_cubic, 0.5)):
        tables = step_tables(spec, 1e-3, eps)
        # warm up the JIT before timing
        bench_exit(kernels.exit_evolve_chunk, spec, tables, 1, 8)
        t_jit, e1 = bench_exit(kernels.exit_evolve_chunk, spec, tables,
                               args.paths, args.steps)
        t_py, e2 = bench_exit(kernels.PYTHON_IMPLS["exit_evolve_chunk"], spec,
                              tables, max(args.paths // 50, 2), args.steps)
        t_py *= args.paths / max(args.paths // 50, 2)
        assert e1 >= 0 and e2 >= 0
        rows.append((label, t_jit, t_py))

    tables = step_tables(spec_cubic, 0.005, 0.0)
    bench_sweeps(kernels.control_forward, kernels.control_adjoint,
                 spec_cubic, tables, 8, 1)
    t_jit, xs1, g1 = bench_sweeps(kernels.control_forward, kernels.control_adjoint,
                                  spec_cubic, tables, args.steps // 4, args.sweep_iters)
    t_py, xs2, g2 = bench_sweeps(kernels.PYTHON_IMPLS["control_forward"],
                                 kernels.PYTHON_IMPLS["control_adjoint"],
                                 spec_cubic, tables, args.steps // 4, 1)
    t_py *= args.sweep_iters
    rows.append(("control fwd+adj sweeps", t_jit, t_py))

    print(f"{'kernel':<26s} {'numba (s)':>10s} {'numpy (s)':>10s} {'speedup':>8s}")
    print("-" * 58)
    for label, tj, tp in rows:
        print(f"{label:<26s} {tj:>10.3f} {tp:>10.3f} {tp / tj:>7.1f}x")

    agree = np.array_equal(xs1, xs2) and np.array_equal(g1, g2)
    print(f"\nsweep agreement (bit-identical): {'PASS' if agree else 'FAIL'}")

    # exit-path agreement on a fixed stream
    tables = step_tables(spec_cubic, 1e-3, 0.5)
    g = path_rng(99, 0).standard_normal((512, spec_cubic.mode_count))
    xa = np.zeros(spec_cubic.mode_count)
    xb = np.zeros(spec_cubic.mode_count)
    ha = kernels.exit_evolve_chunk(xa, g, tables.sg, tables.fdt, tables.anoise,
                                   tables.snoise, tables.q, tables.phi, tables.pinv,
                                   tables.f_mode, tables.lam, tables.b_mode,
                                   tables.use_grid, tables.norm_mode,
                                   spec_cubic.domain_radius, 0, np.empty((0, 1)))
    hb = kernels.PYTHON_IMPLS["exit_evolve_chunk"](
        xb, g, tables.sg, tables.fdt, tables.anoise, tables.snoise, tables.q,
        tables.phi, tables.pinv, tables.f_mode, tables.lam, tables.b_mode,
        tables.use_grid, tables.norm_mode, spec_cubic.domain_radius, 0,
        np.empty((0, 1)))
    ok = ha == hb and np.array_equal(xa, xb)
    print(f"exit-path agreement (bit-identical): {'PASS' if ok else 'FAIL'}")


if __name__ == "__main__":
    main()
