#!/usr/bin/env python3
"""Benchmark the compiled RK4 kernel against the pure-Python fallback.

Runs the same fixed-step trajectories through both implementations,
checks bitwise agreement, and reports wall-clock timings.

Usage: python3 scripts/benchmark_kernels.py [--days 180] [--step 0.5]
                                            [--repeats 20]
"""

import argparse
import time

import numpy as np

from epiops._kernel import BACKEND, _rk4_py
from epiops.model import gamma, initial_state
from epiops.synthetic import default_calibration, make_params


def build_case(seed: int, days: float, step: float):
    rng = np.random.default_rng(seed)
    p = make_params(rng, float(rng.uniform(1e6, 2e7)), default_calibration())
    x0 = initial_state(p, 200.0, 3.0)
    nsteps = int(round(days / step))
    t_half = np.arange(2 * nsteps + 1) * (step / 2.0)
    beta_half = p.alpha * gamma(t_half, p.t0, p.k)
    args = (x0, beta_half, p.sigma, p.r_i, p.r_r, p.r_d, p.r_rh, p.r_dh,
            p.p_d, p.p_h, p.m, p.population, step, nsteps, 1e-8)
    return args


def bench(fn, cases, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        out = [np.asarray(fn(*args)) for args in cases]
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--days", type=float, default=180.0)
    ap.add_argument("--step", type=float, default=0.5)
    ap.add_argument("--cases", type=int, default=25)
    ap.add_argument("--repeats", type=int, default=20)
    opts = ap.parse_args()

    cases = [build_case(s, opts.days, opts.step) for s in range(opts.cases)]
    t_py, out_py = bench(_rk4_py.rk4_trajectory, cases, opts.repeats)

    if BACKEND != "cython":
        print("compiled kernel unavailable; python fallback only")
        print(f"python: {t_py * 1e3:8.2f} ms "
              f"({opts.cases} trajectories, {opts.days:g} days, "
              f"step {opts.step:g})")
        return

    from epiops._kernel import _rk4
    t_cy, out_cy = bench(_rk4.rk4_trajectory, cases, opts.repeats)

    identical = all(np.array_equal(a, b) for a, b in zip(out_py, out_cy))
    print(f"{opts.cases} trajectories, {opts.days:g} days, step {opts.step:g},"
          f" best of {opts.repeats}")
    print(f"python: {t_py * 1e3:8.2f} ms")
    print(f"cython: {t_cy * 1e3:8.2f} ms")
    print(f"speedup: {t_py / t_cy:6.1f}x")
    print(f"bitwise identical: {identical}")
    if not identical:
        raise SystemExit("kernel outputs diverged")


if __name__ == "__main__":
    main()
