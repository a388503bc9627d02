"""Compiled kernels vs the numpy fallback on the hot loops.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from rcinvariants import _backend
from rcinvariants.invariants import initial_tangent_basis
from rcinvariants.reservoir import ReservoirParams, build_reservoir


def cases():
    u0 = np.random.default_rng(0).uniform(7, 9, 10)
    Q10 = initial_tangent_basis(10, 10, 0)
    res = build_reservoir(ReservoirParams(N=400, rho_A=0.02, sigma_b=0.5), 10, 0)
    A = (res.A.indptr, res.A.indices, res.A.data, res.W_in)
    rng = np.random.default_rng(1)
    W = np.ascontiguousarray(rng.normal(size=(10, 400)) * 0.05)
    r0 = rng.uniform(-0.5, 0.5, 400)
    U = rng.normal(size=(5000, 10))
    Q1 = initial_tangent_basis(400, 1, 0)
    return {
        "l96_trajectory (20k steps)": lambda k: k.l96_trajectory(u0, 8.0, 0.01, 0, 20_000),
        "l96_lyapunov (10 exps, 5k steps)": lambda k: k.l96_lyapunov(u0, 8.0, 0.01, Q10, 500,
                                                                     5_000, 10),
        "rc_drive (N=400, 5k steps)": lambda k: k.rc_drive(*A, 0.5, 1.0, r0, U),
        "rc_forecast (N=400, 5k steps)": lambda k: k.rc_forecast(*A, W, 0.5, 1.0, r0, 5_000),
        "rc_lyapunov (N=400, k=1, 5k steps)": lambda k: k.rc_lyapunov(*A, W, 0.5, 1.0, r0, Q1,
                                                                      500, 5_000, 10),
    }


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    compiled, fallback = _backend.get("compiled"), _backend.get("python")
    print(f"{'kernel':40s} {'compiled [s]':>13s} {'numpy [s]':>11s} {'speedup':>8s}")
    for name, run in cases().items():
        tc = best_time(lambda: run(compiled), args.repeat)
        tp = best_time(lambda: run(fallback), args.repeat)
        print(f"{name:40s} {tc:13.4f} {tp:11.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
