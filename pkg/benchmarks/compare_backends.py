#!/usr/bin/env python3
"""Time the ADMM trainer under the numba backend and the pure-numpy fallback.

The sweep kernel compiles with numba unless CRIMECAST_NO_NUMBA=1 is set
before import, so each timing runs in a child process with the right
environment. Usage:

    python benchmarks/compare_backends.py [--grid-side 4] [--T 40] [--iters 50]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_case(grid_side: int, T: int, K: int, M: int, iters: int) -> dict:
    from crimecast.datagen import SynthSpec, generate
    from crimecast.solver import Hyperparams, TrainingData, fit
    from crimecast._kernels import backend

    spec = SynthSpec(grid_side=grid_side, T=T, K=K, M=M, noise_sd=0.2,
                     temporal_smoothness=T, spatial_smoothness_scale=10.0,
                     task_correlation=0.5, seed=0)
    res = generate(spec)
    hp = Hyperparams(alpha=0.3, beta=0.3, gamma=0.5, rho=2.0, eta=5e-3,
                     max_iters=iters, tol=1e-12)
    data = TrainingData.build(res.crimes, res.features, res.grid, hp)
    fit(data, Hyperparams(alpha=0.3, beta=0.3, gamma=0.5, rho=2.0, eta=5e-3,
                          max_iters=2, tol=1e-12), seed=0)  # jit warmup
    start = time.perf_counter()
    _, report = fit(data, hp, seed=0)
    elapsed = time.perf_counter() - start
    return {"backend": backend(), "seconds": elapsed, "iterations": report.iterations,
            "per_iteration_ms": 1e3 * elapsed / report.iterations}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid-side", type=int, default=4)
    parser.add_argument("--T", type=int, default=40)
    parser.add_argument("--K", type=int, default=3)
    parser.add_argument("--M", type=int, default=6)
    parser.add_argument("--iters", type=int, default=50)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.child:
        print(json.dumps(run_case(args.grid_side, args.T, args.K, args.M, args.iters)))
        return 0

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, CRIMECAST_NO_NUMBA=disable)
        cmd = [sys.executable, os.path.abspath(__file__), "--child",
               "--grid-side", str(args.grid_side), "--T", str(args.T),
               "--K", str(args.K), "--M", str(args.M), "--iters", str(args.iters)]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))

    n = args.grid_side**2
    print(f"instance: N={n} T={args.T} K={args.K} M={args.M}, {args.iters} iterations")
    for r in results:
        print(f"  {r['backend']:>5}: {r['seconds']:8.2f}s total, "
              f"{r['per_iteration_ms']:8.2f} ms/iteration")
    if results[1]["seconds"] > 0:
        print(f"  speedup: {results[1]['seconds'] / results[0]['seconds']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
