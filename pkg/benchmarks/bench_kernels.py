"""Timing comparison of the two grid-evaluation backends.

The jitted backend is selected by default; setting PLAQUECTRL_NO_NUMBA=1
before import forces the pure-numpy path.  This script runs both in
subprocesses so each import sees the right flag, then prints a table.

Usage: python3 benchmarks/bench_kernels.py [--sizes 8,16,32] [--repeats 200]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from plaquectrl import kernels
from plaquectrl.params import ModelParameters
from plaquectrl.spectral import build_setup

sizes = json.loads(sys.argv[1])
repeats = int(sys.argv[2])
p = ModelParameters()
rows = []
for n in sizes:
    s = build_setup(n, n)
    rng = np.random.default_rng(0)
    Rt = rng.uniform(0.0, 0.2, n)
    vin = rng.normal(size=n) * 0.05
    v = rng.normal(size=(n, n)) * 0.05
    L = rng.normal(size=(n, n)) * 1e-4
    H = rng.normal(size=(n, n)) * 1e-4
    F = rng.normal(size=(n, n)) * 1e-4
    phi = rng.uniform(0.0, 1.0, n)
    kernels.eval_state_grids(s.rho, Rt, vin, v, L, H, F, phi, p)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        kernels.eval_state_grids(s.rho, Rt, vin, v, L, H, F, phi, p)
    rows.append({"n": n, "us_per_call":
                 (time.perf_counter() - t0) / repeats * 1e6})
print(json.dumps({"backend": kernels.backend_name(), "rows": rows}))
"""


def _run(no_numba, sizes, repeats):
    env = dict(os.environ)
    if no_numba:
        env["PLAQUECTRL_NO_NUMBA"] = "1"
    else:
        env.pop("PLAQUECTRL_NO_NUMBA", None)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, json.dumps(sizes), str(repeats)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,16,32",
                    help="comma-separated square grid sizes")
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()
    sizes = [int(x) for x in args.sizes.split(",")]

    jit = _run(False, sizes, args.repeats)
    plain = _run(True, sizes, args.repeats)
    print(f"grid-evaluation kernel, {args.repeats} calls per size")
    print(f"{'N=M':>6} {jit['backend']:>12} {plain['backend']:>12} "
          f"{'speedup':>8}")
    for a, b in zip(jit["rows"], plain["rows"]):
        print(f"{a['n']:>6} {a['us_per_call']:>10.1f}us "
              f"{b['us_per_call']:>10.1f}us "
              f"{b['us_per_call'] / a['us_per_call']:>7.2f}x")


if __name__ == "__main__":
    main()
