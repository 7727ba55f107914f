"""Compare the numba and pure-numpy kernel backends.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``CASCADE_FUSE_BACKEND``. Usage::

    python3 benchmarks/bench_backends.py [--repeat 3] [--duration 20]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from cascade_fuse import _kernels
from cascade_fuse.filters.ahrs import AhrsParams, AttitudeGaussian, ahrs_step
from cascade_fuse.harness.trials import run_nonlinear_trial
from cascade_fuse.scenarios.nonlinear import NonlinearConfig
from cascade_fuse.so3 import Rotation3

repeat, duration = int(sys.argv[1]), float(sys.argv[2])
rng = np.random.default_rng(0)

def best(fn):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter(); fn(); times.append(time.perf_counter() - t)
    return min(times)

mean = rng.standard_normal(15)
A = rng.standard_normal((15, 15)); L = np.linalg.cholesky(A @ A.T + 15 * np.eye(15))
def sigma():
    for _ in range(2000):
        Z = _kernels.cubature(mean, L)
        _kernels.moments(Z)

phis = 0.3 * rng.standard_normal((30, 3))
def so3():
    for _ in range(2000):
        _kernels.so3_log_batch(_kernels.so3_exp_batch(phis))

params = AhrsParams()
def ahrs():
    att = AttitudeGaussian(Rotation3.identity(), 0.01 * np.eye(3))
    g = np.array([0.01, -0.02, 0.03]); a = np.array([0.0, 0.0, 9.81]); m = np.array([25.0, 0.0, -43.3])
    for _ in range(6000):
        att, _ = ahrs_step(att, g, a, m, 0.01, params)

cfg = NonlinearConfig(duration=duration)
def trial():
    run_nonlinear_trial(cfg, 0, 1)

print(json.dumps({
    "backend": _kernels.BACKEND,
    "sigma points x2000 (15-dim)": best(sigma),
    "so3 exp+log x2000 (30 rotations)": best(so3),
    "ahrs x6000 steps": best(ahrs),
    f"nonlinear trial ({duration:g} s, 4 estimators)": best(trial),
}))
"""


def run(backend: str, repeat: int, duration: float) -> dict:
    env = dict(os.environ, CASCADE_FUSE_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, str(repeat), str(duration)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--duration", type=float, default=20.0)
    args = p.parse_args()
    res = {b: run(b, args.repeat, args.duration) for b in ("numpy", "numba")}
    if res["numba"]["backend"] != "numba":
        print("numba is not installed; only the numpy backend was measured")
    keys = [k for k in res["numpy"] if k != "backend"]
    width = max(map(len, keys))
    print(f"{'kernel':<{width}}  {'numpy [s]':>10}  {'numba [s]':>10}  {'speedup':>8}")
    for k in keys:
        a, b = res["numpy"][k], res["numba"][k]
        print(f"{k:<{width}}  {a:>10.4f}  {b:>10.4f}  {a / b:>7.1f}x")


if __name__ == "__main__":
    main()
