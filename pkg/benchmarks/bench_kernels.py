"""Time the propagator step kernel with and without numba.

Usage: python3 benchmarks/bench_kernels.py [--dim 100] [--cols 16] [--steps 4000] [--repeat 3]

Also times one full LM gate evaluation in a subprocess per backend, since the
backend is chosen at import time from FLUXCHAIN_DISABLE_NUMBA.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fluxchain import kernels

GATE_SNIPPET = """
import time
from fluxchain.chain import named_chain, build_system
from fluxchain.dynamics import DriveSpec, PropagationSettings, evaluate_gate
ops, d = build_system(named_chain("LM"))
drive = DriveSpec(0.4879, -0.108846, 1.0000264, t_g=100.0, t_r=20.0, control=0, target=1)
s = PropagationSettings(check_convergence=False)
evaluate_gate(d, ops, drive, s)
t = time.perf_counter()
for _ in range(5):
    evaluate_gate(d, ops, drive, s)
print((time.perf_counter() - t) / 5)
"""


def random_problem(dim, cols, steps, n_nodes=8, seed=0):
    """Node exponentials of a random ``H0 + b D`` and interpolation weights at random ``b``."""
    rng = np.random.default_rng(seed)
    h0 = np.diag(rng.uniform(0, 20, dim))
    d = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    d = 0.05 * (d + d.conj().T)
    tau = 0.01
    stack = np.empty((n_nodes, dim, dim), dtype=complex)
    for j, x in enumerate(kernels.chebyshev_nodes(n_nodes)):
        w, v = np.linalg.eigh(h0 + x * d)
        stack[j] = (v * np.exp(-1j * tau * w)) @ v.conj().T
    weights = kernels.barycentric_weights(rng.uniform(-1, 1, steps), n_nodes)
    u = np.eye(dim, dtype=complex)[:, :cols]
    return stack, weights, u


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--cols", type=int, default=16)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-gate", action="store_true")
    args = ap.parse_args(argv)

    stack, weights, u = random_problem(args.dim, args.cols, args.steps)
    print(f"kernel: dim={args.dim} cols={args.cols} steps={args.steps} nodes={stack.shape[0]}")
    t_np = best_time(lambda: kernels._apply_steps_numpy(stack, weights, u), args.repeat)
    print(f"  numpy  {t_np * 1e3:9.1f} ms")
    if kernels._apply_steps_numba is not None:
        kernels._apply_steps_numba(stack, weights[:2], u)  # compile
        t_nb = best_time(lambda: kernels._apply_steps_numba(stack, weights, u), args.repeat)
        diff = np.abs(kernels._apply_steps_numba(stack, weights, u) - kernels._apply_steps_numpy(stack, weights, u)).max()
        print(f"  numba  {t_nb * 1e3:9.1f} ms   speedup {t_np / t_nb:5.2f}x   max diff {diff:.1e}")
    else:
        print("  numba  not installed")

    if args.skip_gate:
        return
    print("LM gate evaluation (mean of 5, after warm-up):")
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, FLUXCHAIN_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", GATE_SNIPPET], env=env, capture_output=True, text=True, check=True)
        print(f"  {label}  {float(out.stdout.strip()) * 1e3:9.1f} ms")


if __name__ == "__main__":
    main()
