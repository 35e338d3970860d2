"""Timing comparison of the jit kernels against the numpy fallbacks.

Runs the slot loop and both first-passage samplers at a mid-size
configuration under each backend and prints a table with the speedups.
Agreement is also spot-checked (the slot loops are bit-compatible; the
oracle fallbacks use a different generator and only match statistically).

Usage: python benchmarks/bench_kernels.py [--m 200] [--slots 100000]
"""

import argparse
import math
import time

from racsim import _kernels as K
from racsim.harness import _run_kernel
from racsim.policies import PolicyConfig, PolicyKind


def time_slot_loop(m, slots, use_jit):
    orig = K.HAVE_NUMBA
    K.HAVE_NUMBA = use_jit and orig
    try:
        t0 = time.perf_counter()
        report, extras = _run_kernel(
            PolicyConfig(PolicyKind.EBT, beta=math.sqrt(math.e * m)),
            m, slots, 1.0, 0.0, 12345)
        dt = time.perf_counter() - t0
    finally:
        K.HAVE_NUMBA = orig
    return dt, report.naee, extras["tx_hash"]


def time_oracle(use_jit, paths=5000):
    fns = ((K.brownian_paths_jit, K.walk_paths_jit) if use_jit
           else (K.brownian_paths_numpy, K.walk_paths_numpy))
    t0 = time.perf_counter()
    fns[0](1.0, 1e-4, paths, 7, 10_000_000)
    t_b = time.perf_counter() - t0
    t0 = time.perf_counter()
    fns[1](math.sqrt(500 * math.e), 1.0, paths, 7, 10_000_000)
    t_w = time.perf_counter() - t0
    return t_b, t_w


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=200)
    ap.add_argument("--slots", type=int, default=100_000)
    ap.add_argument("--paths", type=int, default=5000)
    args = ap.parse_args()

    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled (RACSIM_NO_NUMBA); "
              "nothing to compare against")
        return

    # warm the jit caches outside the timed region
    time_slot_loop(16, 64, True)
    time_oracle(True, paths=8)

    jt, naee_j, hash_j = time_slot_loop(args.m, args.slots, True)
    nt, naee_n, hash_n = time_slot_loop(args.m, args.slots, False)
    assert hash_j == hash_n, "slot loops diverged"
    assert abs(naee_j - naee_n) <= 1e-12 * max(1.0, naee_j)
    rate = args.m * args.slots / 1e6
    print(f"slot loop (M={args.m}, K={args.slots}, error-threshold policy)")
    print(f"  jit:   {jt:7.3f} s   ({rate / jt:7.1f} M node-slots/s)")
    print(f"  numpy: {nt:7.3f} s   ({rate / nt:7.1f} M node-slots/s)")
    print(f"  speedup: {nt / jt:5.1f}x   (outputs bit-identical)")

    bj, wj = time_oracle(True, args.paths)
    bn, wn = time_oracle(False, args.paths)
    print(f"first-passage samplers ({args.paths} paths; numpy batches across "
          f"paths, so the two are close)")
    print(f"  brownian  jit: {bj:7.3f} s   numpy: {bn:7.3f} s   numpy/jit {bn / bj:4.2f}x")
    print(f"  walk      jit: {wj:7.3f} s   numpy: {wn:7.3f} s   numpy/jit {wn / wj:4.2f}x")


if __name__ == "__main__":
    main()
