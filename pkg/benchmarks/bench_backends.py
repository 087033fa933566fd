"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the two hot kernels (per-pulse link pipeline, sync correlator) on
both backends at several block sizes and prints a timing table plus the
observed numerical agreement.

Usage: python benchmarks/bench_backends.py [pulses ...]
"""

import sys
import time

import numpy as np

from droneqkd._kernels import _py

try:
    from droneqkd._kernels import _core
except ImportError:
    _core = None


def make_args(n, seed=0):
    rng = np.random.default_rng(seed)
    return dict(
        x=rng.standard_normal(n), p=rng.standard_normal(n),
        amp=np.full(n, 0.8), drift_incr=rng.standard_normal(n) * 1e-4,
        doppler_incr=2.5e-4,
        z_chx=rng.standard_normal(n), z_chp=rng.standard_normal(n),
        z_dx=rng.standard_normal(n), z_dp=rng.standard_normal(n),
        drift0=0.4, doppler0=5.9, xi_sqrt=0.1, eta_sqrt=0.9, det_sigma=1.01,
    )


def time_call(fn, *args, repeats=5, **kwargs):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv):
    sizes = [int(float(a)) for a in argv[1:]] or [100_000, 1_000_000, 4_000_000]
    if _core is None:
        print("compiled backend unavailable; showing python fallback only")
    signs = np.array([1, -1, 1, 1, -1, 1, -1, -1, 1, 1], dtype=np.int8)
    header = f"{'kernel':<18}{'pulses':>10}{'python':>12}{'compiled':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        args = make_args(n)
        t_py, out_py = time_call(_py.propagate_block, **args)
        if _core is not None:
            t_c, out_c = time_call(_core.propagate_block, **args)
            dev = max(np.abs(out_py[0] - out_c[0]).max(),
                      np.abs(out_py[1] - out_c[1]).max())
            print(f"{'propagate_block':<18}{n:>10}{t_py * 1e3:>10.1f}ms"
                  f"{t_c * 1e3:>10.1f}ms{t_py / t_c:>8.1f}x   (max dev {dev:.1e})")
        else:
            print(f"{'propagate_block':<18}{n:>10}{t_py * 1e3:>10.1f}ms{'-':>12}{'-':>9}")

        u = np.random.default_rng(1).standard_normal(n)
        t_py, res_py = time_call(_py.match_pattern, u, signs, 6.0)
        if _core is not None:
            t_c, res_c = time_call(_core.match_pattern, u, signs, 6.0)
            agree = "ok" if res_py == res_c else "MISMATCH"
            print(f"{'match_pattern':<18}{n:>10}{t_py * 1e3:>10.1f}ms"
                  f"{t_c * 1e3:>10.1f}ms{t_py / t_c:>8.1f}x   ({agree})")
        else:
            print(f"{'match_pattern':<18}{n:>10}{t_py * 1e3:>10.1f}ms{'-':>12}{'-':>9}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv))
