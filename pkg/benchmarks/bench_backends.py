"""Timing comparison of the numba and numpy kernel implementations.

Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats 5]

Prints per-kernel median wall time for both backends plus the speedup.
The numba column includes a warm-up call so JIT compilation is not
counted.
"""

import argparse
import time

import numpy as np

from hsvlm import backend
from hsvlm.rng import Rng


def make_cases():
    rng = Rng(1)
    x = rng.normal((4096, 64), std=2.0, dtype=np.float32)
    gamma = rng.normal((64,), dtype=np.float32)
    beta = rng.normal((64,), dtype=np.float32)
    gout = rng.normal((4096, 64), dtype=np.float32)
    logits = rng.normal((4096, 16), std=3.0, dtype=np.float32)
    p = rng.normal((200_000,), dtype=np.float32)
    g = rng.normal((200_000,), dtype=np.float64)
    padded = rng.normal((180, 180, 25), dtype=np.float32)
    coords = np.stack([Rng(2).integers(0, 160, 512),
                       Rng(3).integers(0, 160, 512)], axis=1).astype(np.int64)

    def layernorm_case(impl):
        return lambda: impl["layernorm_fwd"](x, gamma, beta, 1e-5)

    def layernorm_bwd_case(impl):
        _, mu, rstd = impl["layernorm_fwd"](x, gamma, beta, 1e-5)
        return lambda: impl["layernorm_bwd"](x, gamma, mu, rstd, gout)

    def adam_case(impl):
        pp, m, v = p.copy(), np.zeros_like(g), np.zeros_like(g)
        return lambda: impl["adam_update"](pp, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1)

    return [
        ("gelu_fwd", lambda impl: (lambda: impl["gelu_fwd"](x))),
        ("gelu_bwd", lambda impl: (lambda: impl["gelu_bwd"](x, gout))),
        ("layernorm_fwd", layernorm_case),
        ("layernorm_bwd", layernorm_bwd_case),
        ("softmax_rows", lambda impl: (lambda: impl["softmax_rows"](logits))),
        ("adam_update", adam_case),
        ("extract_patches",
         lambda impl: (lambda: impl["extract_patches"](padded, coords, 15))),
    ]


def median_time(fn, repeats):
    fn()  # warm-up (JIT compile for numba, cache warm for numpy)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    impls = {"numpy": backend._NUMPY_IMPL}
    try:
        impls["numba"] = backend._build_numba_impl()
    except ImportError:
        print("numba not importable; only the numpy column will appear")

    print(f"{'kernel':<18}" + "".join(f"{name + ' (ms)':>14}" for name in impls)
          + ("       speedup" if len(impls) == 2 else ""))
    for name, case in make_cases():
        row = f"{name:<18}"
        timings = {}
        for impl_name, impl in impls.items():
            timings[impl_name] = median_time(case(impl), args.repeats)
            row += f"{timings[impl_name] * 1e3:>14.3f}"
        if len(timings) == 2:
            row += f"{timings['numpy'] / timings['numba']:>12.2f}x"
        print(row)


if __name__ == "__main__":
    main()
