"""Compare the compiled and numpy frontal kernels.

    python benchmarks/bench_kernels.py [--sizes 32,64,128,256] [--repeats 5]

Prints per-size medians for the dense partial LU and the two triangular
sweeps, then a full factor + solve on a generated matrix with each backend.
"""

import argparse
import statistics
import time

import numpy as np

from ess import kernels
from ess.matgen import power_system_spec, generate
from ess.numeric import parallel_factor, solve
from ess.sparse import residual_norm

NAMES = ("dense_lu", "scatter_add", "scatter_entries", "front_forward", "front_backward")


def timed(fn, repeats):
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def dense_case(k, m, repeats):
    rng = np.random.default_rng(m)
    F0 = rng.standard_normal((m, m)) + m * np.eye(m)
    idx = np.arange(m, dtype=np.int64)

    def run():
        k.dense_lu(F0.copy(), idx.copy(), idx.copy(), m // 2, 1e-3, 1e-14)

    Lp = np.tril(F0, -1)[:, : m // 2] + np.eye(m, m // 2)
    Up = np.triu(F0)[: m // 2]
    w = rng.standard_normal(m)
    return (timed(run, repeats),
            timed(lambda: k.front_forward(Lp, w.copy()), repeats),
            timed(lambda: k.front_backward(Up, w.copy()), repeats))


def full_case(k, n, repeats):
    a, _ = generate(power_system_spec(n, seed=0))
    for name in NAMES:
        setattr(kernels, name, getattr(k, name))
    b = np.ones(a.n)
    lu, _ = parallel_factor(a)
    assert residual_norm(a, solve(lu, b), b) <= 1e-10
    return timed(lambda: parallel_factor(a), repeats), timed(lambda: solve(lu, b), repeats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="32,64,128,256")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--n", type=int, default=3000, help="dimension of the full-run matrix")
    args = ap.parse_args()
    backends = [kernels.load("python")]
    try:
        backends.append(kernels.load("cython"))
    except ImportError:
        print("compiled extension not available; numpy backend only")
    print(f"{'backend':8s} {'m':>5s} {'lu_ms':>9s} {'fwd_us':>9s} {'bwd_us':>9s}")
    for m in (int(s) for s in args.sizes.split(",")):
        for k in backends:
            lu_t, f_t, b_t = dense_case(k, m, args.repeats)
            print(f"{k.NAME:8s} {m:5d} {lu_t * 1e3:9.3f} {f_t * 1e6:9.1f} {b_t * 1e6:9.1f}")
    print()
    print(f"{'backend':8s} {'n':>6s} {'factor_s':>9s} {'solve_s':>9s}")
    for k in backends:
        ft, st = full_case(k, args.n, args.repeats)
        print(f"{k.NAME:8s} {args.n:6d} {ft:9.4f} {st:9.4f}")


if __name__ == "__main__":
    main()
