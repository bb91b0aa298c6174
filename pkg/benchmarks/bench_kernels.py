"""Benchmark the two hot kernels on the numba and numpy backends.

The package dispatches its margin solve and policy-gradient accumulation
through MARGINPO_BACKEND (auto/numba/numpy). This script times both
backends on the same inputs and reports the speedup. Run from a shell:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --pool 1024 --batch 512 --repeats 200
"""
import argparse
import os
import time

import numpy as np


def time_call(fn, repeats):
    """Best-of-run wall time for fn(), after one untimed warmup call."""
    fn()
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_backend(backend, args):
    os.environ["MARGINPO_BACKEND"] = backend
    from marginpo import kernels

    rng = np.random.default_rng(args.seed)
    margins = rng.normal(0.0, 3.0, args.pool)

    def run_solve():
        kernels.mwu_solve(margins, 0.4, args.tau, min(0.5 / args.tau, 1.0),
                          args.iterations)

    prompts = max(args.batch // 4, 2)
    rows = rng.integers(0, prompts, args.batch)
    winners = rng.integers(0, args.responses, args.batch)
    losers = (winners + 1 + rng.integers(0, args.responses - 1,
                                         args.batch)) % args.responses
    coef_w = rng.uniform(0.1, 2.0, args.batch)
    coef_l = rng.uniform(0.1, 2.0, args.batch)
    dvals = -rng.uniform(0.0, 1.0, args.batch)
    logits = rng.normal(0.0, 1.0, (prompts, args.responses))
    softmax = np.exp(logits - logits.max(axis=1, keepdims=True))
    softmax /= softmax.sum(axis=1, keepdims=True)

    def run_grad():
        kernels.policy_batch_grad(rows, winners, losers, coef_w, coef_l,
                                  dvals, softmax)

    return {
        "solve": time_call(run_solve, args.repeats),
        "grad": time_call(run_grad, args.repeats),
    }


def main():
    parser = argparse.ArgumentParser(
        description="Time the margin-solve and policy-gradient kernels on "
                    "the numba and numpy backends.")
    parser.add_argument("--pool", type=int, default=256,
                        help="margin pool size for the solve (default 256)")
    parser.add_argument("--iterations", type=int, default=20,
                        help="solver iterations per call (default 20)")
    parser.add_argument("--tau", type=float, default=1.0,
                        help="entropy regularizer weight (default 1.0)")
    parser.add_argument("--batch", type=int, default=64,
                        help="pairs per policy-gradient call (default 64)")
    parser.add_argument("--responses", type=int, default=4,
                        help="responses per prompt (default 4)")
    parser.add_argument("--repeats", type=int, default=100,
                        help="timing repeats, best-of (default 100)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    from marginpo.kernels import HAS_NUMBA

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba is not installed; timing the numpy backend only")

    results = {b: bench_backend(b, args) for b in backends}
    print(f"pool={args.pool} iterations={args.iterations} "
          f"batch={args.batch} responses={args.responses} "
          f"(best of {args.repeats})")
    for kernel, label in (("solve", "margin solve"),
                          ("grad", "policy gradient")):
        row = f"{label:16s}"
        for backend in backends:
            row += f"  {backend}: {results[backend][kernel] * 1e6:9.1f} us"
        if "numba" in results:
            ratio = results["numpy"][kernel] / results["numba"][kernel]
            row += f"  speedup: {ratio:5.1f}x"
        print(row)


if __name__ == "__main__":
    main()
