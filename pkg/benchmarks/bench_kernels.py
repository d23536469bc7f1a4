"""Time the wealth-recursion kernels: numba vs the numpy fallback.

    python benchmarks/bench_kernels.py [--paths 256] [--steps 100] [--repeat 20]

Both kernels are imported from the same module regardless of
DEEPHEDGE_PURE_NUMPY; the numba column is skipped if numba is missing.
"""
import argparse
import time

import numpy as np

from deephedge import kernels
from deephedge._accel import HAS_NUMBA
from deephedge.engine import HedgeConfig, StrategyStack, loss_and_grad
from deephedge.market import MarketParams, sample_paths
from deephedge.payoff import CallClaim


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=256)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    market = MarketParams(n_steps=args.steps)
    paths = sample_paths(market, args.paths, seed=0)
    stack = StrategyStack.init(args.steps, market.s0, seed=0)
    raw = stack.positions(paths.prices) * 3.0
    fwd_args = (paths.prices, paths.increments, raw, 16.7, -100.0, market.mu, market.sigma, market.dt, 1e-9, 50.0)
    wealth, positions, codes, _ = kernels._wealth_forward_np(*fwd_args)
    adj = np.random.default_rng(0).normal(size=wealth.shape)
    bwd_args = (paths.prices, paths.increments, wealth, positions, codes, adj, -100.0, market.mu, market.sigma,
                market.dt, 50.0)

    impls = {"numpy": (kernels._wealth_forward_np, kernels._wealth_backward_np)}
    if HAS_NUMBA:
        impls["numba"] = (kernels._wealth_forward_jit, kernels._wealth_backward_jit)
        kernels._wealth_forward_jit(*fwd_args)  # compile outside the timing
        kernels._wealth_backward_jit(*bwd_args)

    print(f"paths={args.paths} steps={args.steps} best of {args.repeat}")
    print(f"{'kernel':<10}{'forward ms':>12}{'backward ms':>13}")
    for name, (fwd, bwd) in impls.items():
        tf = best_of(lambda: fwd(*fwd_args), args.repeat)
        tb = best_of(lambda: bwd(*bwd_args), args.repeat)
        print(f"{name:<10}{tf * 1e3:>12.3f}{tb * 1e3:>13.3f}")

    cfg = HedgeConfig(v0=16.7, c_cost=0.01)
    t = best_of(lambda: loss_and_grad(stack, paths, CallClaim(), cfg), args.repeat)
    print(f"full loss_and_grad with active backend: {t * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
