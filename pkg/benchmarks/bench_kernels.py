#!/usr/bin/env python3
"""Time the JIT-compiled kernels against their pure-Python fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Needs numba enabled (the default); with L2PUB_NUMBA=0 only the fallback
exists and there is nothing to compare.
"""

import argparse
import time

import numpy as np

from l2pub import kernels
from l2pub.costs import LinearDelay, PublishingCostParams
from l2pub.oracle import LatticePriceProcess, ModifiedMdpConfig, _modified_tables
from l2pub.policies import GreedyBalancePolicy, MartingaleThreshold, ThresholdPolicy
from l2pub.prices import LogNormalWalk
from l2pub.simulate import SimConfig, _episode_prices, _kernel_plan, _run_kernel


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_agg_table():
    delay = 0.5 * np.arange(100_000, dtype=np.float64)

    def run(fn):
        return lambda: fn(delay, 1 - 1e-7, 100_000)

    return "aggregated delay table (n=1e5)", run


def bench_episode():
    spec = LinearDelay(1e-7)
    cfg = SimConfig(
        gamma=1 - 1e-7,
        horizon=1000,
        seed=0,
        price=LogNormalWalk(1.0, -0.005, 0.1),
        publish=PublishingCostParams(1.0, 0.0),
        delay=spec,
    )
    policy = ThresholdPolicy(MartingaleThreshold(5e-8, cfg.gamma))
    paths = [_episode_prices(cfg, e) for e in range(50)]
    plan = _kernel_plan(policy, cfg, cfg.horizon)

    def run(fn):
        def body():
            for prices in paths:
                _run_episode_with(fn, policy, cfg, prices, plan)

        return body

    return "threshold episodes (50 x 1000 steps)", run


def _run_episode_with(fn, policy, cfg, prices, plan):
    # the simulator resolves the kernel through the module; swap it temporarily
    original = kernels.episode_kernel
    kernels.episode_kernel = fn
    try:
        _run_kernel(policy, cfg, prices, plan)
    finally:
        kernels.episode_kernel = original


def bench_modified_mdp():
    cfg = ModifiedMdpConfig(
        gamma=0.99,
        horizon=60,
        lattice=LatticePriceProcess.two_point(1.0, 1.2),
        publish=PublishingCostParams(0.0, 100.0),
        delay=LinearDelay(2.0),
        q_max=60,
    )
    levels, delay_cum = _modified_tables(cfg)
    args = (
        levels.offsets,
        levels.prices,
        levels.trans,
        levels.probs,
        cfg.gamma,
        cfg.publish.alpha,
        cfg.publish.beta,
        delay_cum,
        cfg.q_max,
        cfg.horizon,
    )

    def run(fn):
        return lambda: fn(*args)

    return "backward induction (61 levels, q<=60)", run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not kernels.NUMBA_ENABLED:
        print("numba is disabled (L2PUB_NUMBA=0 or not installed); nothing to compare")
        return

    benches = [
        (bench_agg_table(), kernels.agg_delay_table),
        (bench_episode(), kernels.episode_kernel),
        (bench_modified_mdp(), kernels.modified_mdp_kernel),
    ]

    print(f"{'benchmark':<42} {'numba':>10} {'fallback':>10} {'speedup':>8}")
    for (name, run), kernel in benches:
        compiled = run(kernel)
        fallback = run(kernels.py_func(kernel))
        compiled()  # warm the JIT cache outside the timed region
        t_jit = best_of(compiled, args.repeats)
        t_py = best_of(fallback, max(1, args.repeats // 2))
        print(f"{name:<42} {t_jit * 1e3:>8.2f}ms {t_py * 1e3:>8.2f}ms {t_py / t_jit:>7.1f}x")


if __name__ == "__main__":
    main()
