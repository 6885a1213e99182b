"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs the two hot kernels (exact chain-path sampling and per-step event
scatter) plus an end-to-end forward simulation, under both backends, and
checks the outputs agree bitwise.  Usage::

    python benchmarks/compare_backends.py [--paths N] [--repeat R]
"""

import argparse
import time

import numpy as np

from rsjd import (
    ControlPolicy,
    DiscreteJumpSizes,
    application1_preset,
    generate_bundles,
    kernels,
    make_grid,
    simulate_forward_set,
    two_state,
)
from rsjd._backend import using_numba
from rsjd.model import LqSpec


def timeit(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def bench_ctmc(n_paths, repeat):
    gen = two_state(1.0, 1.0)
    rng = np.random.default_rng(0)
    horizon = 10.0
    k = 40
    e = rng.exponential(size=(n_paths, k))
    v = rng.random((n_paths, k))
    init0 = np.zeros(n_paths, dtype=np.int64)
    args = (gen.exit_rates, gen.embedded_cumulative(), init0, horizon, e, v)
    kernels.ctmc_paths_numba(*args)  # JIT warmup
    t_nb, out_nb = timeit(lambda: kernels.ctmc_paths_numba(*args), repeat)
    t_np, out_np = timeit(lambda: kernels.ctmc_paths_numpy(*args), repeat)
    identical = all(np.array_equal(a, b) for a, b in zip(out_nb, out_np))
    return t_nb, t_np, identical


def bench_scatter(n_events, repeat):
    rng = np.random.default_rng(1)
    idx = rng.integers(0, n_events // 10, size=n_events)
    vals = rng.standard_normal(n_events)
    out = np.zeros(n_events // 10)
    kernels.scatter_add_numba(out.copy(), idx, vals)  # JIT warmup

    def run(fn):
        buf = np.zeros(n_events // 10)
        fn(buf, idx, vals)
        return buf

    t_nb, out_nb = timeit(lambda: run(kernels.scatter_add_numba), repeat)
    t_np, out_np = timeit(lambda: run(kernels.scatter_add_numpy), repeat)
    return t_nb, t_np, np.array_equal(out_nb, out_np)


def bench_simulation(n_paths, repeat):
    chain = two_state(1.0, 1.0)
    dist = DiscreteJumpSizes(np.array([0.4, -0.2]), np.array([0.5, 0.5]))
    spec = LqSpec(
        c1=(-1.0, 0.0), c2=(0.0, -0.5), c3=(0.0, 1.0), c4=(0.5, 1.0),
        horizon=1.0, chain=chain, sigma=lambda t: 1.0,
        gamma=lambda t, z: z, jump_rate=2.0, jump_sizes=dist,
    )
    forward, _, _ = application1_preset(spec)
    bundles = generate_bundles(make_grid(1.0, 200), chain, spec.jump_measure(), 7, n_paths)
    policy = ControlPolicy.constant(0.6)

    saved = (kernels.ctmc_paths, kernels.scatter_add)
    results = {}
    for label, pair in (
        ("numba", (kernels.ctmc_paths_numba, kernels.scatter_add_numba)),
        ("numpy", (kernels.ctmc_paths_numpy, kernels.scatter_add_numpy)),
    ):
        kernels.ctmc_paths, kernels.scatter_add = pair
        t, out = timeit(lambda: simulate_forward_set(forward, policy, bundles, 0.0).values, repeat)
        results[label] = (t, out)
    kernels.ctmc_paths, kernels.scatter_add = saved
    identical = np.array_equal(results["numba"][1], results["numpy"][1])
    return results["numba"][0], results["numpy"][0], identical


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=100_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not using_numba():
        raise SystemExit("run with the numba backend available (RSJD_BACKEND unset or 'numba')")

    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}  bitwise")
    for name, (t_nb, t_np, same) in (
        ("ctmc path sampling", bench_ctmc(args.paths, args.repeat)),
        ("event scatter-add", bench_scatter(args.paths * 4, args.repeat)),
        ("forward simulation (20k)", bench_simulation(20_000, args.repeat)),
    ):
        print(f"{name:<28}{t_nb * 1e3:>10.1f}ms{t_np * 1e3:>10.1f}ms"
              f"{t_np / t_nb:>9.2f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
