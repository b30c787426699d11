"""Compare the compiled kernel core against the pure-NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--quick]

Times the two hot kernels (mutual-information accumulation, Gibbs sweeps)
on representative sizes and prints a table with the speedup of the
compiled backend. Also cross-checks that both backends agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dopepool import (
    Cluster,
    Design,
    PopulationSpec,
    PriorParams,
    TestErrorParams,
    pool_of,
    sample_data,
    sample_prior_matrix,
)
from dopepool import kernels
from dopepool.design import PoolCountMatrix, _loglik_tables
from dopepool.model import InfectionState
from dopepool.seeding import substream


def _bench(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_mi(n_samples: int, n_pools: int):
    n = 10
    spec = PopulationSpec(n, (Cluster(0, tuple(range(1, n))),))
    prior = PriorParams(0.2, 0.2, 0.01)
    err = TestErrorParams(0.2, 0.01)
    matrix = sample_prior_matrix(spec, prior, substream(1), n_samples)
    design = Design(tuple(pool_of(*range(j, j + 4)) for j in range(n_pools)))
    pcm = PoolCountMatrix.build(matrix, design, n)
    ll_neg, ll_pos = _loglik_tables(pcm.counts, err)
    with np.errstate(invalid="ignore"):
        outcomes = (substream(2).random(ll_neg.shape) < -np.expm1(ll_neg)).astype(np.uint8)
    results = {}
    for backend in kernels.available_backends():
        seconds, (psi, _) = _bench(
            lambda b=backend: kernels.mi_accumulate(ll_neg, ll_pos, outcomes, backend=b)
        )
        results[backend] = (seconds, psi)
    return results


def bench_gibbs(n_sweeps: int):
    spec = PopulationSpec(
        10, (Cluster(0, (1,)), Cluster(2, (3, 4)), Cluster(5, (6, 7, 8, 9)))
    )
    prior = PriorParams(0.2, 0.2, 0.01)
    err = TestErrorParams(0.2, 0.01)
    design = Design((pool_of(0, 1, 2, 3), pool_of(4, 5, 6), pool_of(7, 8, 9)))
    rng = substream(3)
    true = InfectionState(tuple(int(b) for b in sample_prior_matrix(spec, prior, rng, 1)[0]))
    data = sample_data(design, err, true, rng)
    arrays = kernels.build_gibbs_arrays(spec, prior, err, design, data)
    theta0 = sample_prior_matrix(spec, prior, rng, 1)[0]
    results = {}
    for backend in kernels.available_backends():
        def run(b=backend):
            theta = theta0.copy()
            return kernels.gibbs_chain(arrays, theta, n_sweeps, n_sweeps, substream(4), backend=b)

        seconds, recs = _bench(run)
        results[backend] = (seconds, recs[-1].sum())
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    print(f"available: {', '.join(kernels.available_backends())}\n")

    mi_sizes = [(2000, 1), (2000, 6)] if args.quick else [(2000, 1), (12000, 1), (12000, 6), (20000, 1)]
    print(f"{'kernel':<28}{'pure':>12}{'compiled':>12}{'speedup':>9}")
    for n_samples, n_pools in mi_sizes:
        res = bench_mi(n_samples, n_pools)
        pure_s = res["pure"][0]
        if "compiled" in res:
            comp_s = res["compiled"][0]
            assert abs(res["pure"][1] - res["compiled"][1]) < 1e-8
            print(
                f"mi L={n_samples:<6} K={n_pools:<10}{pure_s*1e3:>10.1f}ms"
                f"{comp_s*1e3:>10.1f}ms{pure_s/comp_s:>8.1f}x"
            )
        else:
            print(f"mi L={n_samples:<6} K={n_pools:<10}{pure_s*1e3:>10.1f}ms{'-':>12}{'-':>9}")

    sweep_counts = [2000] if args.quick else [2000, 20000]
    for n_sweeps in sweep_counts:
        res = bench_gibbs(n_sweeps)
        pure_s = res["pure"][0]
        if "compiled" in res:
            comp_s = res["compiled"][0]
            print(
                f"gibbs sweeps={n_sweeps:<11}{pure_s*1e3:>10.1f}ms"
                f"{comp_s*1e3:>10.1f}ms{pure_s/comp_s:>8.1f}x"
            )
        else:
            print(f"gibbs sweeps={n_sweeps:<11}{pure_s*1e3:>10.1f}ms{'-':>12}{'-':>9}")


if __name__ == "__main__":
    main()
