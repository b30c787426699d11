"""Hot numeric kernels with a compiled core and a pure-NumPy fallback.

Two kernels dominate runtime:

* ``gibbs_chain``: coordinate-wise Gibbs sweeps over the binary infection
  state (tau * L sweeps per posterior sample set).
* ``mi_accumulate``: the nested Monte-Carlo mutual-information estimator,
  whose inner double sum costs L^2 likelihood evaluations.

At import time the Cython extension ``dopepool._core`` is preferred; if it
is missing (or ``DOPEPOOL_PURE=1`` is set) the NumPy implementation in
``dopepool.kernels.pure`` is used. Both backends consume uniforms from the
caller's Generator in the same order, so Gibbs chains are bit-identical
across backends; the MI reduction differs only by float summation order.

``benchmarks/bench_kernels.py`` compares the two backends.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from ..model import (
    Design,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    _log,
    _log1m,
    log1mexp,
)
from . import pure

try:  # compiled core is optional; the fallback implements the same contract
    from .. import _core as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_FORCE_PURE = os.environ.get("DOPEPOOL_PURE", "") not in ("", "0")

BACKEND = "compiled" if (_compiled is not None and not _FORCE_PURE) else "pure"


def available_backends() -> tuple[str, ...]:
    return ("pure", "compiled") if _compiled is not None else ("pure",)


@dataclass
class GibbsArrays:
    """Flat-array view of (spec, prior, err, design, data) for the kernels."""

    n: int
    is_primary: np.ndarray       # (N,) uint8
    primary_of: np.ndarray       # (N,) int32; self-index for primaries
    sec_offsets: np.ndarray      # (N+1,) int32 CSR over each primary's secondaries
    sec_indices: np.ndarray      # int32
    log_pp: float
    log_1mpp: float
    log_ps: float
    log_1mps: float
    log_pb: float
    log_1mpb: float
    n_pools: int
    pool_offsets: np.ndarray     # (K+1,) int32
    pool_members: np.ndarray     # int32
    ind_pool_offsets: np.ndarray  # (N+1,) int32 CSR individual -> pools containing it
    ind_pools: np.ndarray        # int32
    data: np.ndarray             # (K,) uint8
    loglik_table: np.ndarray     # (K, max_pool+1, 2) float64, [pool, count, result]


def build_gibbs_arrays(
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
    design: Design,
    data: TestData,
) -> GibbsArrays:
    if len(data) != len(design):
        raise InvalidArgumentError(
            f"{len(data)} results supplied for a design of {len(design)} pools"
        )
    n = spec.n_individuals
    for j, pool in enumerate(design.pools):
        # the compiled kernel indexes without bounds checks
        if any(m >= n for m in pool.members):
            raise InvalidArgumentError(
                f"pool {j} references an individual outside the population"
            )
    is_primary = np.zeros(n, dtype=np.uint8)
    primary_of = np.zeros(n, dtype=np.int32)
    sec_lists: list[list[int]] = [[] for _ in range(n)]
    for cluster in spec.clusters:
        is_primary[cluster.primary] = 1
        primary_of[cluster.primary] = cluster.primary
        sec_lists[cluster.primary] = list(cluster.secondaries)
        for s in cluster.secondaries:
            primary_of[s] = cluster.primary
    sec_offsets = np.zeros(n + 1, dtype=np.int32)
    for i in range(n):
        sec_offsets[i + 1] = sec_offsets[i] + len(sec_lists[i])
    sec_indices = np.array([s for lst in sec_lists for s in lst], dtype=np.int32)

    k = len(design)
    pool_offsets = np.zeros(k + 1, dtype=np.int32)
    members_flat: list[int] = []
    max_pool = 0
    for j, pool in enumerate(design.pools):
        ms = sorted(pool.members)
        members_flat.extend(ms)
        pool_offsets[j + 1] = len(members_flat)
        max_pool = max(max_pool, len(ms))
    pool_members = np.array(members_flat, dtype=np.int32)

    per_ind: list[list[int]] = [[] for _ in range(n)]
    for j, pool in enumerate(design.pools):
        for m in sorted(pool.members):
            per_ind[m].append(j)
    ind_pool_offsets = np.zeros(n + 1, dtype=np.int32)
    for i in range(n):
        ind_pool_offsets[i + 1] = ind_pool_offsets[i] + len(per_ind[i])
    ind_pools = np.array([j for lst in per_ind for j in lst], dtype=np.int32)

    table = np.zeros((max(k, 1), max_pool + 1, 2), dtype=np.float64)
    l1mfp = _log1m(err.p_false_positive)
    lfn = _log(err.p_false_negative)
    for j, pool in enumerate(design.pools):
        for c in range(len(pool) + 1):
            neg = l1mfp + (c * lfn if c > 0 else 0.0)
            table[j, c, 0] = neg
            table[j, c, 1] = log1mexp(neg)

    return GibbsArrays(
        n=n,
        is_primary=is_primary,
        primary_of=primary_of,
        sec_offsets=sec_offsets,
        sec_indices=sec_indices,
        log_pp=_log(prior.p_primary),
        log_1mpp=_log1m(prior.p_primary),
        log_ps=_log(prior.p_secondary),
        log_1mps=_log1m(prior.p_secondary),
        log_pb=_log(prior.p_basal),
        log_1mpb=_log1m(prior.p_basal),
        n_pools=k,
        pool_offsets=pool_offsets,
        pool_members=pool_members,
        ind_pool_offsets=ind_pool_offsets,
        ind_pools=ind_pools,
        data=np.array(data.results, dtype=np.uint8),
        loglik_table=table,
    )


def _backend(name: str | None = None):
    if name is None:
        name = BACKEND
    if name == "pure":
        return pure
    if name == "compiled":
        if _compiled is None:
            raise InvalidArgumentError("compiled backend is not available")
        return _compiled
    raise InvalidArgumentError(f"unknown kernel backend {name!r}")


def gibbs_chain(
    arrays: GibbsArrays,
    theta: np.ndarray,
    n_sweeps: int,
    record_every: int,
    rng: np.random.Generator,
    backend: str | None = None,
) -> np.ndarray:
    """Run systematic-scan Gibbs sweeps, recording every ``record_every``-th state.

    ``theta`` (uint8, length N) is advanced in place. Returns an
    (n_sweeps // record_every, N) uint8 array of recorded states.
    """
    impl = _backend(backend)
    return impl.gibbs_chain(
        arrays.n,
        arrays.is_primary,
        arrays.primary_of,
        arrays.sec_offsets,
        arrays.sec_indices,
        arrays.log_pp,
        arrays.log_1mpp,
        arrays.log_ps,
        arrays.log_1mps,
        arrays.log_pb,
        arrays.log_1mpb,
        arrays.n_pools,
        arrays.pool_offsets,
        arrays.pool_members,
        arrays.ind_pool_offsets,
        arrays.ind_pools,
        arrays.data,
        arrays.loglik_table,
        theta,
        int(n_sweeps),
        int(record_every),
        rng,
    )


def mi_accumulate(
    ll_neg: np.ndarray,
    ll_pos: np.ndarray,
    outcomes: np.ndarray,
    backend: str | None = None,
) -> tuple[float, float]:
    """Nested-estimator accumulation over all L^2 (outcome, sample) pairs.

    ``ll_neg``/``ll_pos`` are (L, K) per-sample, per-pool log probabilities of
    a negative/positive result; ``outcomes`` is the (L, K) 0/1 matrix of
    simulated results. Returns (estimate, standard-error hint).

    The inner evidence average runs over per-pair probabilities rebuilt from
    exp tables; rows whose linear-space sum underflows to zero are redone
    with a log-sum-exp pass, so the result matches the log-space definition.
    """
    impl = _backend(backend)
    return impl.mi_accumulate(ll_neg, ll_pos, outcomes)
