"""Design scoring and search.

A design is scored by the mutual information between the unknown infection
state and the results its pools would produce. The nested Monte-Carlo
estimator reuses the L conditioning samples as both the outer draws and the
inner evidence average, costing L^2 likelihood evaluations with O(1/L)
bias; ``exact_mi`` provides the enumeration oracle for small instances.

The search over K-pool designs is a random-restart hill climb on the
subset lattice (add / remove / swap one member). All candidates within one
``optimal_design`` call are scored against outcome draws generated from a
single shared uniform block (common random numbers), which makes greedy
comparisons meaningful and the accepted chain monotone under that seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EnumerationBudgetError, InvalidArgumentError
from .model import (
    MAX_POOL_SIZE,
    NEG_INF,
    Design,
    Pool,
    PopulationSpec,
    TestErrorParams,
    _log,
    _log1m,
)
from .posterior import ExactDistribution, PosteriorSamples, _logsumexp, _pool_loglik_vectors
from .seeding import TAG_MI_Y, TAG_SEARCH, TAG_SEARCH_INIT, substream, substream_seed

MAX_EXACT_MI_N = 16
MAX_EXACT_MI_POOLS = 12


@dataclass(frozen=True)
class MIEstimate:
    """Estimated mutual information of a design, in nats."""

    value: float
    n_samples: int
    se_hint: float

    def __post_init__(self):
        if self.n_samples < 2:
            raise InvalidArgumentError("MI estimation needs at least 2 samples")


@dataclass(frozen=True)
class HillClimbConfig:
    n_restarts: int = 10
    n_perturbations: int = 32
    max_steps: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("n_restarts", "n_perturbations", "max_steps"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1", field=name)


@dataclass(frozen=True)
class PoolCountMatrix:
    """Per-sample infected counts for each pool of a candidate design.

    Caches the sufficient statistic of the pooled-test likelihood: entry
    (r, j) is the number of infected members of pool j under sample r.
    """

    counts: np.ndarray  # (L, K) int64

    @classmethod
    def build(cls, states_matrix: np.ndarray, design: Design, n_individuals: int):
        membership = np.zeros((n_individuals, len(design)), dtype=np.float64)
        for j, pool in enumerate(design.pools):
            for m in pool.members:
                if m >= n_individuals:
                    raise InvalidArgumentError(
                        f"pool {j} references individual {m} outside the population"
                    )
                membership[m, j] = 1.0
        counts = states_matrix.astype(np.float64) @ membership
        return cls(counts=counts.astype(np.int64))


def _loglik_tables(
    counts: np.ndarray, err: TestErrorParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-(sample, pool) log probabilities of negative and positive results."""
    l1mfp = _log1m(err.p_false_positive)
    lfn = _log(err.p_false_negative)
    if lfn == NEG_INF:
        ll_neg = np.where(counts > 0, NEG_INF, l1mfp)
    else:
        ll_neg = l1mfp + counts * lfn
    with np.errstate(divide="ignore", invalid="ignore"):
        ll_pos = np.where(
            ll_neg == NEG_INF,
            0.0,
            np.where(
                ll_neg > -math.log(2.0),
                np.log(-np.expm1(ll_neg)),
                np.log1p(-np.exp(ll_neg)),
            ),
        )
    return ll_neg, ll_pos


def estimate_mi(
    candidate: Design,
    samples: PosteriorSamples,
    err: TestErrorParams,
    rng: np.random.Generator,
) -> MIEstimate:
    """Nested Monte-Carlo mutual information of ``candidate``.

    For each conditioning sample a result vector is drawn from the
    likelihood; the evidence of that vector is estimated by averaging its
    likelihood over all L samples (log-sum-exp in the underflow regime).
    The average of (log-likelihood - log-evidence) terms is the estimate.
    """
    n_samples = len(samples)
    if n_samples < 2:
        raise InvalidArgumentError("MI estimation needs at least 2 samples")
    if len(candidate) == 0:
        return MIEstimate(value=0.0, n_samples=n_samples, se_hint=0.0)
    pcm = PoolCountMatrix.build(samples.matrix, candidate, samples.n_individuals)
    ll_neg, ll_pos = _loglik_tables(pcm.counts, err)
    with np.errstate(invalid="ignore"):
        p_pos = -np.expm1(ll_neg)
    u = rng.random(ll_neg.shape)
    outcomes = (u < p_pos).astype(np.uint8)
    psi, se = kernels.mi_accumulate(ll_neg, ll_pos, outcomes)
    return MIEstimate(value=psi, n_samples=n_samples, se_hint=se)


def exact_mi(candidate: Design, distribution: ExactDistribution, err: TestErrorParams) -> float:
    """Mutual information by full enumeration over states and result vectors.

    Budgeted at N <= 16 and at most 12 pools; the oracle counterpart of
    ``estimate_mi``.
    """
    n = distribution.n
    k = len(candidate)
    if n > MAX_EXACT_MI_N or k > MAX_EXACT_MI_POOLS:
        raise EnumerationBudgetError(
            f"exact MI over 2^{n} states x 2^{k} result vectors exceeds the "
            f"N <= {MAX_EXACT_MI_N}, |T| <= {MAX_EXACT_MI_POOLS} budget"
        )
    if k == 0:
        return 0.0
    states = np.arange(1 << n, dtype=np.uint64)
    log_p = np.full(states.size, NEG_INF)
    nz = distribution.probs > 0.0
    log_p[nz] = np.log(distribution.probs[nz])
    neg_tables = []
    pos_tables = []
    for pool in candidate.pools:
        mask = np.uint64(0)
        for m in pool.members:
            mask |= np.uint64(1) << np.uint64(m)
        ll_neg, ll_pos = _pool_loglik_vectors(mask, err, states)
        neg_tables.append(ll_neg)
        pos_tables.append(ll_pos)
    total = 0.0
    for outcome in range(1 << k):
        ll = np.zeros(states.size, dtype=np.float64)
        for j in range(k):
            ll += pos_tables[j] if (outcome >> j) & 1 else neg_tables[j]
        joint = log_p + ll
        log_ev = _logsumexp(joint)
        if log_ev == NEG_INF:
            continue
        weights = np.exp(joint)
        finite = ll > NEG_INF
        total += float((weights[finite] * (ll[finite] - log_ev)).sum())
    return max(0.0, total)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def perturb(
    design: Design,
    spec: PopulationSpec,
    rng: np.random.Generator,
    max_pool_size: int = MAX_POOL_SIZE,
) -> Design:
    """One uniformly chosen atomic move: add, remove, or swap a member.

    Infeasible draws (full pool, singleton removal, no absent individual)
    are re-drawn up to 100 times; if all fail the design is returned
    unchanged.
    """
    n = spec.n_individuals
    cap = min(n, max_pool_size)
    pools = list(design.pools)
    for _ in range(100):
        move = int(rng.integers(3))
        k = int(rng.integers(len(pools)))
        members = sorted(pools[k].members)
        absent = sorted(set(range(n)) - pools[k].members)
        if move == 0:
            if not absent or len(members) >= cap:
                continue
            new_members = members + [absent[int(rng.integers(len(absent)))]]
        elif move == 1:
            if len(members) < 2:
                continue
            drop = int(rng.integers(len(members)))
            new_members = members[:drop] + members[drop + 1 :]
        else:
            if not absent:
                continue
            drop = int(rng.integers(len(members)))
            added = absent[int(rng.integers(len(absent)))]
            new_members = members[:drop] + members[drop + 1 :] + [added]
        new_pools = list(pools)
        new_pools[k] = Pool(frozenset(new_members))
        return Design(tuple(new_pools))
    return design


def _random_design(
    k_pools: int, n: int, cap: int, rng: np.random.Generator
) -> Design:
    pools = []
    for _ in range(k_pools):
        size = int(rng.integers(1, cap + 1))
        members = rng.choice(n, size=size, replace=False)
        pools.append(Pool(frozenset(int(m) for m in members)))
    return Design(tuple(pools))


def optimal_design(
    k_pools: int,
    samples: PosteriorSamples,
    err: TestErrorParams,
    spec: PopulationSpec,
    hc: HillClimbConfig,
    max_pool_size: int = MAX_POOL_SIZE,
    trace: list | None = None,
) -> tuple[Design, MIEstimate]:
    """Best K-pool design found by random-restart hill climbing.

    Every scoring call in one invocation replays the same outcome-draw
    stream (common random numbers), so scores are comparable across
    candidates, steps, and restarts, and each restart's accepted chain is
    monotone in the score. Ties go to the first-evaluated candidate.
    """
    if k_pools < 1:
        raise InvalidArgumentError("k_pools must be >= 1", field="k_pools")
    n = spec.n_individuals
    cap = min(n, max_pool_size)
    y_seed = substream_seed(hc.seed, TAG_MI_Y)

    def score(d: Design) -> MIEstimate:
        return estimate_mi(d, samples, err, substream(y_seed))

    best_design: Design | None = None
    best_est: MIEstimate | None = None
    for restart in range(hc.n_restarts):
        init_rng = substream(hc.seed, TAG_SEARCH_INIT, restart)
        move_rng = substream(hc.seed, TAG_SEARCH, restart)
        current = _random_design(k_pools, n, cap, init_rng)
        current_est = score(current)
        for step in range(hc.max_steps):
            step_best: Design | None = None
            step_best_est: MIEstimate | None = None
            for _ in range(hc.n_perturbations):
                neighbor = perturb(current, spec, move_rng, max_pool_size)
                est = score(neighbor)
                if step_best_est is None or est.value > step_best_est.value:
                    step_best, step_best_est = neighbor, est
            accepted = step_best_est is not None and step_best_est.value > current_est.value
            if trace is not None:
                trace.append(
                    {
                        "restart": restart,
                        "step": step,
                        "current": current_est.value,
                        "best_neighbor": step_best_est.value if step_best_est else None,
                        "accepted": accepted,
                        "pools": [sorted(p.members) for p in current.pools],
                    }
                )
            if not accepted:
                break
            current, current_est = step_best, step_best_est
        if best_est is None or current_est.value > best_est.value:
            best_design, best_est = current, current_est
    return best_design, best_est


def format_search_trace(trace: list) -> str:
    """Render a hill-climb trace as line-per-step structured text."""
    lines = []
    for rec in trace:
        neighbor = "none" if rec["best_neighbor"] is None else f"{rec['best_neighbor']:.6f}"
        lines.append(
            f"restart={rec['restart']} step={rec['step']} "
            f"current={rec['current']:.6f} best_neighbor={neighbor} "
            f"accepted={str(rec['accepted']).lower()} pools={rec['pools']}"
        )
    return "\n".join(lines) + ("\n" if lines else "")
