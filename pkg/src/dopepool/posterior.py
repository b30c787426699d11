"""Posterior inference: Gibbs sampling, autocorrelation thinning, exact oracle.

``gibbs_run`` draws from Pr(state | design, data) with a systematic-scan
Gibbs sampler. The integrated autocorrelation time (IACT) of each coordinate
is estimated on the burn-in series; the chain is then run thinning * L
further sweeps and every thinning-th state is kept, so the retained draws
are approximately independent and cheap to feed into the O(L^2) mutual
information estimator.

``exact_posterior`` enumerates all 2^N states (N <= 20) and is the testing
oracle for everything above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EnumerationBudgetError, InvalidArgumentError, InvalidModelError
from .model import (
    NEG_INF,
    Design,
    InfectionState,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    _log,
    _log1m,
    design_log_likelihood,
    prior_log_prob,
    sample_prior_matrix,
)
from .seeding import substream

MAX_ENUM_N = 20

# Sokal-style automatic windowing constant for the IACT estimator, and the
# series-length multiple below which an estimate is flagged unreliable.
IACT_WINDOW_C = 5.0
IACT_RELIABLE_MULT = 50.0

_INIT_ATTEMPTS = 500


@dataclass(frozen=True)
class GibbsConfig:
    """Chain budget: L kept samples, burn-in sweeps, thinning cap."""

    n_samples: int
    burn_in: int = 2000
    seed: int = 0
    max_thinning: int = 100

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidArgumentError("n_samples must be >= 1", field="n_samples")
        if self.burn_in < 0:
            raise InvalidArgumentError("burn_in must be >= 0", field="burn_in")
        if self.max_thinning < 1:
            raise InvalidArgumentError("max_thinning must be >= 1", field="max_thinning")


@dataclass(frozen=True)
class ChainDiagnostics:
    """Per-coordinate IACT estimates (in sweeps) and the thinning they imply."""

    iact_per_coordinate: tuple[float, ...]
    thinning: int
    burn_in: int
    unreliable: bool = False

    def report(self) -> str:
        lines = [
            f"burn_in: {self.burn_in}",
            f"thinning: {self.thinning}",
            f"unreliable: {str(self.unreliable).lower()}",
        ]
        for i, tau in enumerate(self.iact_per_coordinate):
            lines.append(f"iact[{i}]: {tau:.4f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PosteriorSamples:
    """Thinned Gibbs draws plus the (design, data) they condition on.

    ``matrix`` is the primary (L, N) uint8 storage; ``states`` materializes
    InfectionState tuples on demand.
    """

    matrix: np.ndarray
    diagnostics: ChainDiagnostics
    design: Design = field(default_factory=Design)
    data: TestData = field(default_factory=TestData)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_individuals(self) -> int:
        return self.matrix.shape[1]

    @property
    def states(self) -> list[InfectionState]:
        return [InfectionState(tuple(row)) for row in self.matrix.tolist()]


def from_prior_draws(matrix: np.ndarray) -> PosteriorSamples:
    """Wrap i.i.d. prior draws as a PosteriorSamples with trivial diagnostics."""
    n = matrix.shape[1]
    diag = ChainDiagnostics(
        iact_per_coordinate=(1.0,) * n, thinning=1, burn_in=0, unreliable=False
    )
    return PosteriorSamples(matrix=matrix, diagnostics=diag)


# ---------------------------------------------------------------------------
# Gibbs
# ---------------------------------------------------------------------------


def gibbs_conditional(
    i: int,
    state: InfectionState,
    design: Design,
    data: TestData,
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> float:
    """Pr(state_i = 1 | all other coordinates, design, data).

    Reference implementation: evaluates the full unnormalized posterior at
    both values of coordinate ``i`` (the value stored there is ignored) and
    forms the ratio stably in log space. The kernels compute the same
    quantity incrementally.
    """
    bits = list(state.bits)
    bits[i] = 1
    s1 = InfectionState(tuple(bits))
    bits[i] = 0
    s0 = InfectionState(tuple(bits))
    q1 = prior_log_prob(spec, prior, s1) + design_log_likelihood(design, err, s1, data)
    q0 = prior_log_prob(spec, prior, s0) + design_log_likelihood(design, err, s0, data)
    if q1 == NEG_INF and q0 == NEG_INF:
        raise InvalidModelError(
            f"both values of coordinate {i} have zero posterior probability"
        )
    if q1 == NEG_INF:
        return 0.0
    if q0 == NEG_INF:
        return 1.0
    diff = q0 - q1
    if diff >= 0.0:
        e = math.exp(-diff)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(diff))


def _autocorr_time_1d(x: np.ndarray, c: float = IACT_WINDOW_C) -> float:
    """Windowed IACT of one series, automatic window selection.

    Uses the FFT autocorrelation with the smallest window W satisfying
    W >= c * tau_hat(W); constant series get tau = 1 by convention.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2 or np.all(x == x[0]):
        return 1.0
    f = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    transform = np.fft.rfft(f, n=size)
    acf = np.fft.irfft(transform * np.conjugate(transform), n=size)[:n].real
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    mask = np.arange(n) < c * taus
    window = int(np.argmin(mask)) if np.any(mask) else n - 1
    return max(1.0, float(taus[window]))


def estimate_iact(series: np.ndarray, max_thinning: int = 100) -> ChainDiagnostics:
    """Diagnostics from a (sweeps, N) burn-in record of chain states.

    The thinning is max_i ceil(IACT_i), clamped to ``max_thinning``. If any
    coordinate's series is shorter than 50x its estimated IACT the estimate
    is unreliable and the thinning falls back to the cap.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise InvalidArgumentError("series must be a (sweeps, coordinates) array")
    n_steps = series.shape[0]
    taus = tuple(_autocorr_time_1d(series[:, i]) for i in range(series.shape[1]))
    unreliable = n_steps == 0 or any(IACT_RELIABLE_MULT * t > n_steps for t in taus)
    if unreliable:
        thinning = max_thinning
    else:
        thinning = min(max_thinning, max(1, max(math.ceil(t) for t in taus)))
    return ChainDiagnostics(
        iact_per_coordinate=taus,
        thinning=thinning,
        burn_in=n_steps,
        unreliable=unreliable,
    )


def _log_posterior(spec, prior, err, design, data, bits) -> float:
    state = InfectionState(tuple(int(b) for b in bits))
    lp = prior_log_prob(spec, prior, state)
    if lp == NEG_INF:
        return NEG_INF
    return lp + design_log_likelihood(design, err, state, data)


def _repair_state(
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
    design: Design,
    data: TestData,
) -> np.ndarray:
    """Deterministically construct a positive-probability state.

    Needed when deterministic likelihood components (error rates of exactly
    0 or 1) shrink the posterior support to a set the prior rarely hits.
    Start from the all-healthy state adjusted for degenerate prior
    components, zero out members of perfectly-negative pools, then add one
    infected member to each perfectly-positive pool that lacks one
    (best prior marginal first, flipping the member's primary 0 -> 1 when
    the cluster conditional requires it). Additions are monotone, so
    earlier repairs stay valid.
    """
    n = spec.n_individuals
    bits = np.zeros(n, dtype=np.uint8)
    for cluster in spec.clusters:
        p_bit = 1 if prior.p_primary == 1.0 else 0
        bits[cluster.primary] = p_bit
        for s in cluster.secondaries:
            if p_bit:
                bits[s] = 1 if prior.p_secondary == 1.0 else 0
            else:
                bits[s] = 1 if prior.p_basal == 1.0 else 0

    forced_zero: set[int] = set()
    if err.p_false_negative == 0.0:
        for pool, result in zip(design.pools, data.results):
            if result == 0:
                forced_zero |= pool.members
    for m in forced_zero:
        bits[m] = 0

    primary_of = {}
    for cluster in spec.clusters:
        for s in cluster.secondaries:
            primary_of[s] = cluster.primary

    def marginal(i: int) -> float:
        if i not in primary_of:
            return prior.p_primary
        return prior.p_primary * prior.p_secondary + (1 - prior.p_primary) * prior.p_basal

    if err.p_false_positive == 0.0:
        for pool, result in zip(design.pools, data.results):
            if result != 1 or any(bits[m] for m in pool.members):
                continue
            candidates = sorted(
                (m for m in pool.members if m not in forced_zero),
                key=lambda m: (-marginal(m), m),
            )
            repaired = False
            for m in candidates:
                trial = bits.copy()
                trial[m] = 1
                primary = primary_of.get(m)
                if (
                    primary is not None
                    and trial[primary] == 0
                    and prior.p_basal == 0.0
                    and primary not in forced_zero
                ):
                    trial[primary] = 1
                trial_state = InfectionState(tuple(int(b) for b in trial))
                if prior_log_prob(spec, prior, trial_state) > NEG_INF:
                    bits = trial
                    repaired = True
                    break
            if not repaired:
                raise InvalidModelError(
                    "observed data admit no state with positive probability "
                    f"(pool {sorted(pool.members)} must contain an infection "
                    "but none of its members can be infected)"
                )

    if _log_posterior(spec, prior, err, design, data, bits) == NEG_INF:
        raise InvalidModelError(
            "observed data admit no state with positive probability"
        )
    return bits


def _initial_state(
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
    design: Design,
    data: TestData,
    rng: np.random.Generator,
) -> np.ndarray:
    """A positive-probability starting state for the chain.

    Rejection sampling from the prior succeeds immediately whenever the
    likelihood is noisy (every state has positive probability then); the
    deterministic repair covers hard-constraint likelihoods whose support
    the prior rarely hits. Every Gibbs conditional is well defined along a
    chain started from a positive-probability state.
    """
    for _ in range(_INIT_ATTEMPTS):
        matrix = sample_prior_matrix(spec, prior, rng, 1)
        state = InfectionState(tuple(int(b) for b in matrix[0]))
        if (
            prior_log_prob(spec, prior, state)
            + design_log_likelihood(design, err, state, data)
        ) > NEG_INF:
            return matrix[0].copy()
    return _repair_state(spec, prior, err, design, data)


def gibbs_run(
    config: GibbsConfig,
    design: Design,
    data: TestData,
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> PosteriorSamples:
    """Sample L approximately independent posterior draws.

    Phases: prior-rejection initialization, ``burn_in`` sweeps recorded for
    IACT estimation, then thinning * L sweeps keeping every thinning-th
    state. With ``burn_in=0`` the IACT step is skipped and thinning is 1
    (flagged unreliable).
    """
    arrays = kernels.build_gibbs_arrays(spec, prior, err, design, data)
    rng = substream(config.seed)
    theta = _initial_state(spec, prior, err, design, data, rng)
    if config.burn_in > 0:
        burn_records = kernels.gibbs_chain(arrays, theta, config.burn_in, 1, rng)
        diag = estimate_iact(burn_records, max_thinning=config.max_thinning)
    else:
        diag = ChainDiagnostics(
            iact_per_coordinate=(1.0,) * spec.n_individuals,
            thinning=1,
            burn_in=0,
            unreliable=True,
        )
    thin = diag.thinning
    kept = kernels.gibbs_chain(arrays, theta, thin * config.n_samples, thin, rng)
    return PosteriorSamples(matrix=kept, diagnostics=diag, design=design, data=data)


def posterior_marginals(samples: PosteriorSamples) -> np.ndarray:
    """Coordinate-wise infection probabilities (sample means)."""
    if len(samples) == 0:
        raise InvalidArgumentError("cannot compute marginals of zero samples")
    return samples.matrix.mean(axis=0)


# ---------------------------------------------------------------------------
# Exact enumeration oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactDistribution:
    """Dense distribution over all 2^N states; state s sets bit i to (s >> i) & 1."""

    probs: np.ndarray
    log_evidence: float
    n: int

    @property
    def evidence(self) -> float:
        return math.exp(self.log_evidence)

    def marginals(self) -> np.ndarray:
        states = np.arange(self.probs.size, dtype=np.uint64)
        out = np.empty(self.n, dtype=np.float64)
        for i in range(self.n):
            out[i] = float(self.probs[((states >> np.uint64(i)) & np.uint64(1)) == 1].sum())
        return out

    def entropy(self) -> float:
        p = self.probs
        nz = p > 0.0
        return float(-(p[nz] * np.log(p[nz])).sum())


def _count_times_log(count: np.ndarray, logp: float) -> np.ndarray:
    # 0 * (-inf) must contribute 0, not NaN
    if logp == NEG_INF:
        return np.where(count > 0, NEG_INF, 0.0)
    return count * logp


def _log_prior_vector(spec: PopulationSpec, prior: PriorParams, states: np.ndarray) -> np.ndarray:
    out = np.zeros(states.size, dtype=np.float64)
    lp_p, l1_p = _log(prior.p_primary), _log1m(prior.p_primary)
    lp_s, l1_s = _log(prior.p_secondary), _log1m(prior.p_secondary)
    lp_b, l1_b = _log(prior.p_basal), _log1m(prior.p_basal)
    for cluster in spec.clusters:
        primary_bit = (states >> np.uint64(cluster.primary)) & np.uint64(1)
        n_sec = len(cluster.secondaries)
        sec_mask = np.uint64(0)
        for s in cluster.secondaries:
            sec_mask |= np.uint64(1) << np.uint64(s)
        k = np.bitwise_count(states & sec_mask).astype(np.float64)
        with_primary = lp_p + _count_times_log(k, lp_s) + _count_times_log(n_sec - k, l1_s)
        without_primary = l1_p + _count_times_log(k, lp_b) + _count_times_log(n_sec - k, l1_b)
        out += np.where(primary_bit == 1, with_primary, without_primary)
    return out


def _pool_loglik_vectors(
    pool_mask: np.uint64, err: TestErrorParams, states: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(log Pr(neg), log Pr(pos)) per enumerated state for one pool."""
    c = np.bitwise_count(states & pool_mask).astype(np.float64)
    ll_neg = _log1m(err.p_false_positive) + _count_times_log(c, _log(err.p_false_negative))
    with np.errstate(divide="ignore", invalid="ignore"):
        ll_pos = np.where(
            ll_neg == NEG_INF,
            0.0,
            np.where(ll_neg > -math.log(2.0), np.log(-np.expm1(ll_neg)), np.log1p(-np.exp(ll_neg))),
        )
    return ll_neg, ll_pos


def _logsumexp(v: np.ndarray) -> float:
    m = float(v.max())
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.exp(v - m).sum()))


def exact_posterior(
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
    design: Design,
    data: TestData,
) -> ExactDistribution:
    """Enumerate Pr(state | design, data) exactly. Refuses N > 20."""
    n = spec.n_individuals
    if n > MAX_ENUM_N:
        raise EnumerationBudgetError(
            f"exact enumeration over 2^{n} states exceeds the N <= {MAX_ENUM_N} budget"
        )
    if len(data) != len(design):
        raise InvalidArgumentError(
            f"{len(data)} results supplied for a design of {len(design)} pools"
        )
    states = np.arange(1 << n, dtype=np.uint64)
    joint = _log_prior_vector(spec, prior, states)
    for pool, result in zip(design.pools, data.results):
        mask = np.uint64(0)
        for m in pool.members:
            mask |= np.uint64(1) << np.uint64(m)
        ll_neg, ll_pos = _pool_loglik_vectors(mask, err, states)
        joint += ll_pos if result else ll_neg
    log_ev = _logsumexp(joint)
    if log_ev == NEG_INF:
        raise InvalidModelError("observed data have zero probability under the model")
    probs = np.exp(joint - log_ev)
    return ExactDistribution(probs=probs, log_evidence=log_ev, n=n)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def posterior_entropy(dist_or_samples) -> float:
    """Posterior entropy in nats.

    For an ExactDistribution this is the exact joint entropy. For
    PosteriorSamples (or a marginal vector) it is the sum of per-coordinate
    marginal entropies — an upper-bound proxy for the joint entropy, used
    when enumeration is out of reach.
    """
    if isinstance(dist_or_samples, ExactDistribution):
        return dist_or_samples.entropy()
    if isinstance(dist_or_samples, PosteriorSamples):
        marginals = posterior_marginals(dist_or_samples)
    else:
        marginals = np.asarray(dist_or_samples, dtype=np.float64)
    return float(sum(binary_entropy(float(m)) for m in marginals))
