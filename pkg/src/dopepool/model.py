"""Population model: cluster prior, pooled-test likelihood, forward samplers.

The population is partitioned into clusters (households, wards, ...). Each
cluster has one designated primary member who is infected with probability
``p_primary``; the remaining members are infected independently with
probability ``p_secondary`` if the primary is infected and with the basal
population prevalence ``p_basal`` otherwise.

A pooled test of a member set returns negative with probability
``(1 - p_false_positive) * p_false_negative ** c`` where ``c`` is the number
of infected members: every infected sample's amplification must fail
independently, and no erroneous amplification may occur.

All probability arithmetic is done in log space; probability zero maps to
``-inf``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

NEG_INF = float("-inf")

# Dilution bound: pooled RT-PCR stays reliable when mixing up to 32 samples.
MAX_POOL_SIZE = 32


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else NEG_INF


def _log1m(p: float) -> float:
    return math.log1p(-p) if p < 1.0 else NEG_INF


def _check_probability(value: float, field: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise InvalidArgumentError(f"{field} must be a number", field=field)
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise InvalidArgumentError(f"{field} must lie in [0, 1], got {value!r}", field=field)
    return value


@dataclass(frozen=True)
class Cluster:
    """One connectivity group: a primary individual plus its secondaries."""

    primary: int
    secondaries: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "secondaries", tuple(int(s) for s in self.secondaries))
        object.__setattr__(self, "primary", int(self.primary))
        if self.primary < 0 or any(s < 0 for s in self.secondaries):
            raise InvalidArgumentError("cluster member indices must be non-negative")
        if self.primary in self.secondaries:
            raise InvalidArgumentError("cluster primary repeated among secondaries")
        if len(set(self.secondaries)) != len(self.secondaries):
            raise InvalidArgumentError("duplicate indices within a cluster")

    @property
    def members(self) -> tuple[int, ...]:
        return (self.primary, *self.secondaries)


@dataclass(frozen=True)
class PopulationSpec:
    """Cluster partition of individuals 0..n_individuals-1."""

    n_individuals: int
    clusters: tuple[Cluster, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.n_individuals < 1:
            raise InvalidArgumentError("n_individuals must be positive", field="n_individuals")
        seen: set[int] = set()
        for c in self.clusters:
            for m in c.members:
                if m in seen:
                    raise InvalidArgumentError(
                        f"individual {m} appears in more than one cluster", field="clusters"
                    )
                seen.add(m)
        if seen != set(range(self.n_individuals)):
            raise InvalidArgumentError(
                "clusters must cover exactly the indices 0..n_individuals-1", field="clusters"
            )


@dataclass(frozen=True)
class PriorParams:
    """Infection probabilities: primary, secondary-given-primary, basal."""

    p_primary: float
    p_secondary: float
    p_basal: float

    def __post_init__(self):
        object.__setattr__(self, "p_primary", _check_probability(self.p_primary, "p_primary"))
        object.__setattr__(self, "p_secondary", _check_probability(self.p_secondary, "p_secondary"))
        object.__setattr__(self, "p_basal", _check_probability(self.p_basal, "p_basal"))


@dataclass(frozen=True)
class TestErrorParams:
    """Per-infected-sample amplification-failure and per-pool false-amplification rates."""

    p_false_negative: float
    p_false_positive: float

    def __post_init__(self):
        object.__setattr__(
            self, "p_false_negative", _check_probability(self.p_false_negative, "p_false_negative")
        )
        object.__setattr__(
            self, "p_false_positive", _check_probability(self.p_false_positive, "p_false_positive")
        )


@dataclass(frozen=True)
class InfectionState:
    """Binary infection vector over the population."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise InvalidArgumentError("infection state bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class Pool:
    """A set of individuals whose samples are mixed into one test."""

    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(int(m) for m in self.members)
        if not members:
            raise InvalidArgumentError("a pool must have at least one member")
        if any(m < 0 for m in members):
            raise InvalidArgumentError("pool member indices must be non-negative")
        object.__setattr__(self, "members", members)

    @property
    def sorted_members(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)


def pool_of(*members: int) -> Pool:
    return Pool(frozenset(members))


@dataclass(frozen=True)
class Design:
    """An ordered collection of pools tested together or sequentially.

    Duplicate pools are allowed: repeating a test is informative when tests
    can err.
    """

    pools: tuple[Pool, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pools", tuple(self.pools))

    def __len__(self) -> int:
        return len(self.pools)

    def concat(self, other: "Design") -> "Design":
        return Design(self.pools + other.pools)


@dataclass(frozen=True)
class TestData:
    """Binary pooled-test outcomes, aligned with a Design's pool order."""

    results: tuple[int, ...] = ()

    def __post_init__(self):
        results = tuple(int(r) for r in self.results)
        if any(r not in (0, 1) for r in results):
            raise InvalidArgumentError("test results must be 0 or 1")
        object.__setattr__(self, "results", results)

    def __len__(self) -> int:
        return len(self.results)

    def concat(self, other: "TestData") -> "TestData":
        return TestData(self.results + other.results)


def validate_design(
    design: Design, spec: PopulationSpec, max_pool_size: int | None = MAX_POOL_SIZE
) -> None:
    """Check pool membership ranges and (optionally) the dilution cap.

    Pass ``max_pool_size=None`` to lift the cap for experiments.
    """
    for k, pool in enumerate(design.pools):
        if any(m >= spec.n_individuals for m in pool.members):
            raise InvalidArgumentError(f"pool {k} references an individual outside the population")
        if max_pool_size is not None and len(pool) > max_pool_size:
            raise InvalidArgumentError(
                f"pool {k} has {len(pool)} members, above the cap of {max_pool_size}"
            )


# ---------------------------------------------------------------------------
# Prior
# ---------------------------------------------------------------------------


def prior_log_prob(spec: PopulationSpec, prior: PriorParams, state: InfectionState) -> float:
    """Log prior probability of a full infection state.

    The prior factorizes over clusters; within a cluster the primary is a
    Bernoulli(p_primary) draw and the secondaries are conditionally i.i.d.
    Bernoulli(p_secondary or p_basal) given the primary's status.
    """
    if len(state) != spec.n_individuals:
        raise InvalidArgumentError(
            f"state has {len(state)} bits for a population of {spec.n_individuals}"
        )
    lp_p, l1_p = _log(prior.p_primary), _log1m(prior.p_primary)
    lp_s, l1_s = _log(prior.p_secondary), _log1m(prior.p_secondary)
    lp_b, l1_b = _log(prior.p_basal), _log1m(prior.p_basal)
    bits = state.bits
    total = 0.0
    for cluster in spec.clusters:
        if bits[cluster.primary]:
            total += lp_p
            for s in cluster.secondaries:
                total += lp_s if bits[s] else l1_s
        else:
            total += l1_p
            for s in cluster.secondaries:
                total += lp_b if bits[s] else l1_b
    return total


def sample_prior_matrix(
    spec: PopulationSpec, prior: PriorParams, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Draw ``count`` i.i.d. prior states as a (count, N) uint8 matrix."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1", field="count")
    n = spec.n_individuals
    u = rng.random((count, n))
    bits = np.zeros((count, n), dtype=np.uint8)
    for cluster in spec.clusters:
        h0 = cluster.primary
        primary_infected = u[:, h0] < prior.p_primary
        bits[:, h0] = primary_infected
        for s in cluster.secondaries:
            p = np.where(primary_infected, prior.p_secondary, prior.p_basal)
            bits[:, s] = u[:, s] < p
    return bits


def sample_prior(
    spec: PopulationSpec, prior: PriorParams, rng: np.random.Generator, count: int
) -> list[InfectionState]:
    """Draw ``count`` i.i.d. states from the cluster prior."""
    matrix = sample_prior_matrix(spec, prior, rng, count)
    return [InfectionState(tuple(row)) for row in matrix.tolist()]


def prior_mean_prevalence(spec: PopulationSpec, prior: PriorParams) -> float:
    """Closed-form expected infected fraction under the cluster prior."""
    expected = 0.0
    for cluster in spec.clusters:
        n_sec = len(cluster.secondaries)
        expected += prior.p_primary * (1.0 + n_sec * prior.p_secondary)
        expected += (1.0 - prior.p_primary) * n_sec * prior.p_basal
    return expected / spec.n_individuals


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------


def _negative_log_prob(n_infected: int, err: TestErrorParams) -> float:
    """log Pr(pooled result = negative | c infected members)."""
    out = _log1m(err.p_false_positive)
    if n_infected > 0:
        out += n_infected * _log(err.p_false_negative)
    return out


def log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, stable near both ends."""
    if x == 0.0:
        return NEG_INF
    if x == NEG_INF:
        return 0.0
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def pool_log_likelihood(
    pool: Pool, err: TestErrorParams, state: InfectionState, result: int
) -> float:
    """Log probability of one pooled result given the true state.

    The likelihood depends on the state only through the number of infected
    pool members.
    """
    c = sum(state.bits[m] for m in pool.members)
    neg = _negative_log_prob(c, err)
    return neg if result == 0 else log1mexp(neg)


def design_log_likelihood(
    design: Design, err: TestErrorParams, state: InfectionState, data: TestData
) -> float:
    """Log likelihood of a full result vector: tests err independently."""
    if len(data) != len(design):
        raise InvalidArgumentError(
            f"{len(data)} results supplied for a design of {len(design)} pools"
        )
    return sum(
        pool_log_likelihood(pool, err, state, result)
        for pool, result in zip(design.pools, data.results)
    )


def sample_data(
    design: Design, err: TestErrorParams, state: InfectionState, rng: np.random.Generator
) -> TestData:
    """Draw one result vector from the likelihood of ``design`` given ``state``."""
    u = rng.random(len(design))
    results = []
    for k, pool in enumerate(design.pools):
        c = sum(state.bits[m] for m in pool.members)
        p_pos = -math.expm1(_negative_log_prob(c, err))
        results.append(1 if u[k] < p_pos else 0)
    return TestData(tuple(results))


# ---------------------------------------------------------------------------
# Configuration files (canonical JSON, bit-exact round-trip)
# ---------------------------------------------------------------------------


def model_config_to_dict(
    spec: PopulationSpec, prior: PriorParams, err: TestErrorParams
) -> dict:
    return {
        "n_individuals": spec.n_individuals,
        "clusters": [list(c.members) for c in spec.clusters],
        "p_primary": prior.p_primary,
        "p_secondary": prior.p_secondary,
        "p_basal": prior.p_basal,
        "p_false_negative": err.p_false_negative,
        "p_false_positive": err.p_false_positive,
    }


def model_config_from_dict(d: dict) -> tuple[PopulationSpec, PriorParams, TestErrorParams]:
    """Parse and validate the population/parameter configuration mapping.

    Raises InvalidArgumentError with ``field`` set on the first violation.
    """
    if not isinstance(d, dict):
        raise InvalidArgumentError("configuration must be a JSON object")
    missing = [
        k
        for k in (
            "n_individuals",
            "clusters",
            "p_primary",
            "p_secondary",
            "p_basal",
            "p_false_negative",
            "p_false_positive",
        )
        if k not in d
    ]
    if missing:
        raise InvalidArgumentError(f"missing configuration field {missing[0]!r}", field=missing[0])
    n = d["n_individuals"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InvalidArgumentError("n_individuals must be a positive integer", field="n_individuals")
    raw_clusters = d["clusters"]
    if not isinstance(raw_clusters, list) or not raw_clusters:
        raise InvalidArgumentError("clusters must be a non-empty list of index lists", field="clusters")
    clusters = []
    for members in raw_clusters:
        if not isinstance(members, list) or not members:
            raise InvalidArgumentError("each cluster must be a non-empty index list", field="clusters")
        if not all(isinstance(m, int) and not isinstance(m, bool) for m in members):
            raise InvalidArgumentError("cluster members must be integers", field="clusters")
        clusters.append(Cluster(primary=members[0], secondaries=tuple(members[1:])))
    spec = PopulationSpec(n_individuals=n, clusters=tuple(clusters))
    prior = PriorParams(
        p_primary=_check_probability(d["p_primary"], "p_primary"),
        p_secondary=_check_probability(d["p_secondary"], "p_secondary"),
        p_basal=_check_probability(d["p_basal"], "p_basal"),
    )
    err = TestErrorParams(
        p_false_negative=_check_probability(d["p_false_negative"], "p_false_negative"),
        p_false_positive=_check_probability(d["p_false_positive"], "p_false_positive"),
    )
    return spec, prior, err


def canonical_json(obj) -> str:
    """Canonical serialization: stable key order, repr-exact floats."""
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def save_model_config(
    path: str | Path, spec: PopulationSpec, prior: PriorParams, err: TestErrorParams
) -> None:
    Path(path).write_text(canonical_json(model_config_to_dict(spec, prior, err)))


def load_model_config(path: str | Path) -> tuple[PopulationSpec, PriorParams, TestErrorParams]:
    return model_config_from_dict(json.loads(Path(path).read_text()))
