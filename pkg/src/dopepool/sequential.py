"""Sequential information-optimal screening loop.

Each round proposes the K-pool design of highest estimated mutual
information given everything observed so far, ingests the new results, and
refreshes the posterior marginals. The session stops once every
individual's marginal infection probability has left the decision interval
(the band of probabilities considered "still uncertain"); classification is
then a 0.5 threshold on the marginals.

Setting K to the whole test budget with an empty decision interval gives
the nonsequential mode: one optimized design, no retesting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .design import HillClimbConfig, optimal_design
from .errors import InvalidArgumentError
from .model import (
    Design,
    InfectionState,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    sample_data,
    sample_prior_matrix,
)
from .posterior import (
    GibbsConfig,
    PosteriorSamples,
    from_prior_draws,
    gibbs_run,
    posterior_marginals,
)
from .seeding import TAG_EXECUTOR, TAG_SAMPLES, TAG_SEARCH, substream, substream_seed


@dataclass(frozen=True)
class DecisionInterval:
    """Closed band [lower, upper] of marginals treated as undecided.

    ``DecisionInterval.empty()`` (both bounds None) means no uncertainty
    band at all: any marginal counts as decided, so a session stops after
    its first round.
    """

    lower: float | None
    upper: float | None

    def __post_init__(self):
        if (self.lower is None) != (self.upper is None):
            raise InvalidArgumentError("interval bounds must both be set or both be None")
        if self.lower is not None:
            if not 0.0 <= self.lower <= 1.0 or not 0.0 <= self.upper <= 1.0:
                raise InvalidArgumentError("interval bounds must lie in [0, 1]")
            if not self.lower < self.upper:
                raise InvalidArgumentError("interval lower bound must be < upper bound")

    @classmethod
    def empty(cls) -> "DecisionInterval":
        return cls(lower=None, upper=None)

    @property
    def is_empty(self) -> bool:
        return self.lower is None

    def contains(self, value: float) -> bool:
        if self.is_empty:
            return False
        return self.lower <= value <= self.upper

    def to_json(self):
        if self.is_empty:
            return None
        return {"lower": self.lower, "upper": self.upper}

    @classmethod
    def from_json(cls, obj) -> "DecisionInterval":
        if obj is None:
            return cls.empty()
        if not isinstance(obj, dict) or "lower" not in obj or "upper" not in obj:
            raise InvalidArgumentError(
                "interval must be null or an object with lower and upper", field="interval"
            )
        return cls(lower=float(obj["lower"]), upper=float(obj["upper"]))


@dataclass(frozen=True)
class DopeConfig:
    """Parameters of the sequential loop.

    ``seed`` drives every stream in the session; the seeds inside ``gibbs``
    and ``hill_climb`` are overridden per round with values derived from it
    and the round index, so rounds are independent but replayable.
    """

    k_pools_per_step: int
    interval: DecisionInterval
    gibbs: GibbsConfig
    hill_climb: HillClimbConfig = field(default_factory=HillClimbConfig)
    max_rounds: int | None = None
    seed: int = 0
    max_pool_size: int = 32

    def __post_init__(self):
        if self.k_pools_per_step < 1:
            raise InvalidArgumentError("k_pools_per_step must be >= 1", field="k_pools_per_step")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise InvalidArgumentError("max_rounds must be >= 1", field="max_rounds")

    def effective_max_rounds(self, spec: PopulationSpec) -> int:
        # Liveness cap: the stopping rule has no termination guarantee when
        # noisy results keep marginals inside the interval.
        if self.max_rounds is not None:
            return self.max_rounds
        return max(1, math.ceil(10 * spec.n_individuals / self.k_pools_per_step))


@dataclass
class SessionState:
    """Accumulated design and data with the latest marginals."""

    design: Design = field(default_factory=Design)
    data: TestData = field(default_factory=TestData)
    marginals: np.ndarray | None = None
    round: int = 0
    stopped: bool = False
    classification: tuple[int, ...] | None = None
    samples: PosteriorSamples | None = None  # shared-chain cache; derived, not state

    @property
    def tests_used(self) -> int:
        return len(self.design)


def _condition_samples(
    state: SessionState,
    config: DopeConfig,
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> PosteriorSamples:
    """Samples conditioned on the session's (design, data) at this round.

    Round 0 with nothing observed reduces to i.i.d. prior sampling; later
    rounds run the Gibbs sampler. The seed depends only on (config.seed,
    round), so a replayed session reproduces these draws bit for bit.
    """
    if len(state.design) == 0:
        rng = substream(config.seed, TAG_SAMPLES, state.round)
        matrix = sample_prior_matrix(spec, prior, rng, config.gibbs.n_samples)
        return from_prior_draws(matrix)
    gibbs_cfg = replace(
        config.gibbs, seed=substream_seed(config.seed, TAG_SAMPLES, state.round)
    )
    return gibbs_run(gibbs_cfg, state.design, state.data, spec, prior, err)


def _samples_current(state: SessionState) -> bool:
    return (
        state.samples is not None
        and state.samples.design == state.design
        and state.samples.data == state.data
    )


def propose(
    state: SessionState,
    config: DopeConfig,
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> Design:
    """Next K-pool design for the session; refreshes ``state.marginals``.

    The same sample set fuels both the marginal refresh and the design
    search; when ``ingest`` already computed samples for the current
    conditioning they are reused rather than re-drawn.
    """
    if state.stopped:
        raise InvalidArgumentError("session already stopped")
    if not _samples_current(state):
        state.samples = _condition_samples(state, config, spec, prior, err)
    state.marginals = posterior_marginals(state.samples)
    hc = replace(
        config.hill_climb, seed=substream_seed(config.seed, TAG_SEARCH, state.round)
    )
    proposal, _ = optimal_design(
        config.k_pools_per_step,
        state.samples,
        err,
        spec,
        hc,
        max_pool_size=config.max_pool_size,
    )
    return proposal


def ingest(
    state: SessionState,
    new_design: Design,
    new_data: TestData,
    config: DopeConfig,
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> SessionState:
    """Append results, refresh marginals, and apply the stopping rule.

    Mutates and returns ``state``. Ingesting zero pools is the identity.
    """
    if len(new_design) != len(new_data):
        raise InvalidArgumentError(
            f"{len(new_data)} results supplied for {len(new_design)} new pools"
        )
    if len(new_design) == 0:
        return state
    state.design = state.design.concat(new_design)
    state.data = state.data.concat(new_data)
    state.round += 1
    state.samples = _condition_samples(state, config, spec, prior, err)
    state.marginals = posterior_marginals(state.samples)
    if should_stop(state.marginals, config.interval):
        state.stopped = True
        state.classification = classify(state.marginals)
    return state


def should_stop(marginals, interval: DecisionInterval) -> bool:
    """True iff no marginal lies inside the decision interval."""
    if interval.is_empty:
        return True
    return all(not interval.contains(float(m)) for m in marginals)


def classify(marginals) -> tuple[int, ...]:
    """Threshold marginals at 0.5; an exact tie classifies negative."""
    return tuple(1 if float(m) > 0.5 else 0 for m in marginals)


@dataclass(frozen=True)
class DopeResult:
    classification: tuple[int, ...]
    tests_used: int
    rounds: int
    truncated: bool
    state: SessionState


def simulation_executor(
    true_state: InfectionState, err: TestErrorParams, seed: int
) -> Callable[[Design], TestData]:
    """Executor that answers designs by sampling the likelihood of a hidden state."""
    counter = {"calls": 0}

    def execute(design: Design) -> TestData:
        rng = substream(seed, TAG_EXECUTOR, counter["calls"])
        counter["calls"] += 1
        return sample_data(design, err, true_state, rng)

    return execute


def run(
    config: DopeConfig,
    executor: Callable[[Design], TestData],
    spec: PopulationSpec,
    prior: PriorParams,
    err: TestErrorParams,
) -> DopeResult:
    """Full sequential session: propose, test, ingest until decided.

    Stops when the decision rule fires or after ``max_rounds`` rounds; a
    truncated session still classifies from its final marginals.
    """
    state = SessionState()
    max_rounds = config.effective_max_rounds(spec)
    truncated = False
    while True:
        proposal = propose(state, config, spec, prior, err)
        results = executor(proposal)
        ingest(state, proposal, results, config, spec, prior, err)
        if state.stopped:
            break
        if state.round >= max_rounds:
            truncated = True
            state.stopped = True
            state.classification = classify(state.marginals)
            break
    return DopeResult(
        classification=state.classification,
        tests_used=state.tests_used,
        rounds=state.round,
        truncated=truncated,
        state=state,
    )


# ---------------------------------------------------------------------------
# Transcript format (shared by the service log, baselines, and tests)
# ---------------------------------------------------------------------------


def format_transcript(records: list[dict]) -> str:
    """Append-only structured text: one JSON record per line."""
    return "".join(json.dumps(rec, sort_keys=False) + "\n" for rec in records)


def parse_transcript(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
