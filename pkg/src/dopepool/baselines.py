"""Reference pooling strategies: Dorfman, recursive, matrix, separate.

All strategies draw their test outcomes through the shared pooled-test
likelihood (``model.sample_data``); none has a private noise model. Each
returns a StrategyOutcome whose transcript lists every (pool, result) in
the order tested.

Noisy tests create ambiguous events these classics never defined (e.g. a
positive pool whose members all test negative individually). Resolutions
here: individual results supersede pooled results, and a positive row or
column with no positive counterpart in matrix pooling classifies negative
without retesting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import (
    MAX_POOL_SIZE,
    Design,
    InfectionState,
    Pool,
    TestErrorParams,
    sample_data,
)


@dataclass(frozen=True)
class DorfmanConfig:
    pool_size: int

    def __post_init__(self):
        if not 1 <= self.pool_size <= MAX_POOL_SIZE:
            raise InvalidArgumentError(
                f"pool_size must be in 1..{MAX_POOL_SIZE}", field="pool_size"
            )


@dataclass(frozen=True)
class RecursiveConfig:
    initial_pool_size: int

    def __post_init__(self):
        if not 1 <= self.initial_pool_size <= MAX_POOL_SIZE:
            raise InvalidArgumentError(
                f"initial_pool_size must be in 1..{MAX_POOL_SIZE}", field="initial_pool_size"
            )


@dataclass(frozen=True)
class MatrixConfig:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgumentError("matrix dimensions must be positive")
        if self.rows > MAX_POOL_SIZE or self.cols > MAX_POOL_SIZE:
            raise InvalidArgumentError(f"matrix dimensions must be <= {MAX_POOL_SIZE}")


@dataclass(frozen=True)
class StrategyOutcome:
    classification: tuple[int, ...]
    tests_used: int
    transcript: tuple[tuple[tuple[int, ...], int], ...]  # ((sorted members), result)

    def transcript_records(self) -> list[dict]:
        return [
            {"round": i + 1, "pools": [list(members)], "results": [result]}
            for i, (members, result) in enumerate(self.transcript)
        ]


class _Tester:
    """Sequentially tests pools against a hidden state, logging as it goes."""

    def __init__(self, state: InfectionState, err: TestErrorParams, rng: np.random.Generator):
        self.state = state
        self.err = err
        self.rng = rng
        self.log: list[tuple[tuple[int, ...], int]] = []

    def test(self, members) -> int:
        pool = Pool(frozenset(members))
        result = sample_data(Design((pool,)), self.err, self.state, self.rng).results[0]
        self.log.append((tuple(sorted(pool.members)), result))
        return result

    def outcome(self, classification) -> StrategyOutcome:
        return StrategyOutcome(
            classification=tuple(int(b) for b in classification),
            tests_used=len(self.log),
            transcript=tuple(self.log),
        )


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(start, min(start + size, n))) for start in range(0, n, size)]


def dorfman_run(
    true_state: InfectionState,
    err: TestErrorParams,
    cfg: DorfmanConfig,
    rng: np.random.Generator,
) -> StrategyOutcome:
    """Fixed-size pools; members of positive pools are retested individually.

    A negative pool clears all members. In a positive pool each member's
    classification is its own individual result, so a positive pool whose
    members all test negative ends there (no further action).
    """
    n = len(true_state)
    tester = _Tester(true_state, err, rng)
    classification = [0] * n
    for chunk in _chunks(n, cfg.pool_size):
        if tester.test(chunk) == 1:
            for member in chunk:
                classification[member] = tester.test([member])
    return tester.outcome(classification)


def recursive_run(
    true_state: InfectionState,
    err: TestErrorParams,
    cfg: RecursiveConfig,
    rng: np.random.Generator,
) -> StrategyOutcome:
    """Binary splitting of positive pools down to individuals.

    Only an individual who is eventually tested separately and found
    positive is classified positive. Odd pools split with the larger half
    first.
    """
    n = len(true_state)
    tester = _Tester(true_state, err, rng)
    classification = [0] * n

    def descend(members: list[int]) -> None:
        result = tester.test(members)
        if result == 0:
            return
        if len(members) == 1:
            classification[members[0]] = 1
            return
        half = (len(members) + 1) // 2
        descend(members[:half])
        descend(members[half:])

    for chunk in _chunks(n, cfg.initial_pool_size):
        descend(chunk)
    return tester.outcome(classification)


def matrix_run(
    true_state: InfectionState,
    err: TestErrorParams,
    cfg: MatrixConfig,
    rng: np.random.Generator,
) -> StrategyOutcome:
    """Grid pooling: test all rows and columns, then the positive crossings.

    Individual index i sits at (i // cols, i % cols). Individuals at the
    intersection of a positive row and a positive column are tested
    separately and classified by that result; everyone else, including
    members of unmatched positive rows or columns, is classified negative.
    """
    n = len(true_state)
    if cfg.rows * cfg.cols != n:
        raise InvalidArgumentError(
            f"a {cfg.rows}x{cfg.cols} grid does not hold {n} individuals"
        )
    tester = _Tester(true_state, err, rng)
    classification = [0] * n
    row_members = [
        [r * cfg.cols + c for c in range(cfg.cols)] for r in range(cfg.rows)
    ]
    col_members = [
        [r * cfg.cols + c for r in range(cfg.rows)] for c in range(cfg.cols)
    ]
    row_positive = [tester.test(ms) == 1 for ms in row_members]
    col_positive = [tester.test(ms) == 1 for ms in col_members]
    for r in range(cfg.rows):
        if not row_positive[r]:
            continue
        for c in range(cfg.cols):
            if col_positive[c]:
                idx = r * cfg.cols + c
                classification[idx] = tester.test([idx])
    return tester.outcome(classification)


def separate_run(
    true_state: InfectionState, err: TestErrorParams, rng: np.random.Generator
) -> StrategyOutcome:
    """One singleton test per individual; classification is the raw result."""
    n = len(true_state)
    tester = _Tester(true_state, err, rng)
    classification = [tester.test([i]) for i in range(n)]
    return tester.outcome(classification)
