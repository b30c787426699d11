import math

import numpy as np
import pytest

from dopepool import (
    Cluster,
    InfectionState,
    InvalidArgumentError,
    PopulationSpec,
    PriorParams,
    TestErrorParams,
    dorfman_run,
    matrix_run,
    recursive_run,
    separate_run,
)
from dopepool.baselines import DorfmanConfig, MatrixConfig, RecursiveConfig
from dopepool.seeding import substream

PERFECT = TestErrorParams(0.0, 0.0)


def state_with(n, infected=()):
    return InfectionState(tuple(1 if i in infected else 0 for i in range(n)))


class TestDorfman:
    def test_all_healthy_single_pool(self):
        out = dorfman_run(state_with(8), PERFECT, DorfmanConfig(8), substream(0))
        assert out.tests_used == 1
        assert out.classification == (0,) * 8

    def test_one_infected_full_retest(self):
        out = dorfman_run(state_with(8, {3}), PERFECT, DorfmanConfig(8), substream(1))
        assert out.tests_used == 9
        assert out.classification == state_with(8, {3}).bits

    def test_last_pool_may_be_smaller(self):
        out = dorfman_run(state_with(10), PERFECT, DorfmanConfig(4), substream(2))
        assert out.tests_used == 3  # pools of 4, 4, 2
        assert max(len(members) for members, _ in out.transcript) == 4

    def test_positive_pool_all_negative_individuals_ends_there(self):
        # an always-positive pooled result with individuals that cannot
        # amplify: everyone stays negative, no extra action beyond retests
        err = TestErrorParams(p_false_negative=1.0, p_false_positive=1.0)
        out = dorfman_run(state_with(4, {0}), err, DorfmanConfig(4), substream(3))
        # pool positive (fp), then 4 individual tests, all positive by fp=1
        assert out.tests_used == 5

    def test_expected_tests_per_person(self):
        # i.i.d. prevalence p, pool size s: 1/s + 1 - (1-p)^s tests/person
        p, s, n, reps = 0.05, 5, 20, 4000
        spec = PopulationSpec(n, tuple(Cluster(i) for i in range(n)))
        prior = PriorParams(p, 0.5, 0.5)
        from dopepool.model import sample_prior_matrix

        expected = 1 / s + 1 - (1 - p) ** s
        rng = substream(44)
        per_person = []
        for _ in range(reps):
            bits = sample_prior_matrix(spec, prior, rng, 1)[0]
            out = dorfman_run(
                InfectionState(tuple(int(b) for b in bits)), PERFECT, DorfmanConfig(s), rng
            )
            per_person.append(out.tests_used / n)
        got = float(np.mean(per_person))
        se = float(np.std(per_person, ddof=1) / math.sqrt(reps))
        assert abs(got - expected) <= 3 * se

    def test_tests_bounded(self):
        rng = substream(5)
        for _ in range(50):
            bits = (rng.random(12) < 0.3).astype(int)
            out = dorfman_run(
                InfectionState(tuple(bits)), TestErrorParams(0.2, 0.01), DorfmanConfig(4), rng
            )
            n_pools = math.ceil(12 / 4)
            assert n_pools <= out.tests_used <= n_pools + 12
            assert out.tests_used == len(out.transcript)


class TestRecursive:
    def test_all_healthy(self):
        out = recursive_run(state_with(8), PERFECT, RecursiveConfig(8), substream(0))
        assert out.tests_used == 1

    def test_one_infected_among_eight(self):
        # splitting halves down to the infected singleton: 1 + 2 * 3 tests
        out = recursive_run(state_with(8, {5}), PERFECT, RecursiveConfig(8), substream(1))
        assert out.tests_used == 7
        assert out.classification == state_with(8, {5}).bits

    def test_only_individually_tested_positives_are_positive(self):
        err = TestErrorParams(0.0, 1.0)  # every pooled (and single) test fires
        out = recursive_run(state_with(4), err, RecursiveConfig(4), substream(2))
        # all positives come from singleton tests; the rule is still honored
        for members, result in out.transcript:
            if len(members) > 1:
                assert result == 1
        singles = {members[0] for members, _ in out.transcript if len(members) == 1}
        assert all(
            (out.classification[i] == 1) == (i in singles) for i in range(4)
        )

    def test_odd_pool_splits_larger_half_first(self):
        out = recursive_run(state_with(5, {4}), PERFECT, RecursiveConfig(5), substream(3))
        pools = [members for members, _ in out.transcript]
        assert pools[0] == (0, 1, 2, 3, 4)
        assert pools[1] == (0, 1, 2)  # ceil(5/2) first

    def test_never_positive_without_individual_test(self):
        rng = substream(6)
        err = TestErrorParams(0.3, 0.05)
        for _ in range(100):
            bits = (rng.random(8) < 0.25).astype(int)
            out = recursive_run(InfectionState(tuple(bits)), err, RecursiveConfig(8), rng)
            singles = {m[0] for m, r in out.transcript if len(m) == 1 and r == 1}
            assert {i for i, c in enumerate(out.classification) if c == 1} <= singles


class TestMatrix:
    def test_all_healthy_grid(self):
        out = matrix_run(state_with(16), PERFECT, MatrixConfig(4, 4), substream(0))
        assert out.tests_used == 8
        assert out.classification == (0,) * 16

    def test_single_infected(self):
        out = matrix_run(state_with(16, {6}), PERFECT, MatrixConfig(4, 4), substream(1))
        assert out.tests_used == 9
        assert out.classification == state_with(16, {6}).bits

    def test_two_infected_no_shared_line(self):
        # infected at (0,0) and (1,1): two positive rows x two positive
        # columns give four crossings
        out = matrix_run(state_with(16, {0, 5}), PERFECT, MatrixConfig(4, 4), substream(2))
        assert out.tests_used == 8 + 4
        assert out.classification == state_with(16, {0, 5}).bits

    def test_unmatched_positive_row_classifies_negative(self):
        # false-positive row with no positive column: documented resolution
        # is all-negative without retesting
        err = TestErrorParams(0.0, 1.0)
        out = matrix_run(state_with(4), err, MatrixConfig(2, 2), substream(3))
        assert out.tests_used == 4 + 4  # every row/column fires, 4 crossings
        assert all(c in (0, 1) for c in out.classification)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            matrix_run(state_with(5), PERFECT, MatrixConfig(2, 2), substream(4))


class TestSeparate:
    def test_always_n_tests(self):
        out = separate_run(state_with(7, {2}), PERFECT, substream(0))
        assert out.tests_used == 7
        assert out.classification == state_with(7, {2}).bits

    def test_false_negative_rate(self):
        err = TestErrorParams(0.2, 0.0)
        n, reps = 30, 2000
        misses = 0
        rng = substream(11)
        for _ in range(reps):
            out = separate_run(state_with(n, set(range(n))), err, rng)
            misses += sum(1 for c in out.classification if c == 0)
        rate = misses / (n * reps)
        se = math.sqrt(0.2 * 0.8 / (n * reps))
        assert abs(rate - 0.2) <= 3 * se


class TestSharedInvariants:
    def test_perfect_tests_never_misclassify(self, prior_default):
        rng = substream(21)
        n = 12
        spec = PopulationSpec(n, tuple(Cluster(i) for i in range(n)))
        from dopepool.model import sample_prior_matrix

        for rep in range(30):
            bits = sample_prior_matrix(spec, PriorParams(0.2, 0.5, 0.02), rng, 1)[0]
            state = InfectionState(tuple(int(b) for b in bits))
            for out in (
                dorfman_run(state, PERFECT, DorfmanConfig(4), rng),
                recursive_run(state, PERFECT, RecursiveConfig(4), rng),
                matrix_run(state, PERFECT, MatrixConfig(3, 4), rng),
                separate_run(state, PERFECT, rng),
            ):
                assert out.classification == state.bits
                assert out.tests_used == len(out.transcript)

    def test_transcript_records_shape(self):
        out = dorfman_run(state_with(4, {1}), PERFECT, DorfmanConfig(2), substream(9))
        records = out.transcript_records()
        assert all(set(r) == {"round", "pools", "results"} for r in records)
        assert [r["round"] for r in records] == list(range(1, len(records) + 1))
