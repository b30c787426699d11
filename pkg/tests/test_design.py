import itertools
import math

import numpy as np
import pytest

from dopepool import (
    Cluster,
    Design,
    HillClimbConfig,
    InvalidArgumentError,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    estimate_mi,
    exact_mi,
    exact_posterior,
    optimal_design,
    perturb,
    pool_of,
    sample_prior_matrix,
)
from dopepool.design import PoolCountMatrix, format_search_trace
from dopepool.posterior import binary_entropy, from_prior_draws
from dopepool.seeding import substream


@pytest.fixture
def cluster3():
    spec = PopulationSpec(3, (Cluster(0, (1, 2)),))
    prior = PriorParams(0.2, 0.2, 0.01)
    err = TestErrorParams(0.2, 0.01)
    return spec, prior, err


def prior_samples(spec, prior, count, seed=7):
    return from_prior_draws(sample_prior_matrix(spec, prior, substream(seed), count))


def prior_distribution(spec, prior, err):
    return exact_posterior(spec, prior, err, Design(), TestData())


class TestPoolCountMatrix:
    def test_counts_infected_members(self):
        states = np.array([[1, 0, 1], [0, 0, 0], [1, 1, 1]], dtype=np.uint8)
        design = Design((pool_of(0, 1), pool_of(2)))
        pcm = PoolCountMatrix.build(states, design, 3)
        assert pcm.counts.tolist() == [[1, 1], [0, 0], [2, 1]]

    def test_counts_bounded_by_pool_size(self):
        rng = np.random.default_rng(0)
        states = (rng.random((50, 6)) < 0.5).astype(np.uint8)
        design = Design((pool_of(0, 2, 4), pool_of(1, 5)))
        pcm = PoolCountMatrix.build(states, design, 6)
        assert pcm.counts.min() >= 0
        assert pcm.counts[:, 0].max() <= 3
        assert pcm.counts[:, 1].max() <= 2


class TestEstimateMI:
    def test_empty_design_is_exactly_zero(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 500)
        est = estimate_mi(Design(), samples, err, substream(1))
        assert est.value == 0.0

    def test_uninformative_channel(self, cluster3):
        spec, prior, _ = cluster3
        err = TestErrorParams(p_false_negative=1.0, p_false_positive=0.0)
        samples = prior_samples(spec, prior, 4000)
        est = estimate_mi(Design((pool_of(0, 1, 2),)), samples, err, substream(2))
        assert abs(est.value) <= 5 / 4000

    def test_matches_exact_oracle(self, cluster3):
        spec, prior, err = cluster3
        exact = exact_mi(
            Design((pool_of(0, 1, 2),)), prior_distribution(spec, prior, err), err
        )
        samples = prior_samples(spec, prior, 20000)
        est = estimate_mi(Design((pool_of(0, 1, 2),)), samples, err, substream(3))
        assert abs(est.value - exact) <= 0.01

    def test_bit_exact_repeatability(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 3000)
        design = Design((pool_of(0, 1), pool_of(2)))
        a = estimate_mi(design, samples, err, substream(9))
        b = estimate_mi(design, samples, err, substream(9))
        assert a.value == b.value
        assert a.se_hint == b.se_hint

    def test_never_much_below_zero(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 2000)
        rng = np.random.default_rng(0)
        for trial in range(10):
            size = int(rng.integers(1, 4))
            members = [int(m) for m in rng.choice(3, size=size, replace=False)]
            est = estimate_mi(Design((pool_of(*members),)), samples, err, substream(trial))
            assert est.value >= -5 / 2000

    def test_requires_two_samples(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 1)
        with pytest.raises(InvalidArgumentError):
            estimate_mi(Design((pool_of(0),)), samples, err, substream(0))

    def test_cost_scales_quadratically_in_samples(self, cluster3):
        import time

        spec = PopulationSpec(10, (Cluster(0, tuple(range(1, 10))),))
        prior = PriorParams(0.2, 0.2, 0.01)
        err = TestErrorParams(0.2, 0.01)
        design = Design(
            tuple(pool_of(*range(i, i + 4)) for i in range(6))
        )
        sizes = (2000, 20000)
        times = []
        for n in sizes:
            samples = prior_samples(spec, prior, n)
            # batch enough calls to dwarf the ~10ms process_time tick;
            # process_time itself is immune to other processes
            reps = max(1, (sizes[-1] // n) ** 2 // 4)
            best = math.inf
            for _ in range(2):
                t0 = time.process_time()
                for _ in range(reps):
                    estimate_mi(design, samples, err, substream(1))
                best = min(best, (time.process_time() - t0) / reps)
            times.append(best)
        exponent = math.log(times[1] / times[0]) / math.log(sizes[1] / sizes[0])
        assert 1.7 <= exponent <= 2.3


class TestExactMI:
    def test_noiseless_single_individual_pool(self):
        spec = PopulationSpec(2, (Cluster(0), Cluster(1)))
        p = 0.3
        prior = PriorParams(p, 0.5, 0.5)
        err = TestErrorParams(0.0, 0.0)
        dist = prior_distribution(spec, prior, err)
        assert exact_mi(Design((pool_of(0),)), dist, err) == pytest.approx(
            binary_entropy(p), abs=1e-12
        )

    def test_nonnegative_and_zero_iff_independent(self, cluster3):
        spec, prior, err = cluster3
        dist = prior_distribution(spec, prior, err)
        rng = np.random.default_rng(5)
        for _ in range(10):
            size = int(rng.integers(1, 4))
            members = [int(m) for m in rng.choice(3, size=size, replace=False)]
            assert exact_mi(Design((pool_of(*members),)), dist, err) >= 0.0
        blind = TestErrorParams(1.0, 0.0)
        assert exact_mi(Design((pool_of(0, 1, 2),)), dist, blind) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_duplicate_pool_never_decreases_information(self):
        rng = np.random.default_rng(13)
        for _ in range(6):
            n = int(rng.integers(2, 7))
            spec = PopulationSpec(n, tuple(Cluster(i) for i in range(n)))
            prior = PriorParams(0.1 + 0.3 * rng.random(), 0.5, 0.5)
            err = TestErrorParams(0.3 * rng.random(), 0.05 * rng.random())
            dist = prior_distribution(spec, prior, err)
            size = int(rng.integers(1, n + 1))
            members = [int(m) for m in rng.choice(n, size=size, replace=False)]
            pool = pool_of(*members)
            single = exact_mi(Design((pool,)), dist, err)
            doubled = exact_mi(Design((pool, pool)), dist, err)
            assert doubled >= single - 1e-12

    def test_budget_refusal(self):
        from dopepool import EnumerationBudgetError

        spec = PopulationSpec(17, tuple(Cluster(i) for i in range(17)))
        prior = PriorParams(0.1, 0.1, 0.1)
        err = TestErrorParams(0.1, 0.1)
        with pytest.raises(EnumerationBudgetError):
            exact_mi(Design((pool_of(0),)), prior_distribution(spec, prior, err), err)


class TestPerturb:
    def test_singleton_pool_grows_or_swaps(self):
        spec = PopulationSpec(4, tuple(Cluster(i) for i in range(4)))
        design = Design((pool_of(2),))
        rng = substream(0)
        for _ in range(200):
            out = perturb(design, spec, rng)
            assert len(out.pools[0]) in (1, 2)
            if len(out.pools[0]) == 1:
                pass  # swap may or may not move the member
            for pool in out.pools:
                assert pool.members <= set(range(4))

    def test_respects_pool_cap(self):
        spec = PopulationSpec(6, tuple(Cluster(i) for i in range(6)))
        design = Design((pool_of(0, 1, 2),))
        rng = substream(4)
        for _ in range(300):
            design = perturb(design, spec, rng, max_pool_size=3)
            assert len(design.pools[0]) <= 3

    def test_all_move_classes_reachable(self):
        spec = PopulationSpec(6, tuple(Cluster(i) for i in range(6)))
        design = Design((pool_of(0, 1, 2),))
        rng = substream(11)
        grew = shrank = swapped = 0
        for _ in range(10000):
            out = perturb(design, spec, rng)
            before, after = design.pools[0].members, out.pools[0].members
            if len(after) == len(before) + 1:
                grew += 1
            elif len(after) == len(before) - 1:
                shrank += 1
            elif after != before:
                swapped += 1
        assert grew > 0 and shrank > 0 and swapped > 0

    def test_identity_when_every_move_is_blocked(self):
        # single individual: no absent member to add or swap, no pair to drop
        spec = PopulationSpec(1, (Cluster(0),))
        design = Design((pool_of(0),))
        assert perturb(design, spec, substream(2)) == design


class TestOptimalDesign:
    def test_finds_enumerated_optimum_two_individuals(self):
        spec = PopulationSpec(2, (Cluster(0), Cluster(1)))
        prior = PriorParams(0.5, 0.5, 0.5)
        err = TestErrorParams(0.0, 0.0)
        dist = prior_distribution(spec, prior, err)
        all_pools = [pool_of(0), pool_of(1), pool_of(0, 1)]
        best_exact = max(
            exact_mi(Design((a, b)), dist, err)
            for a, b in itertools.product(all_pools, repeat=2)
        )
        assert best_exact == pytest.approx(2 * math.log(2), abs=1e-12)
        samples = prior_samples(spec, prior, 4000, seed=3)
        hc = HillClimbConfig(n_restarts=4, n_perturbations=8, max_steps=12, seed=5)
        found, est = optimal_design(2, samples, err, spec, hc)
        assert exact_mi(found, dist, err) == pytest.approx(2 * math.log(2), abs=1e-9)
        assert est.n_samples == 4000

    def test_single_pool_targets_the_uncertain_individual(self):
        # synthetic sample set: individual 2 is a coin flip, the rest are
        # certain; the best single noiseless pool must contain individual 2
        spec = PopulationSpec(4, tuple(Cluster(i) for i in range(4)))
        err = TestErrorParams(0.0, 0.0)
        matrix = np.zeros((2000, 4), dtype=np.uint8)
        matrix[: 1000, 2] = 1
        matrix[:, 3] = 1
        samples = from_prior_draws(matrix)
        hc = HillClimbConfig(n_restarts=4, n_perturbations=10, max_steps=10, seed=1)
        found, est = optimal_design(1, samples, err, spec, hc)
        assert 2 in found.pools[0].members
        assert 3 not in found.pools[0].members  # certain-positive drowns the signal

    def test_deterministic_under_seed(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 2000)
        hc = HillClimbConfig(n_restarts=3, n_perturbations=6, max_steps=8, seed=21)
        a = optimal_design(2, samples, err, spec, hc)
        b = optimal_design(2, samples, err, spec, hc)
        assert a[0] == b[0]
        assert a[1].value == b[1].value

    def test_never_worse_than_restart_starts(self, cluster3):
        # the accepted chain is monotone under the shared scoring stream, so
        # the returned design cannot score below any restart's initial design
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 1500)
        hc = HillClimbConfig(n_restarts=3, n_perturbations=5, max_steps=6, seed=2)
        trace: list = []
        found, est = optimal_design(1, samples, err, spec, hc, trace=trace)
        starts = [rec["current"] for rec in trace if rec["step"] == 0]
        assert est.value >= max(starts) - 1e-12

    def test_trace_renders_as_text(self, cluster3):
        spec, prior, err = cluster3
        samples = prior_samples(spec, prior, 800)
        hc = HillClimbConfig(n_restarts=1, n_perturbations=4, max_steps=4, seed=3)
        trace: list = []
        optimal_design(1, samples, err, spec, hc, trace=trace)
        text = format_search_trace(trace)
        assert "restart=0 step=0" in text
        assert "accepted=" in text
