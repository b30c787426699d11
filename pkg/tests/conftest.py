import numpy as np
import pytest

from dopepool import Cluster, PopulationSpec, PriorParams, TestErrorParams


@pytest.fixture
def spec2():
    return PopulationSpec(2, (Cluster(0, (1,)),))


@pytest.fixture
def spec6():
    return PopulationSpec(6, (Cluster(0, (1, 2)), Cluster(3, (4, 5))))


@pytest.fixture
def spec10():
    return PopulationSpec(
        10, (Cluster(0, (1,)), Cluster(2, (3, 4)), Cluster(5, (6, 7, 8, 9)))
    )


@pytest.fixture
def prior_default():
    return PriorParams(p_primary=0.2, p_secondary=0.2, p_basal=0.01)


@pytest.fixture
def err_default():
    return TestErrorParams(p_false_negative=0.2, p_false_positive=0.01)


@pytest.fixture
def err_perfect():
    return TestErrorParams(p_false_negative=0.0, p_false_positive=0.0)


def random_spec(rng: np.random.Generator, n_max: int = 12) -> PopulationSpec:
    """Random cluster partition over a random population size."""
    n = int(rng.integers(2, n_max + 1))
    order = list(rng.permutation(n))
    clusters = []
    while order:
        size = int(rng.integers(1, min(4, len(order)) + 1))
        members, order = order[:size], order[size:]
        clusters.append(Cluster(int(members[0]), tuple(int(m) for m in members[1:])))
    return PopulationSpec(n, tuple(clusters))
