"""Deterministic RNG stream derivation.

Every stochastic operation takes either an explicit seed or an explicit
``numpy.random.Generator``. Independent substreams are derived from a root
seed plus a path of integer tags, so that concurrent work units (harness
replicates, session rounds, hill-climb restarts) are reproducible and
mutually independent.
"""

from __future__ import annotations

import numpy as np

# Purpose tags mixed into seed paths. Values are arbitrary but frozen:
# changing them changes every derived stream.
TAG_SAMPLES = 11      # posterior / prior sampling for a session round
TAG_SEARCH = 12       # hill-climb move stream
TAG_SEARCH_INIT = 13  # hill-climb initial designs
TAG_MI_Y = 14         # shared outcome draws for MI scoring
TAG_EXECUTOR = 15     # simulated test noise
TAG_POPULATION = 16   # true-state draws in the harness
TAG_STRATEGY = 17     # per-strategy noise in the harness


def substream_seed(seed: int, *path: int) -> int:
    """Derive a u64 child seed from ``seed`` and an integer path."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by ``seed`` and ``path``."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return np.random.Generator(np.random.PCG64(ss))
