import numpy as np
import pytest

from metastable.chain import build_chain
from metastable.generators import random_reversible, random_subset, two_state, two_well


@pytest.fixture
def pair():
    """Two-state chain with ``p(a, b) = 0.2`` and ``p(b, a) = 0.3``."""
    return two_state(0.2, 0.3)


@pytest.fixture
def path3():
    p = [[0.6, 0.4, 0.0], [0.2, 0.5, 0.3], [0.0, 0.45, 0.55]]
    return build_chain(["a", "b", "c"], p)


@pytest.fixture
def well8():
    return two_well(8, 4.0, 0.5)


def random_cases(count, seed, n_max=30, n_min=3):
    """Deterministic list of ``(chain, R)`` pairs of random reversible chains."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        chain = random_reversible(n, rng)
        out.append((chain, random_subset(chain, rng)))
    return out
