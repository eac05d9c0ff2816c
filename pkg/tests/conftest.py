import numpy as np
import pytest

from casimir.graph import PotentialTable, TreeTopology, jitter, random_potentials, random_tree_topology


def random_chain(rng, p_max=6, y_max=4, scale=1.0, seed_jitter=None):
    p = int(rng.integers(1, p_max + 1))
    sizes = tuple(int(s) for s in rng.integers(1, y_max + 1, p))
    pot = random_potentials(rng, TreeTopology.chain(p), sizes, scale)
    return jitter(pot, int(rng.integers(2**31)) if seed_jitter is None else seed_jitter, 1e-3)


def random_tree(rng, p_max=7, y_max=3, scale=1.0):
    p = int(rng.integers(1, p_max + 1))
    sizes = tuple(int(s) for s in rng.integers(1, y_max + 1, p))
    pot = random_potentials(rng, random_tree_topology(rng, p), sizes, scale)
    return jitter(pot, int(rng.integers(2**31)), 1e-3)


@pytest.fixture
def reference_pair():
    """Two-node chain used in several hand-checked examples."""
    return PotentialTable.chain([[1.0, 0.0], [0.0, 2.0]], [[[0.0, 0.0], [0.0, 0.5]]])
