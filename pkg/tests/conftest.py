import numpy as np
import pytest

from prcut.core.graph import SparseSimilarity


@pytest.fixture
def path3():
    """Unit-weight path 0 - 1 - 2."""
    return SparseSimilarity.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture
def triangle():
    return SparseSimilarity.from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])


@pytest.fixture
def two_cliques():
    """Two disjoint K4 on vertices 0..3 and 4..7."""
    edges = [(i, j, 1.0) for block in (range(0, 4), range(4, 8)) for i in block for j in block if i < j]
    return SparseSimilarity.from_edges(8, edges)


@pytest.fixture
def cycle6():
    return SparseSimilarity.from_edges(6, [(i, (i + 1) % 6, 1.0) for i in range(6)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
