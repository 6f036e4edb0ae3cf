import numpy as np
import pytest
from hypothesis import settings

from ersolve.mesh import make_mesh, rectangle_mesh

settings.register_profile("ersolve", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ersolve")


@pytest.fixture
def square2():
    """Unit square, two triangles, bottom edge on the slip wall."""
    return make_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]],
                     [[0, 1], [1, 2], [2, 3], [3, 0]], ["S1", "S2", "S2", "S2"])


@pytest.fixture
def channel8():
    return rectangle_mesh(8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
