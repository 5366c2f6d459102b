import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_simplex(rng, n, d=5, floor=1e-4):
    """Interior simplex points (no component below `floor` after closure)."""
    x = rng.dirichlet(np.ones(d), size=n)
    x = np.maximum(x, floor)
    return x / x.sum(axis=1, keepdims=True)
