import numpy as np
import pytest

from minimax_gda import problems as prob


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def reference_instance():
    """A generated 4x4 instance with a strictly convex primal (the kind the
    quadratic experiments use), found by scanning seeds."""
    seed = 0
    while True:
        p = prob.sample_instance(4, 4, 100.0, 1.0, seed)
        if prob.derive_constants(p).mu_x > 0.5:
            return p
        seed += 1


@pytest.fixture
def small_instance():
    """A well-conditioned low-kappa instance for fast end-to-end runs."""
    seed = 0
    while True:
        p = prob.sample_instance(3, 3, 4.0, 1.0, seed)
        if prob.derive_constants(p).mu_x > 0.2:
            return p
        seed += 1
