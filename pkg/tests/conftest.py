import numpy as np
import pytest

from urank import _kernels
from urank.core import DiscreteBipartite, m1


@pytest.fixture
def model_m1():
    return m1()


@pytest.fixture(params=sorted(_kernels.backends()))
def backend(request):
    """Every importable kernel implementation."""
    return _kernels.backends()[request.param]


def random_bipartite(rng, size=None, d=1):
    n_atoms = int(size or rng.integers(2, 9))
    pts = rng.permutation(n_atoms * 3)[:n_atoms].reshape(n_atoms, 1).astype(float) if d == 1 else rng.normal(size=(n_atoms, d))
    probs = rng.dirichlet(np.ones(n_atoms))
    probs[-1] = 1.0 - probs[:-1].sum()
    if probs[-1] < 0:
        probs = np.full(n_atoms, 1.0 / n_atoms)
    eta = np.round(rng.uniform(0, 1, n_atoms), 3)
    return DiscreteBipartite(pts, probs, eta)
