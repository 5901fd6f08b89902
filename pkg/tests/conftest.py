import numpy as np
import pytest
from hypothesis import strategies as st

from ebpop.mixture import DiscretePrior


def random_prior(rng, A=5.0, k=None, zero_atom=False):
    k = k or int(rng.integers(1, 6))
    atoms = rng.uniform(0, A, size=k)
    if zero_atom:
        atoms[0] = 0.0
    w = rng.dirichlet(np.ones(k))
    return DiscretePrior(atoms, w, A)


@st.composite
def priors(draw, A=5.0, max_atoms=5):
    k = draw(st.integers(1, max_atoms))
    atoms = draw(st.lists(st.floats(0.0, A), min_size=k, max_size=k))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k))
    w = np.asarray(raw) / np.sum(raw)
    return DiscretePrior(atoms, w, A)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_point():
    return DiscretePrior([1.0, 3.0], [0.5, 0.5], 5.0)
