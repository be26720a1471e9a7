import numpy as np
import pytest

from gkdvlab.lab import prepare_lab
from gkdvlab.profile import find_critical_b, solve_profile


@pytest.fixture(scope="session")
def eig51():
    return find_critical_b(5.1)


@pytest.fixture(scope="session")
def sol51_bc(eig51):
    return solve_profile(5.1, eig51.b_c)


@pytest.fixture(scope="session")
def lab51(eig51):
    """Coarse (n=2048) prepared lab at p=5.1, shared across test modules."""
    return prepare_lab(5.1, n=2048, eig=eig51)


@pytest.fixture(scope="session")
def zero_eps51(lab51):
    from gkdvlab.numerics import GridFunction

    return GridFunction(lab51.grid, np.zeros(lab51.grid.n))
