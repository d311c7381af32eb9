import numpy as np
import pytest

from safelqr.control.system import LinearSystem, random_stable_system

# Scalar plant a=0.5, b=1, q=r=1: P* solves p^2 - 0.25 p - 1 = 0.
SCALAR_P = (0.25 + np.sqrt(0.0625 + 4.0)) / 2.0
SCALAR_K = -0.5 * SCALAR_P / (1.0 + SCALAR_P)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scalar_system():
    return LinearSystem.from_arrays(A=[[0.5]], B=[[1.0]])


@pytest.fixture
def small_system():
    return random_stable_system(3, 2, 0.9, np.random.default_rng(7))


@pytest.fixture
def symmetric_system():
    return LinearSystem.from_arrays(A=[[0.5, 0.1], [0.1, 0.4]], B=np.eye(2))
