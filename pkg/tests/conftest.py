import numpy as np
import pytest

from dysonrg import (
    GridSpec,
    ModelParams,
    find_non_gaussian_fixed_point,
    gaussian_fixed_point,
)


@pytest.fixture(scope="session")
def default_grid():
    return GridSpec()


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(L=10.0, N=512)


@pytest.fixture(scope="session")
def p125():
    return ModelParams(1.25)


@pytest.fixture(scope="session")
def p15():
    return ModelParams(1.5)


@pytest.fixture(scope="session")
def fp_gauss_125(p125, default_grid):
    return gaussian_fixed_point(p125, default_grid)


@pytest.fixture(scope="session")
def fp_non_gauss_002(default_grid):
    """Solved non-Gaussian fixed point at eps = 0.02 (shared; ~15 s)."""
    return find_non_gaussian_fixed_point(ModelParams(1.52), default_grid)


@pytest.fixture(scope="session")
def fp_non_gauss_005(default_grid):
    """Solved non-Gaussian fixed point at eps = 0.05 (continuation; ~40 s)."""
    return find_non_gaussian_fixed_point(ModelParams(1.55), default_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
