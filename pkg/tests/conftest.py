import warnings

import numpy as np
import pytest

from prhf.grid import Grid3
from prhf.scf import ScfConfig, solve
from prhf.state import Physics

ALPHA = 1.0 / 137.035999


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return Grid3(16, 8.0)


@pytest.fixture(scope="session")
def helium_small():
    """A converged N=2, Z=2 state on a coarse grid, shared by the fast tests."""
    grid = Grid3(24, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, report = solve(grid, Physics(ALPHA, 2.0, 2), ScfConfig(tol_residual=1e-7))
    assert report.converged
    return state, report


def random_field_values(rng, grid, smooth=True):
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if smooth:
        damp = np.exp(-0.5 * grid.p2 * (2.0 * grid.spacing) ** 2)
        v = np.fft.ifftn(damp * np.fft.fftn(v))
    return v
