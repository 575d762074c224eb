import numpy as np
import pytest

from gridstrain.metrics import aggregate
from gridstrain.powerflow import solve_grid_flow
from gridstrain.profiles import proportional_profile
from gridstrain.setse import embed_grid
from gridstrain.tests.utils import builtin_grid

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ieee14():
    grid = builtin_grid("ieee14")
    return grid, solve_grid_flow(grid)


def test_higher_tolerance_strains_less(ieee14):
    grid, base_flow = ieee14
    tight = embed_grid(grid, proportional_profile(grid, base_flow, 1.2), base_flow)
    loose = embed_grid(grid, proportional_profile(grid, base_flow, 20), base_flow)
    assert aggregate(loose.strain) < aggregate(tight.strain)


def test_embedding_is_in_equilibrium(ieee14):
    grid, base_flow = ieee14
    embedding = embed_grid(grid, proportional_profile(grid, base_flow, 2), base_flow)
    dz = embedding.elevation[grid.from_index] - embedding.elevation[grid.to_index]
    strain = np.sqrt(1.0 + dz**2) - 1.0
    np.testing.assert_allclose(embedding.strain, strain, atol=1e-9)
    assert embedding.convergence["residual"] <= embedding.convergence["tolerance"]
    assert abs(float(np.sum(embedding.elevation))) < 1e-9
