import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from terranav.gridmap import GridSpec, HeightMap, NormalMap
from terranav.traversability import ConstraintMap, TerrainMaps, TraversabilityMap

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def synthetic_maps(tau, gamma=None, resolution=0.1, height=None) -> TerrainMaps:
    """TerrainMaps with hand-set tau/gamma grids over flat ground."""
    tau = np.asarray(tau, dtype=float)
    spec = GridSpec(tau.shape[0], tau.shape[1], resolution)
    gamma = np.zeros(tau.shape, dtype=np.int8) if gamma is None else np.asarray(gamma, dtype=np.int8)
    z = np.zeros(tau.shape) if height is None else np.asarray(height, dtype=float)
    normals = np.zeros(tau.shape + (3,))
    normals[..., 2] = 1.0
    return TerrainMaps(HeightMap(spec, z), NormalMap(spec, normals), TraversabilityMap(spec, tau),
                       ConstraintMap(spec, gamma))


def wall_maps(gap_center=2.5, gap_width=0.8, wall_x=(2.4, 2.8), size=(50, 60)) -> TerrainMaps:
    """6 x 5 m map with a gamma = 1 wall across x, open only at one gap."""
    h, w = size
    spec = GridSpec(h, w, 0.1)
    X, Y = spec.cell_centers()
    wall = (X > wall_x[0]) & (X < wall_x[1]) & (np.abs(Y - gap_center) > gap_width / 2)
    tau = np.where(wall, 1.0, 0.0)
    return synthetic_maps(tau, wall.astype(np.int8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
