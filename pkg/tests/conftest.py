import numpy as np
import pytest

from littleparks import Disk, DomainSpec, ExperimentHarness, Rect, build_grid


@pytest.fixture(scope="session")
def disk_spec():
    return DomainSpec(outer=Disk(center=(0.0, 0.0), radius=2.0), inner=Disk(center=(0.0, 0.0), radius=1.0))


@pytest.fixture(scope="session")
def rect_spec():
    return DomainSpec(
        outer=Rect(center=(0.0, 0.0), width=4.0, height=3.0),
        inner=Rect(center=(0.1, 0.0), width=1.0, height=0.8),
    )


@pytest.fixture(scope="session")
def coarse_grid(disk_spec):
    """305-node disk fixture; fast enough for unit tests of every module."""
    return build_grid(disk_spec, 0.2)


@pytest.fixture(scope="session")
def medium_grid(disk_spec):
    """1245-node disk fixture for convergence comparisons."""
    return build_grid(disk_spec, 0.1)


@pytest.fixture(scope="session")
def coarse_harness(coarse_grid):
    return ExperimentHarness(coarse_grid)


@pytest.fixture(scope="session")
def medium_harness(medium_grid):
    return ExperimentHarness(medium_grid)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
