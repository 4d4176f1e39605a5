import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from amalgam_lab.grid_core import Grid, GridFunction  # noqa: E402
from amalgam_lab.intrinsic_sq import ConeQuadrature, build_dictionary  # noqa: E402

settings.register_profile(
    "lab", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def bump_values(grid: Grid, center=0.0, scale=1.0):
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    rad2 = sum((m - center) ** 2 for m in mesh) / scale**2
    return np.clip(1.0 - rad2, 0.0, None) ** 2


@pytest.fixture(scope="session")
def grid1():
    return Grid.centered(1, 256, 2.0)


@pytest.fixture(scope="session")
def bump1(grid1):
    return GridFunction(grid1, bump_values(grid1), name="bump")


@pytest.fixture(scope="session")
def dict1():
    return build_dictionary(1.0, 8, 0)


@pytest.fixture(scope="session")
def quad1(grid1):
    return ConeQuadrature(2 * grid1.h, 1.0, 16, lam=4.0, J=3)
