import math

import numpy as np
import pytest

from thetanls.grid_fem import assemble_mass, assemble_stiffness, build_grid, interpolate
from thetanls.noise import make_noise_model

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_grid():
    grid = build_grid(-1.0, 1.0, 512)
    return grid, assemble_mass(grid), assemble_stiffness(grid)


@pytest.fixture(scope="session")
def psi0(ref_grid):
    return interpolate(lambda x: np.sin(np.pi * x) ** 2, ref_grid[0])


@pytest.fixture(scope="session")
def ref_noise(ref_grid):
    return make_noise_model(8, math.sqrt(2.0), ref_grid[0])


@pytest.fixture
def record_criterion(capsys):
    """Print and remember a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n[acceptance] {line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
