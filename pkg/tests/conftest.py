"""Shared fixtures for the test suite."""
import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from lbspc.mesh import TriangleMesh
from lbspc.synthetic import icosphere


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def make_grid_strip(n=6, m=4, dx=1.0, dy=1.0):
    """Open rectangular grid mesh (has boundary)."""
    verts = []
    for i in range(n):
        for j in range(m):
            verts.append([i * dx, j * dy, 0.0])
    faces = []
    for i in range(n - 1):
        for j in range(m - 1):
            a = i * m + j
            b = (i + 1) * m + j
            faces.append([a, b, b + 1])
            faces.append([a, b + 1, a + 1])
    return TriangleMesh(np.asarray(verts, float), np.asarray(faces))


@pytest.fixture()
def strip():
    return make_grid_strip()
