import numpy as np
import pytest

from talkmesh.mesh import Mesh
from talkmesh.shapes import grid_mesh, hemisphere_cap


@pytest.fixture
def triangle():
    return Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


@pytest.fixture
def quad():
    return Mesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(scope="session")
def cap():
    mesh, _ = hemisphere_cap(6)
    return mesh


@pytest.fixture(scope="session")
def grid():
    return grid_mesh(6, 5, size=(2.0, 1.5))


def permute_mesh(mesh, perm):
    """Relabel vertex i as perm[i]."""
    inv = np.argsort(perm)
    return Mesh(mesh.vertices[inv], perm[mesh.faces])


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
