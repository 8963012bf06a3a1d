import numpy as np
import pytest

from chbiot import kernels
from chbiot.mesh import SimplicialMesh, build_unit_square_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_cell_mesh():
    return build_unit_square_mesh(0)


@pytest.fixture
def skewed_mesh():
    """Level-1 mesh (8 cells) with the centre vertex moved off the lattice."""
    m = build_unit_square_mesh(1)
    v = np.array(m.vertices)
    v[4] = (0.43, 0.58)
    return SimplicialMesh(v, m.cells, level=1)


@pytest.fixture(params=["numpy", "numba"] if kernels.HAVE_NUMBA else ["numpy"])
def kernel_backend(request):
    old = kernels.backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
