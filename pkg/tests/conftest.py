"""Test configuration and fixtures."""

import numpy as np
import pytest

from vem.config import reset_settings
from vem.generators import gen_cube_grid, gen_perturbed_grid, gen_slit_cube_grid
from vem.mesh import PolyMesh


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Isolate every test from VEM_* variables and the cached settings."""
    for name in ("C_EPS", "SOLVER_TOL", "MAX_ITER", "THREADS", "LOG_LEVEL", "OUTPUT_DIR",
                 "QUAD_EXTRA", "EDGE_WEIGHT", "ORIGINAL_SCALING"):
        monkeypatch.delenv(f"VEM_{name}", raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture(scope="session")
def unit_cube() -> PolyMesh:
    """One cube cell: every entity is on the boundary."""
    return gen_cube_grid(1)


@pytest.fixture(scope="session")
def cube2() -> PolyMesh:
    """2x2x2 uniform cube grid."""
    return gen_cube_grid(2)


@pytest.fixture(scope="session")
def slit1() -> PolyMesh:
    """Single slit cell with aperture 0.1."""
    return gen_slit_cube_grid(1, 0.1)


@pytest.fixture(scope="session")
def slit2_thin() -> PolyMesh:
    """2x2x2 slit grid with aperture 0.01."""
    return gen_slit_cube_grid(2, 0.01)


@pytest.fixture(scope="session")
def perturbed2() -> PolyMesh:
    """2x2x2 grid with interior points moved by up to 0.1 h."""
    return gen_perturbed_grid(2, 0.1, 0)


@pytest.fixture(scope="session")
def test_meshes(unit_cube, cube2, slit1, perturbed2):
    """The mesh suite used by the acceptance-style property tests."""
    return {"cube1": unit_cube, "cube2": cube2, "slit1": slit1, "perturbed2": perturbed2}


@pytest.fixture
def rng():
    """Seeded generator for random test vectors."""
    return np.random.default_rng(1234)
