"""Shared fixtures: small meshes, a seeded generator and an isolated user config directory."""

import numpy as np
import pytest

from discrete_de_rham.config import DEFAULT_SEED
from discrete_de_rham.generators import annulus_2d, cartesian_grid, hexahedron, simplicial_grid

MESH_BUILDERS = {
    "square": lambda: cartesian_grid(2, (2, 2)),
    "triangles": lambda: simplicial_grid(2, (1, 1)),
    "hexahedron": hexahedron,
    "annulus": lambda: annulus_2d(4, 2),
}


@pytest.fixture
def rng():
    return np.random.default_rng(DEFAULT_SEED)


@pytest.fixture
def square():
    return MESH_BUILDERS["square"]()


@pytest.fixture
def triangles():
    return MESH_BUILDERS["triangles"]()


@pytest.fixture
def cube():
    return MESH_BUILDERS["hexahedron"]()


@pytest.fixture
def annulus():
    return MESH_BUILDERS["annulus"]()


@pytest.fixture(params=["square", "triangles", "hexahedron"])
def small_mesh(request):
    """Meshes of trivial topology in two and three dimensions."""
    return MESH_BUILDERS[request.param]()


@pytest.fixture(autouse=True)
def isolated_config_dir(tmp_path, monkeypatch):
    """Keep tests away from a real user ``run.json``."""
    directory = tmp_path / "user-config"
    directory.mkdir()
    monkeypatch.setattr("discrete_de_rham.run_config.config_dir", lambda: directory)
    return directory
