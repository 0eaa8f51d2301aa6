import numpy as np
import pytest

from fvrom.mesh import ChannelGeometry, generate_channel_cylinder_mesh, \
    generate_channel_mesh


@pytest.fixture(scope="session")
def channel4():
    """2x2-cell unit channel: the trivial mesh from the examples."""
    return generate_channel_mesh(1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def channel_8x4():
    return generate_channel_mesh(1.0, 0.5, 0.125)


@pytest.fixture(scope="session")
def small_cylinder_mesh():
    """Channel-with-cylinder mesh with < 50 cells (operator oracle size)."""
    geom = ChannelGeometry(1.0, 0.5, (0.3, 0.25), 0.12)
    mesh = generate_channel_cylinder_mesh(geom, 0.1)
    assert mesh.n_cells <= 50
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
