import numpy as np
import pytest

from qcflow.boundary import make_boundary_map
from qcflow.extension import GoodExtension


@pytest.fixture(scope="session")
def f_linear():
    return make_boundary_map("linear", matrix=np.diag([2.0, 1.0]))


@pytest.fixture(scope="session")
def f_stretch():
    return make_boundary_map("radial_stretch", K=1.5)


@pytest.fixture(scope="session")
def f_shear():
    return make_boundary_map("shear", c=0.5)


@pytest.fixture(scope="session")
def ext_linear(f_linear):
    return GoodExtension(f_linear)


@pytest.fixture(scope="session")
def ext_stretch(f_stretch):
    return GoodExtension(f_stretch)


def box_points(rng, k, box=2.0, s_range=(0.25, 4.0)):
    """k points in a coordinate box, heights log-uniform."""
    x = rng.uniform(-box, box, size=(k, 2))
    s = np.exp(rng.uniform(np.log(s_range[0]), np.log(s_range[1]), size=k))
    return np.column_stack([x, s])
