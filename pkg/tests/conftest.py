"""Shared fixtures: small meshes, their operators and the double-well."""
import numpy as np
import pytest

from relaxa.fem.assembly import assemble
from relaxa.fem.mesh import build_mesh
from relaxa.nonlinearity import doublewell
from relaxa.schema.mesh import Interval, Rectangle


@pytest.fixture
def interval_ops():
    return assemble(build_mesh(Interval(0.0, 1.0), 16))


@pytest.fixture
def tiny_ops():
    """At most 20 nodes, for dense oracles."""
    return assemble(build_mesh(Interval(0.0, 1.0), 10))


@pytest.fixture
def square_ops():
    return assemble(build_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 4))


@pytest.fixture
def dw():
    return doublewell(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
