import numpy as np
import pytest

from incstab import benchmarks
from incstab.dynamics import ExprSurface, VectorField
from incstab.expr import VectorExpr

VARS = ("x1", "x2")


def make_field(*component_texts):
    return VectorField(VectorExpr.parse_components(list(component_texts), VARS))


def make_surface(text):
    return ExprSurface.parse(text, VARS)


@pytest.fixture(scope="session")
def ex1_cfg():
    return benchmarks.example_config("example1")


@pytest.fixture(scope="session")
def ex2_cfg():
    return benchmarks.example_config("example2")


@pytest.fixture(scope="session")
def planar_system(ex1_cfg):
    """dx1 = -4 x1, dx2 = x2^2 - 6 x2 with input column [1, 2]^T."""
    return ex1_cfg.system


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
