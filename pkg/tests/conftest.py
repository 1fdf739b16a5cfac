import numpy as np
import pytest

from stokes_roughbc.boundary import cavity, lagrange_interpolant, linear, regularize
from stokes_roughbc.mesh import build_structured_unit_square
from stokes_roughbc.solver import solve
from stokes_roughbc.spaces import build_trace_space


@pytest.fixture(scope="session")
def mesh16():
    return build_structured_unit_square(16)


@pytest.fixture(scope="session")
def cavity_solutions(mesh16):
    """Mini and Hood-Taylor cavity solutions on the n=16 structured mesh."""
    gh = regularize(cavity(), build_trace_space(mesh16))
    return {m: solve(mesh16, m, gh) for m in ("mini", "hood-taylor")}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
