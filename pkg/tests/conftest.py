"""Shared coarse fixtures; each expensive object is built once per session."""
import logging

import numpy as np
import pytest

from helilab import assembly, geometry, solver

logging.getLogger("helilab").setLevel(logging.WARNING)

R6 = 6 * np.pi


@pytest.fixture(scope="session")
def gamma():
    return geometry.boundary_curve(R6, np.pi, 216)


@pytest.fixture(scope="session")
def handle_result(gamma):
    return solver.find_handle_disk(gamma)


@pytest.fixture(scope="session")
def D(handle_result):
    return handle_result.mesh


@pytest.fixture(scope="session")
def M(D):
    return assembly.assemble_M(D)


@pytest.fixture(scope="session")
def barrier():
    return geometry.catenoid_annulus(R6)


@pytest.fixture(scope="session")
def hug_result(gamma, barrier):
    return solver.find_hugging_disk(gamma, barrier)
