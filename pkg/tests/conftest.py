from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd.surface import Ellipsoid, Sphere, Torus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sphere():
    return Sphere(1.0, nu=16, nv=32)


@pytest.fixture(scope="session")
def torus():
    return Torus(2.0, 0.5, nu=32, nv=16)


@pytest.fixture(scope="session")
def ellipsoid():
    return Ellipsoid(1.0, 0.8, 0.6, nu=16, nv=32)


@pytest.fixture(scope="session", params=["sphere", "torus", "ellipsoid"])
def surface(request, sphere, torus, ellipsoid):
    return {"sphere": sphere, "torus": torus, "ellipsoid": ellipsoid}[request.param]


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: one test per acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
