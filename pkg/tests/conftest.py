import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from harmonic_delaunay.geometry import build_delaunay  # noqa: E402
from harmonic_delaunay.pointprocess import PointSet, sample_poisson  # noqa: E402


@lru_cache(maxsize=None)
def poisson_graph(n_points: int, seed: int):
    """Poisson torus with ``n_points`` expected points at intensity 1."""
    return build_delaunay(sample_poisson(2, float(np.sqrt(n_points)), 1.0, seed))


@lru_cache(maxsize=None)
def grid_points(side: int = 10, jitter: float = 0.0, seed: int = 0):
    pts = np.array([(i, j) for i in range(side) for j in range(side)], dtype=float)
    if jitter:
        rng = np.random.default_rng(seed)
        pts = np.mod(pts + rng.uniform(-jitter, jitter, pts.shape), side)
    return pts


@lru_cache(maxsize=None)
def grid_graph(side: int = 10, jitter: float = 0.0, seed: int = 0):
    return build_delaunay(PointSet(2, float(side), grid_points(side, jitter, seed)))


CIRCLE4 = np.array([[0.0], [0.5], [1.5], [3.0]])


@lru_cache(maxsize=None)
def circle4_graph():
    return build_delaunay(PointSet(1, 4.0, CIRCLE4))


@pytest.fixture(scope="session")
def g50():
    return poisson_graph(50, 5)


@pytest.fixture(scope="session")
def g500():
    return poisson_graph(500, 2)


@pytest.fixture(scope="session")
def g1000():
    return poisson_graph(1000, 7)


@pytest.fixture(scope="session")
def grid():
    return grid_graph()


@pytest.fixture(scope="session")
def circle4():
    return circle4_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
