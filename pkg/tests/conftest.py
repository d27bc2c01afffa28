import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from app.models.problem import DOMAIN_SQUARE, DomainSpec  # noqa: E402
from app.services.mesh_service import (  # noqa: E402
    initial_mesh,
    marked_from_positions,
    new_interior_vertices,
    refine,
    uniform_refine,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the long acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long adaptive acceptance runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square2():
    return initial_mesh(DomainSpec(DOMAIN_SQUARE, 2))


@pytest.fixture
def square4():
    return initial_mesh(DomainSpec(DOMAIN_SQUARE, 4))


def random_refinement(mesh, rng, steps=3, fraction=0.3):
    """Repeated ``refine`` with a random share of ``N+`` marked each step."""
    for _ in range(steps):
        n_plus = len(new_interior_vertices(mesh))
        if n_plus == 0:
            mesh = uniform_refine(mesh)
            continue
        count = max(1, int(fraction * n_plus))
        positions = np.sort(rng.choice(n_plus, size=count, replace=False))
        mesh = refine(mesh, marked_from_positions(mesh, positions))
    return mesh


@pytest.fixture
def refine_randomly(rng):
    return lambda mesh, steps=3, fraction=0.3: random_refinement(mesh, rng, steps, fraction)


@pytest.fixture
def refine_seeded():
    """``random_refinement`` for tests that bring their own generator."""
    return random_refinement
