import numpy as np
import pytest

from csh_vortex.app.config import get_settings
from csh_vortex.app.services.lie_cartan import AlgebraSpec, load_cartan_data
from csh_vortex.app.services.minimizer import VortexProblem
from csh_vortex.app.services.torus_field import TorusGrid, VortexConfiguration


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("CSH_OUTPUT_DIR", str(tmp_path / "results"))
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def a1():
    return load_cartan_data(AlgebraSpec("A", 1))


@pytest.fixture(scope="session")
def a3():
    return load_cartan_data(AlgebraSpec("A", 3))


def smooth_field(rng, grid: TorusGrid, n: int, amplitude: float = 0.2, modes: int = 3) -> np.ndarray:
    """Random mean-zero trigonometric polynomial stack of shape (n, M1, M2)."""
    x, y = grid.coordinates
    out = np.zeros((n, grid.M1, grid.M2))
    for i in range(n):
        for p in range(-modes, modes + 1):
            for q in range(-modes, modes + 1):
                if p == 0 and q == 0:
                    continue
                phase = 2 * np.pi * (p * x / grid.L1 + q * y / grid.L2)
                out[i] += rng.normal() * np.cos(phase) + rng.normal() * np.sin(phase)
        out[i] *= amplitude / np.max(np.abs(out[i]))
    return out - grid.mean(out)[:, None, None]


def make_problem(data, grid, sites, lam_factor=None, lam=None, **kwargs) -> VortexProblem:
    vortices = VortexConfiguration.create(grid, sites)
    problem = VortexProblem(data=data, grid=grid, vortices=vortices, lam=lam or 1.0, **kwargs)
    if lam_factor is not None:
        problem = problem.with_lambda(lam_factor * problem.lambda0)
    return problem
