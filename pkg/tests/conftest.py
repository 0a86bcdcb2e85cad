import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mrof import make_grid, parse_manifold

settings.register_profile(
    "mrof",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("mrof")

MANIFOLD_SPECS = ["euclidean:3", "sphere:2", "sphere:2:r=2", "hyperbolic:2", "spd:2", "spd:3"]
GRID_SPECS = ["interval:6", "circle:7", "rect2d:3x4", "rect2d:4x3:rho=sphere_patch"]


@pytest.fixture(params=MANIFOLD_SPECS)
def manifold(request):
    return parse_manifold(request.param)


@pytest.fixture(params=GRID_SPECS)
def grid(request):
    return make_grid(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def field_in_ball(M, grid, rng, radius=0.4, center=None):
    """Random field whose values lie in a small ball around ``center``."""
    c = M.random_point(rng, None, 0.5) if center is None else center
    return M.random_point(rng, c, radius, size=grid.n_nodes)


def directional_fd(M, model, u, v, h=1e-4):
    """Fourth-order central difference of t -> E(exp(u, t v)) at t = 0."""
    e = [model.evaluate(M.exp(u, t * v)).total for t in (-2 * h, -h, h, 2 * h)]
    return (e[0] - 8 * e[1] + 8 * e[2] - e[3]) / (12 * h)


def gradient_fd_error(M, grid, rng, params, radius=0.4):
    """Relative error between <grad, v> and the directional difference."""
    from mrof.energy import EnergyModel

    c = M.random_point(rng, None, 0.5)
    u = M.random_point(rng, c, radius, size=grid.n_nodes)
    f = M.random_point(rng, c, radius, size=grid.n_nodes)
    model = EnergyModel(M, grid, f, params)
    _, g = model.value_and_grad(u)
    v = M.random_tangent(rng, u)
    v /= np.max(M.norm(u, v))
    an = float(np.sum(M.inner(u, g, v)))
    fd = directional_fd(M, model, u, v)
    return abs(fd - an) / max(abs(an), abs(fd), 1e-300)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
