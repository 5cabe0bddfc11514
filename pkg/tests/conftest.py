import numpy as np
import pytest
from hypothesis import settings

from semibdb.equilibrium import ModelParams
from semibdb.grid import build_grid
from semibdb.stability import critical_alpha

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# unstable background used by the stability and growth experiments
UNSTABLE_LAM = (-3.0, 2.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def fd_params():
    return ModelParams(eta=1.0, eps0=1.0, U=0.0, gamma=0.0, d=1)


@pytest.fixture(scope="session")
def grid_p256():
    return build_grid(1, 8, 256)


@pytest.fixture(scope="session")
def unstable_params():
    return ModelParams(eta=1.0, eps0=1.0, U=40.0, gamma=1.0, d=1)


@pytest.fixture(scope="session")
def unstable_grid():
    return build_grid(1, 32, 256)


@pytest.fixture(scope="session")
def critical(unstable_params, unstable_grid):
    return critical_alpha(UNSTABLE_LAM, unstable_params, unstable_grid)


def random_trig(rng, grid, degree=3, scale=1.0):
    """Real trig polynomial on the phase grid with modes |k| <= degree per axis."""
    x = grid.x_mesh(0)
    p = grid.p_mesh(0)
    f = np.zeros(grid.phase_shape)
    for kx in range(degree + 1):
        for kp in range(-degree, degree + 1):
            if kx == 0 and kp < 0:
                continue
            a, b = rng.normal(size=2) * scale / (1 + kx + abs(kp))
            phase = 2 * np.pi * (kx * x / grid.Lx + kp * p)
            f += a * np.cos(phase) + b * np.sin(phase)
    return f


# acceptance lines, printed once at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, title: str, checks: dict[str, bool], details: str, elapsed: float, limit: float) -> bool:
    checks = dict(checks)
    checks[f"runtime {elapsed:.2f} s < {limit:g} s"] = elapsed < limit
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {details}; {elapsed:.2f} s"
    if failed:
        line += "  [failed: " + "; ".join(failed) + "]"
    ACCEPTANCE[number] = line
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
