import numpy as np
import pytest

from fastice.forcing import ForcingInputs
from fastice.grid import make_mesh
from fastice.momentum import MomentumProblem
from fastice.params import Params


def random_problem(seed=0, n=8, length=64e3, params=None, speed=0.1, **toggles):
    """Random 8x8 momentum problem with some grounded cells and zero boundary velocity."""
    rng = np.random.default_rng(seed)
    params = params or Params(h_crit=2.5)
    mesh = make_mesh(n, n, length)
    h = rng.uniform(0.5, 3.5, mesh.cell_shape)
    A = rng.uniform(0.5, 1.0, mesh.cell_shape)
    v_prev = speed * rng.standard_normal((*mesh.node_shape, 2))
    v_prev[mesh.boundary_mask()] = 0.0
    frc = ForcingInputs(**{"wind": (12.0, -5.0), "ocean_velocity": (0.05, 0.02), **toggles})
    problem = MomentumProblem(mesh, v_prev, h, A, frc, 1800.0, params)
    v = v_prev + speed * rng.standard_normal(v_prev.shape)
    v[mesh.boundary_mask()] = 0.0
    return problem, v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria: number -> list of (part, passed, detail)
CRITERIA: dict[int, list] = {}


def record_criterion(number: int, part: str, passed: bool, detail: str = ""):
    CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{name} {'ok' if ok else 'FAILED'} ({info})" for name, ok, info in parts)
        terminalreporter.write_line(f"criterion {number}: {status}: {detail}")
