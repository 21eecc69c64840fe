import numpy as np
import pytest

from vortexlab.fields import FieldConfiguration, Grid2, GridN
from vortexlab.radial import sample_vortex, solve_bogomolny


@pytest.fixture(scope="session")
def profile():
    return solve_bogomolny(r_max=40.0, tol=1e-8)


def pullback(profile, epsilon, tangential_half_width, tangential_spacing,
             normal_half_width, normal_spacing, tangential_dim=1):
    """The planar vortex extended constantly along the tangential axes."""
    normal = Grid2.from_spacing(normal_half_width, normal_spacing)
    grid = GridN.create(tangential_dim, tangential_half_width, tangential_spacing, normal)
    c2 = sample_vortex(profile, normal, epsilon=epsilon)
    u = np.broadcast_to(c2.u, grid.shape).copy()
    A = np.zeros((grid.ndim,) + grid.shape)
    A[tangential_dim:] = c2.A.reshape((2,) + (1,) * tangential_dim + normal.shape)
    return FieldConfiguration(u, A, epsilon, grid)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
