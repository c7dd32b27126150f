import numpy as np
import pytest

from algebroid_mech.models import HeavyTopParams, heavy_top_system

GENERIC_GAMMA0 = np.array([0.3, 0.4, np.sqrt(0.75)])
GENERIC_OMEGA0 = np.array([0.7, -0.4, 1.3])


@pytest.fixture(scope="session")
def heavy_top():
    return heavy_top_system(HeavyTopParams())


@pytest.fixture(scope="session")
def heavy_top_path_short(heavy_top):
    """Generic heavy-top solution on [0, 5] with N = 2000 (shared by several modules)."""
    from algebroid_mech.dynamics import integrate

    return integrate(heavy_top, GENERIC_GAMMA0, GENERIC_OMEGA0, 0.0, 5.0, 2000)


# ---------------------------------------------------------------------------
# Acceptance verdict lines, printed in the terminal summary

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
