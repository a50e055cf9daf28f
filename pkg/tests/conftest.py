import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hemrelax.diagnostics import rate_study  # noqa: E402
from hemrelax.relax_solver import Grid1D, SolverConfig  # noqa: E402

SWEEP_EPS = (1e-2, 3.16e-3, 1e-3, 3.16e-4)


def production_sweep():
    """The gaussian sweep used by the convergence criteria (n=1600, t_end=0.1)."""
    cfg = SolverConfig(t_end=0.1, record_every=0.005)
    return rate_study("gaussian", SWEEP_EPS, Grid1D(1600), cfg, keep_fields=True)


@pytest.fixture(scope="session")
def sweep():
    return production_sweep()


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, title, ok, detail=""):
    """Print and keep one verdict line; the terminal summary repeats them all."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
