import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from wittenlab.discretize import Discretization, Grid
from wittenlab.geometry import RadialModel

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# Lines printed at the end of the run by the acceptance module.
ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def make_disc(kind: str, N: int = 400, **kw) -> Discretization:
    model = getattr(RadialModel, kind)(**kw)
    return Discretization(model, Grid(model, N))


@pytest.fixture
def sphere_disc():
    return make_disc("sphere", 400, n=2)


@pytest.fixture
def circle_disc():
    return make_disc("circle", 256)
