import numpy as np
import pytest
from hypothesis import settings

from droplet_lab.geometry import ReducedSystem
from droplet_lab.potential import PotentialSpec

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def gw():
    return PotentialSpec.gaussian_well(1.0, 1.0)


@pytest.fixture(scope="session")
def sys21(gw):
    return ReducedSystem(gw, 2, 1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
