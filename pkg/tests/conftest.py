import numpy as np
import pytest

from planecell.descent import DescentParams
from planecell.grid import TorusSpec
from planecell.potential import PotentialSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def product_cos():
    return PotentialSpec("product_cos", (2, 3))


@pytest.fixture
def unit_torus():
    """d=2, N=1, m=32: enough for omega = k = (2, 3) series work."""
    return TorusSpec(2, 1, 32)


@pytest.fixture
def params():
    return DescentParams()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
