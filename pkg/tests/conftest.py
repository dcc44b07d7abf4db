import math

import numpy as np
import pytest

from edgeflow.geometry import Circle, EdgeConfig, FlatTorus, RoundSphere


@pytest.fixture(scope="session")
def cone6():
    """Circle link of the pi/6 cone: lambda_1 = 3."""
    return EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))


@pytest.fixture(scope="session")
def plane():
    """Unit-circle link: the exact cone is the Euclidean plane."""
    return EdgeConfig(1, Circle(2 * math.pi))


@pytest.fixture(scope="session")
def torus_cone():
    """Flat circle base times the pi/6 cone, m = 3."""
    return EdgeConfig(1, Circle.from_cone_angle(math.pi / 6), FlatTorus((1.0,)))


@pytest.fixture(scope="session")
def sphere_half():
    return EdgeConfig(2, RoundSphere(0.5, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
