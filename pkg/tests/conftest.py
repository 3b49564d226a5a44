import numpy as np
import pytest

from concavlab.fields import Grid, ScalarField
from concavlab.geometry import Disk


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disk():
    return Disk(0.0, 0.0, 1.0)


def field_on(domain, h, fun, trace=0.0, dirichlet=False):
    g = Grid.covering(domain, h)
    f = ScalarField.from_function(g, fun, trace)
    if dirichlet:
        f = ScalarField(g, f.values, trace, dirichlet=True)
    return f


def box_field(n, fun):
    """Field on the full n x n node box of the unit square (no domain)."""
    xs = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(xs, xs)
    mask = np.ones((n, n), dtype=bool)
    g = Grid(0.0, 1.0, 0.0, 1.0, n, n, mask, None)
    return ScalarField(g, fun(np.stack([X, Y], -1)))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
