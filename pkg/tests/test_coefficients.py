import numpy as np
import pytest

from concavlab.coefficients import TEMPLATES, CoefficientSet, Expression, parse_expression
from concavlab.errors import ConfigError, EllipticityViolation
from concavlab.geometry import Disk


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "lambda: 1", "abs(x)", "z + 1",
                                 "sin(x, y)", "[1]"])
def test_grammar_rejects_unsafe_input(bad):
    with pytest.raises(ConfigError):
        parse_expression(bad)


def test_expression_values_and_gradient(rng):
    e = Expression("1 + eps*sin(2*x + y)", 0.3)
    pts = rng.uniform(-1, 1, size=(50, 2))
    arg = 2 * pts[:, 0] + pts[:, 1]
    assert np.allclose(e(pts), 1 + 0.3 * np.sin(arg))
    assert np.allclose(e.grad(pts), 0.3 * np.cos(arg)[:, None] * [2, 1])
    assert Expression("2").grad(pts).shape == (50, 2)


def test_eps_meas_closed_form():
    c = CoefficientSet.template("source-wave", eps=0.1)
    assert c.eps_meas(Disk()) == pytest.approx(0.1 * np.sqrt(5), rel=1e-6)
    assert CoefficientSet.identity().eps_meas(Disk()) == 0.0


def test_all_templates_elliptic_for_small_eps(rng):
    pts = rng.uniform(-0.7, 0.7, size=(200, 2))
    for name in TEMPLATES:
        CoefficientSet.template(name, eps=0.2).check(pts)


def test_ellipticity_violation():
    c = CoefficientSet.from_strings("1", [["1", "0"], ["0", "0.1"]])
    with pytest.raises(EllipticityViolation):
        c.check(np.zeros((1, 2)))


def test_asymmetric_alpha_rejected():
    with pytest.raises(ConfigError):
        CoefficientSet.from_strings("1", [["1", "x"], ["y", "1"]])


def test_grad_alpha_layout(rng):
    c = CoefficientSet.template("rotated-wave", eps=0.2)
    pts = rng.uniform(-1, 1, size=(5, 2))
    ga = c.grad_alpha(pts)
    assert ga.shape == (5, 2, 2, 2)
    assert np.allclose(ga[:, 0, 1], ga[:, 1, 0])
    assert np.allclose(ga[:, 0, 0, 0], 0.2 * np.cos(pts[:, 0]))
