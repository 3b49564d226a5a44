import numpy as np
import pytest

from concavlab.coefficients import CoefficientSet
from concavlab.errors import BetaOneRejected, ConfigError, NeedsTwoResolutions
from concavlab.geometry import Ellipse, Square
from concavlab.solver import (PHI_ONE, EigenPerturbed, Phi, Power, ProblemSpec, assemble_operator,
                              manufactured_convergence, solve)

CUBIC = "(1 - x**2 - y**2)*(2 - x)/8"


def test_torsion_closed_form(disk):
    u, rep = solve(ProblemSpec(disk, 1 / 32, CoefficientSet.identity(), Power(0.0)))
    pts = u.grid.interior_points()
    assert np.max(np.abs(u.interior() - (1 - (pts ** 2).sum(1)) / 4)) < 1e-10
    assert rep.boundary_scheme == "shortley-weller"


def test_operator_rows_annihilate_constants(disk):
    op = assemble_operator(ProblemSpec(disk, 1 / 16, CoefficientSet.template("rotated-wave", 0.2),
                                       Power(0.0)))
    ones = np.ones(op.n)
    g = np.ones(len(op.boundary_points))
    assert np.allclose(op.apply(ones, g), 0.0, atol=1e-9)


@pytest.mark.parametrize("template", ["isotropic", "diag-wave", "rotated-wave"])
def test_manufactured_second_order(template, disk):
    spec = ProblemSpec(disk, 1 / 16, CoefficientSet.template(template, 0.2), Power(0.5))
    rep = manufactured_convergence(spec, CUBIC, [1 / 16, 1 / 32])
    assert rep.ratios[0] >= 3.5


def test_newton_quadratic_tail(disk):
    _, rep = solve(ProblemSpec(disk, 1 / 32, CoefficientSet.identity(), Power(0.5)))
    hist = rep.residual_history
    assert rep.residual < 1e-10 and rep.iterations <= 10
    assert hist[-1] < hist[-2] ** 1.5


def test_eigen_perturbed_positive():
    u, rep = solve(ProblemSpec(Square(0, 0, np.pi), np.pi / 32, CoefficientSet.identity(),
                               EigenPerturbed(PHI_ONE, 0.1)))
    assert u.interior().min() > 0


def test_beta_one_and_range():
    with pytest.raises(BetaOneRejected):
        Power(1.0)
    with pytest.raises(ConfigError):
        Power(1.5)
    with pytest.raises(ConfigError):
        EigenPerturbed(PHI_ONE, 0.0)
    with pytest.raises(ConfigError):
        Phi("bogus")


def test_needs_two_resolutions(disk):
    spec = ProblemSpec(disk, 1 / 16, CoefficientSet.identity(), Power(0.0))
    with pytest.raises(NeedsTwoResolutions):
        manufactured_convergence(spec, CUBIC, [1 / 16])


def test_solution_symmetric_on_ellipse():
    u, _ = solve(ProblemSpec(Ellipse(0, 0, 1.5, 1.0), 1 / 16, CoefficientSet.identity(), Power(0.5)))
    v = u.values
    m = u.grid.mask
    assert np.array_equal(m, m[::-1, ::-1])
    assert np.allclose(v[m], v[::-1, ::-1][m], atol=1e-10)
