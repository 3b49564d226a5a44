import numpy as np
import pytest

from concavlab.coefficients import CoefficientSet
from concavlab.concavity import max_deficit
from concavlab.errors import SDomainViolation
from concavlab.fields import transform_log, transform_power
from concavlab.geometry import Ellipse
from concavlab.solver import PHI_ONE, EigenPerturbed, Phi, Power, ProblemSpec, solve
from concavlab.verifier import (LogTransform, PowerTransform, audit_instance, audit_propositions,
                                audit_remark_noconc, c_const, epsilon_of_xi, sigma_nu_estimate)

from conftest import field_on

COEF = CoefficientSet.template("rotated-wave", 0.3)


@pytest.mark.parametrize("bfun", [PowerTransform(COEF, 0.5), PowerTransform(COEF, 0.0),
                                  LogTransform(COEF, PHI_ONE, 0.2),
                                  LogTransform(COEF, Phi("power", 0.5), 0.2),
                                  LogTransform(COEF, Phi("inverse-shift"), 0.2)],
                         ids=["pow-half", "pow-zero", "log-one", "log-power", "log-shift"])
def test_db_ds_matches_finite_difference(bfun, rng):
    x = rng.uniform(-0.5, 0.5, size=(6, 2))
    s = -rng.uniform(0.2, 1.0, size=6)
    xi = np.array([0.3, -0.7])
    d = 1e-6
    fd = (bfun.b(x, s + d, xi) - bfun.b(x, s - d, xi)) / (2 * d)
    assert np.allclose(bfun.db_ds(x, s, xi), fd, rtol=1e-6, atol=1e-8)


def test_power_b_needs_negative_s():
    with pytest.raises(SDomainViolation):
        sigma_nu_estimate(PowerTransform(COEF, 0.5), np.zeros(2), np.ones(2) * 0.1, -0.2, 0.1,
                          np.zeros(2))


def test_safeguard_lowers_estimates():
    sn = sigma_nu_estimate(PowerTransform(COEF, 0.5), np.array([-0.3, 0.1]), np.array([0.4, 0.2]),
                           -0.5, -0.2, np.array([0.5, 0.1]))
    assert 0 < sn.sigma < sn.sigma_raw and 0 < sn.nu < sn.nu_raw


def test_epsilon_of_xi_zero_for_constant_alpha():
    assert epsilon_of_xi(CoefficientSet.template("source-wave", 0.5), [0, 0], [0.5, 0.5]) == 0.0


def test_c_const_constant_hessian(disk):
    v = field_on(disk, 1 / 32, lambda p: -(p ** 2).sum(-1))
    assert c_const(v, np.array([0.1, 0.2]), np.array([-0.3, 0.0]), disk) == pytest.approx(16.0)


def test_c_const_torsion(disk):
    # v = -sqrt(u) with u = (1 - r^2)/4; the Hessian is bounded near the centre
    u = field_on(disk, 1 / 32, lambda p: (1 - (p ** 2).sum(-1)) / 4)
    v = transform_power(u, 0.0, lift=False)
    c = c_const(v, np.array([0.0, 0.0]), np.array([0.1, 0.0]), disk)
    assert c == pytest.approx(4 * 0.5 * 2.0, rel=0.05)


def test_audit_detects_non_solution(disk):
    # a perturbed torsion profile is not a solution; with constant coefficients the bound is 0
    u = field_on(disk, 1 / 32, lambda p: (1 - (p ** 2).sum(-1)) / 4 * (1 + 0.3 * np.sin(5 * p[..., 0])),
                 dirichlet=True)
    rep = max_deficit(transform_power(u, 0.0))
    a = audit_instance(u, CoefficientSet.identity(), Power(0.0), rep)
    assert a.status == "inequality-failure" and a.lhs > 0.05


def test_audit_passes_on_ellipse_instance():
    dom = Ellipse(0.0, 0.0, 2.0, 0.5)
    coef = CoefficientSet.from_strings("1", [["1", "0"], ["0", "1 + eps*sin(6*x)"]], 0.9, 0.05)
    h = 0.5 / 32
    u, _ = solve(ProblemSpec(dom, h, coef, Power(0.5)))
    rep = max_deficit(transform_power(u, 0.5))
    a = audit_instance(u, coef, Power(0.5), rep)
    assert rep.deficit > 1e-2
    assert a.status == "pass" and a.margin > 0
    assert a.sigma > 0 and a.nu > 0 and a.C_const > 0 and a.eps_xi > 0


def test_vacuous_below_floor(disk):
    u, _ = solve(ProblemSpec(disk, 1 / 32, CoefficientSet.identity(), EigenPerturbed(PHI_ONE, 0.1)))
    rep = max_deficit(transform_log(u), rho=5 / 32)
    assert audit_instance(u, CoefficientSet.identity(), EigenPerturbed(PHI_ONE, 0.1), rep).status == "vacuous"


def test_propositions_record(disk):
    coef = CoefficientSet.template("diag-wave", 0.1)
    u, _ = solve(ProblemSpec(disk, 1 / 16, coef, Power(0.5)))
    rep = max_deficit(transform_power(u, 0.5), lambda_grid=5)
    rec = audit_propositions(coef, Power(0.5), u, rep)
    assert rec["eps_meas"] == pytest.approx(coef.eps_meas(disk))
    assert rec["censored"] == (rec["deficit"] <= rec["floor"])
    assert rec["chain"]["nu_bound"] > 0


@pytest.mark.parametrize("g0", ["1 + x", "exp(x)", "2 + sin(x)"])
def test_remark_witness_found(g0):
    w = audit_remark_noconc(g0)
    assert w.found and w.hc < 0


def test_remark_no_witness_for_constant():
    assert not audit_remark_noconc("3").found
