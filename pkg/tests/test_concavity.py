import numpy as np
import pytest

from concavlab.concavity import (UNDEFINED, Triple, boundary_audit, concavity_fn,
                                 harmonic_from_values, max_deficit, numerical_floor)
from concavlab.errors import EmptyMask
from concavlab.fields import Grid, ScalarField, transform_log
from concavlab.geometry import Square

from conftest import box_field, field_on


def test_affine_field_has_no_deficit(disk):
    f = field_on(disk, 1 / 16, lambda p: 2 + p[..., 0] - 0.5 * p[..., 1], trace=np.nan)
    f = ScalarField(f.grid, f.values, 0.0)
    assert max_deficit(f, rho=0.1).deficit < 1e-12


def test_convex_paraboloid_deficit_closed_form():
    # a convex f is furthest from concave for x1, x3 at opposite corners, lam = 1/2
    f = box_field(17, lambda p: (p[..., 0] - 0.5) ** 2 + (p[..., 1] - 0.5) ** 2)
    rep = max_deficit(f)
    # C_{-f} = lam (1-lam) |x3 - x1|^2, maximal 0.25 * 2 at the diagonal
    assert rep.deficit == pytest.approx(0.5, abs=1e-9)
    assert rep.lam == pytest.approx(0.5, abs=1e-6)


def test_concavity_fn_symmetry_and_scale(rng):
    f = box_field(17, lambda p: np.sin(3 * p[..., 0]) * np.cos(2 * p[..., 1]))
    g = ScalarField(f.grid, 2.5 * f.values)
    for _ in range(50):
        x1, x3 = rng.uniform(0, 1, (2, 2))
        t = Triple(x1, x3, rng.uniform())
        c = concavity_fn(f, t)
        assert concavity_fn(f, t.swapped()) == pytest.approx(c, abs=1e-12)
        assert concavity_fn(g, t) == pytest.approx(2.5 * c, abs=1e-12)


def test_harmonic_case_split():
    assert harmonic_from_values(1.0, 2.0, 3.0, 0.25) == pytest.approx(2.0 - 3.0 / (0.25 + 2.25))
    assert harmonic_from_values(0.0, 0.7, 0.0, 0.3) == 0.7
    assert harmonic_from_values(-1.0, 0.7, 0.5, 0.5) is UNDEFINED


def test_eigenfunction_dichotomy_coarse():
    sq = Square(0.0, 0.0, np.pi)
    h = np.pi / 32
    u = field_on(sq, h, lambda p: np.sin(p[..., 0]) * np.sin(p[..., 1]), dirichlet=True)
    assert max_deficit(u, lambda_grid=7).deficit > 0.05
    assert max_deficit(transform_log(u), lambda_grid=7, rho=5 * h).deficit < 1e-2


def test_stride_respects_pair_budget(disk):
    f = field_on(disk, 1 / 32, lambda p: -(p ** 2).sum(-1))
    rep = max_deficit(f, max_pairs=20_000, refine=False)
    assert rep.stride > 1
    full = max_deficit(f, refine=False)
    assert full.stride == 1 and full.pairs > rep.pairs


def test_rho_too_large_empty(disk):
    f = field_on(disk, 1 / 8, lambda p: np.ones(len(p)))
    with pytest.raises(EmptyMask):
        max_deficit(f, rho=2.0)


def test_floor_and_boundary_audit(disk):
    f = field_on(disk, 1 / 16, lambda p: (p ** 2).sum(-1))
    assert numerical_floor(f) == pytest.approx(10 / 256 * f.sup_norm)
    rep = max_deficit(f, lambda_grid=5)
    # the convex bowl is worst along a full diameter, which touches the boundary
    assert rep.deficit > 0.5
    assert boundary_audit(rep, f) in ("near-boundary-warning", "boundary-violation")


def test_one_dimensional_scan():
    g = Grid.line(-1.0, 1.0, 33)
    f = ScalarField.from_function(g, lambda p: np.abs(p[:, 0]))
    rep = max_deficit(f)
    assert rep.deficit == pytest.approx(1.0, abs=1e-6)
