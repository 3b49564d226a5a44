import numpy as np
import pytest

from concavlab.envelope import concave_envelope, hyers_ulam_witness
from concavlab.errors import DegenerateHull
from concavlab.fields import Grid, ScalarField

from conftest import box_field
from oracles import lp_envelope


def test_matches_lp_oracle_small(rng):
    z = rng.normal(size=(9, 9))
    f = box_field(9, lambda p: z + np.sin(4 * p[..., 0]))
    env = concave_envelope(f).envelope
    ref = lp_envelope(f.grid.interior_points(), f.interior())
    assert np.max(np.abs(env.interior() - ref)) < 1e-8


def test_concave_input_is_fixed_point():
    f = box_field(17, lambda p: -(p[..., 0] - 0.3) ** 2 - 2 * (p[..., 1] - 0.6) ** 2)
    res = concave_envelope(f)
    assert res.distance < 1e-12


def test_flat_field_is_not_degenerate():
    f = box_field(9, lambda p: np.zeros(p.shape[:-1]))
    assert concave_envelope(f).distance == 0.0


def test_majorant_and_idempotent(rng):
    for _ in range(5):
        f = box_field(9, lambda p: rng.normal(size=p.shape[:-1]))
        e1 = concave_envelope(f).envelope
        e2 = concave_envelope(e1).envelope
        assert np.all(e1.interior() >= f.interior() - 1e-12)
        assert np.max(np.abs(e2.interior() - e1.interior())) < 1e-10


def test_one_dimensional_chord():
    g = Grid.line(0.0, 1.0, 33)
    f = ScalarField.from_function(g, lambda p: p[:, 0] ** 2)
    res = hyers_ulam_witness(f, 0.25)
    k = 16
    assert g.interior_points()[k, 0] == 0.5
    assert res.envelope.interior()[k] - f.interior()[k] == pytest.approx(0.25, abs=1e-15)
    assert res.distance == pytest.approx(0.25, abs=1e-15)
    assert res.ratio == pytest.approx(1.0) and res.consistent


def test_one_dimensional_needs_two_nodes():
    g = Grid.line(0.0, 1.0, 9)
    mask = np.zeros((1, 9), bool)
    mask[0, 4] = True
    f = ScalarField(g.with_mask(mask), np.ones((1, 9)))
    with pytest.raises(DegenerateHull):
        concave_envelope(f)


def test_witness_zero_delta_uses_tolerance():
    f = box_field(9, lambda p: -(p ** 2).sum(-1))
    res = hyers_ulam_witness(f, 0.0)
    assert res.consistent and np.isnan(res.ratio)
