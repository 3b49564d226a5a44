import math

import numpy as np
import pytest

from concavlab.errors import PointOutsideDomain
from concavlab.geometry import (Disk, Ellipse, Square, Superellipse, boundary_distance,
                                domain_from_config, domain_to_config, inner_parallel)

SHAPES = [Disk(0.1, -0.2, 1.0), Ellipse(0.0, 0.0, 2.0, 0.5), Superellipse(0.0, 0.0, 1.0, 0.7, 4.0),
          Square(0.0, 0.0, math.pi)]


def test_disk_distance_closed_form(rng):
    d = Disk(0.0, 0.0, 2.0)
    pts = rng.uniform(-1.4, 1.4, size=(200, 2))
    pts = pts[d.contains(pts)]
    assert np.allclose(d.boundary_distance(pts), 2.0 - np.hypot(*pts.T), atol=1e-10)


def test_ellipse_distance_matches_brute_force(rng):
    e = Ellipse(0.0, 0.0, 2.0, 0.5)
    t = np.linspace(0, 2 * np.pi, 200_000, endpoint=False)
    curve = e.boundary_point(t)
    pts = rng.uniform([-1.8, -0.4], [1.8, 0.4], size=(50, 2))
    pts = pts[e.contains(pts)]
    brute = np.sqrt(((pts[:, None] - curve[None]) ** 2).sum(-1)).min(1)
    assert np.allclose(e.boundary_distance(pts), brute, atol=1e-6)


@pytest.mark.parametrize("dom", SHAPES, ids=lambda d: type(d).__name__)
def test_boundary_points_have_unit_gauge(dom):
    b = dom.boundary_samples(256)
    assert np.allclose(dom.gauge(b), 1.0, atol=1e-9)


@pytest.mark.parametrize("dom", SHAPES, ids=lambda d: type(d).__name__)
def test_ray_exit_lands_on_boundary(dom, rng):
    c = dom.center
    d = rng.normal(size=(20, 2))
    d = 3 * dom.diameter * d / np.linalg.norm(d, axis=1, keepdims=True)
    t = dom.ray_exit(np.broadcast_to(c, d.shape), d)
    assert np.allclose(dom.gauge(c + t[:, None] * d), 1.0, atol=1e-9)


def test_outside_point_rejected():
    with pytest.raises(PointOutsideDomain):
        boundary_distance(Disk(), np.array([2.0, 0.0]))


def test_inner_parallel_disk_is_smaller_disk(rng):
    ips = inner_parallel(Disk(0.0, 0.0, 1.0), 0.25)
    pts = rng.uniform(-1, 1, size=(500, 2))
    r = np.hypot(*pts.T)
    inside = np.asarray(ips.contains(pts))
    clear = np.abs(r - 0.75) > 1e-6
    assert np.array_equal(inside[clear], (r < 0.75)[clear])
    assert inner_parallel(Disk(), 1.5).is_empty


def test_square_is_not_strongly_convex():
    assert not Square(0, 0, 1).strongly_convex
    assert Disk().strongly_convex


@pytest.mark.parametrize("dom", SHAPES, ids=lambda d: type(d).__name__)
def test_config_roundtrip(dom):
    assert domain_from_config(domain_to_config(dom)) == dom


def test_inradius_and_diameter():
    e = Ellipse(0.0, 0.0, 2.0, 0.5)
    assert e.inradius == pytest.approx(0.5)
    assert e.diameter == pytest.approx(4.0)
    assert Square(0, 0, 2).diameter == pytest.approx(2 * math.sqrt(2))
