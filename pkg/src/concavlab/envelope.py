"""Least concave majorant of grid fields and the concave approximation witness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateHull
from .fields import ScalarField

# upper facets have an outward normal with a clearly positive vertical part
_NORMAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Envelope field plus its distance to the input.

    ``ratio`` is ``distance / delta`` (nan when ``delta`` is 0).
    """

    envelope: ScalarField = field(repr=False)
    distance: float
    delta: float = math.nan
    ratio: float = math.nan
    facets: int = 0
    consistent: bool | None = None
    audit_constant: float | None = None

    def to_json(self) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {"witness_distance": self.distance, "delta": num(self.delta),
                "ratio": num(self.ratio), "facets": self.facets,
                "consistent": self.consistent, "audit_constant": self.audit_constant}


def _upper_chain(x, y):
    """Indices of the upper hull of sorted 1D points (monotone chain)."""
    hull = []
    for k in range(x.size):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j unless it lies strictly above the chord i -> k
            cross = (x[j] - x[i]) * (y[k] - y[i]) - (y[j] - y[i]) * (x[k] - x[i])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return np.array(hull)


def _envelope_1d(x, f):
    order = np.argsort(x, kind="stable")
    xs, fs = x[order], f[order]
    if xs.size < 2 or xs[-1] == xs[0]:
        raise DegenerateHull("a 1D envelope needs at least two distinct nodes")
    idx = _upper_chain(xs, fs)
    env = np.empty_like(f)
    env[order] = np.interp(xs, xs[idx], fs[idx])
    return env, idx.size - 1


def _envelope_2d(pts, f, chunk=1024):
    span = float(np.ptp(f)) if f.size else 0.0
    # one point far below the cloud keeps Qhull full-dimensional for flat data
    # without touching the upper hull
    below = np.array([[*pts.mean(axis=0), f.min() - 1.0 - span]])
    cloud = np.vstack([np.column_stack([pts, f]), np.column_stack([below[:, :2], below[:, 2]])])
    try:
        hull = ConvexHull(cloud, qhull_options="Qt")
    except QhullError as exc:
        raise DegenerateHull(f"hull construction failed: {str(exc).splitlines()[0]}") from None
    eq = hull.equations
    n = f.size
    up = (eq[:, 2] > _NORMAL_TOL) & np.all(hull.simplices < n, axis=1)
    planes = eq[up]
    # z = -(nx x + ny y + off) / nz
    gx = -planes[:, 0] / planes[:, 2]
    gy = -planes[:, 1] / planes[:, 2]
    c0 = -planes[:, 3] / planes[:, 2]
    env = f.copy()
    on_hull = np.zeros(n + 1, dtype=bool)
    on_hull[np.unique(hull.simplices[up])] = True
    rest = np.nonzero(~on_hull[:n])[0]
    for s in range(0, rest.size, chunk):
        k = rest[s:s + chunk]
        vals = c0[None, :] + pts[k, 0, None] * gx[None, :] + pts[k, 1, None] * gy[None, :]
        env[k] = np.maximum(vals.min(axis=1), f[k])
    return env, int(up.sum())


def concave_envelope(f: ScalarField) -> EnvelopeResult:
    """Least concave majorant of the interior node values of ``f``.

    Computed from the upper convex hull of the graph points; nodes on the
    hull keep their value and the others take the lowest upper-facet plane.
    """
    g = f.grid
    vals = f.interior()
    if vals.size == 0:
        raise DegenerateHull("field has no interior nodes")
    if g.is_1d:
        env, facets = _envelope_1d(g.interior_points()[:, 0], vals)
    else:
        env, facets = _envelope_2d(g.interior_points(), vals)
    full = np.full((g.ny, g.nx), np.nan)
    full[g.mask] = env
    out = ScalarField(g, full, f.trace)
    return EnvelopeResult(out, float(np.max(env - vals)), facets=facets)


def hyers_ulam_witness(f: ScalarField, delta: float, audit_constant: float = 10.0,
                       tol: float | None = None) -> EnvelopeResult:
    """Envelope of ``f`` with the distance compared against ``audit_constant * delta``.

    ``delta`` is the measured concavity deficit of ``f``. ``tol`` bounds the
    distance accepted when ``delta`` is 0 (default ``10 h^2 |f|_inf``).
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    res = concave_envelope(f)
    if tol is None:
        tol = 10.0 * f.grid.h ** 2 * f.sup_norm
    if delta > 0:
        ratio = res.distance / delta
        ok = res.distance <= audit_constant * delta
    else:
        ratio = math.nan
        ok = res.distance <= tol
    return EnvelopeResult(res.envelope, res.distance, float(delta), ratio, res.facets,
                          bool(ok), audit_constant)
