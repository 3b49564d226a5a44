"""Bounded convex planar domains and their inner parallel sets.

Every shape is described through its gauge (Minkowski functional) about a
center point: a point is in the open domain iff ``gauge(x) < 1``.  Ray
casting, containment and radial projection all go through the gauge, so a
new shape only needs a gauge, a bounding box and a boundary parameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PointOutsideDomain

_BOUNDARY_SAMPLES = 1024
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x


class ConvexDomain:
    """Base class for the shipped convex shapes.

    Subclasses are frozen dataclasses and therefore hashable and safe to share
    between threads.
    """

    strongly_convex = True

    # -- shape-specific hooks -------------------------------------------------
    @property
    def center(self) -> np.ndarray:
        raise NotImplementedError

    def gauge(self, x):
        raise NotImplementedError

    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def boundary_point(self, t):
        """Boundary parameterization, ``t`` in ``[0, 2*pi)``."""
        raise NotImplementedError

    @property
    def inradius(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    # -- generic machinery ----------------------------------------------------
    def contains(self, x):
        x = _as_points(x)
        return self.gauge(x) < 1.0

    def contains_closed(self, x, tol=1e-12):
        return self.gauge(_as_points(x)) <= 1.0 + tol

    def project(self, x):
        """Radial retraction onto the closed domain (identity inside)."""
        x = _as_points(x)
        g = np.asarray(self.gauge(x))
        c = self.center
        scale = np.where(g > 1.0, 1.0 / np.maximum(g, 1e-300), 1.0)
        return c + (x - c) * scale[..., None]

    def boundary_distance(self, x):
        x = _as_points(x)
        if not np.all(self.contains_closed(x)):
            raise PointOutsideDomain(f"point(s) outside {self!r}")
        return np.maximum(self._distance(x), 0.0)

    def _distance(self, x):
        return _curve_distance(self, x)

    def ray_exit(self, x, d, iters=64):
        """Fraction ``t`` in ``(0, 1]`` where ``x + t*d`` meets the boundary.

        ``x`` must be inside and ``x + d`` outside (or on) the boundary.
        Vectorized bisection on the gauge.
        """
        x = _as_points(x)
        d = _as_points(d)
        lo = np.zeros(x.shape[:-1])
        hi = np.ones(x.shape[:-1])
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            inside = self.gauge(x + mid[..., None] * d) < 1.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return 0.5 * (lo + hi)

    def boundary_samples(self, n=_BOUNDARY_SAMPLES):
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return self.boundary_point(t)


@dataclass(frozen=True)
class Disk(ConvexDomain):
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    def gauge(self, x):
        x = _as_points(x)
        return np.hypot(x[..., 0] - self.cx, x[..., 1] - self.cy) / self.radius

    def bbox(self):
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    def boundary_point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([self.cx + self.radius * np.cos(t),
                         self.cy + self.radius * np.sin(t)], axis=-1)

    def _distance(self, x):
        return self.radius * (1.0 - self.gauge(x))

    @property
    def inradius(self):
        return self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class Ellipse(ConvexDomain):
    cx: float = 0.0
    cy: float = 0.0
    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    def gauge(self, x):
        x = _as_points(x)
        return np.hypot((x[..., 0] - self.cx) / self.a, (x[..., 1] - self.cy) / self.b)

    def bbox(self):
        return (self.cx - self.a, self.cx + self.a, self.cy - self.b, self.cy + self.b)

    def boundary_point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([self.cx + self.a * np.cos(t), self.cy + self.b * np.sin(t)], axis=-1)

    @property
    def inradius(self):
        return min(self.a, self.b)

    @property
    def diameter(self):
        return 2.0 * max(self.a, self.b)


@dataclass(frozen=True)
class Superellipse(ConvexDomain):
    """``|x/a|^p + |y/b|^p < 1`` with an even exponent ``p >= 2``."""

    cx: float = 0.0
    cy: float = 0.0
    a: float = 1.0
    b: float = 1.0
    p: int = 4

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")
        if int(self.p) != self.p or self.p < 2 or int(self.p) % 2:
            raise ValueError("superellipse exponent must be an even integer >= 2")

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    def gauge(self, x):
        x = _as_points(x)
        p = float(self.p)
        u = np.abs((x[..., 0] - self.cx) / self.a)
        v = np.abs((x[..., 1] - self.cy) / self.b)
        m = np.maximum(u, v)
        safe = np.where(m > 0, m, 1.0)
        return np.where(m > 0, safe * ((u / safe) ** p + (v / safe) ** p) ** (1.0 / p), 0.0)

    def bbox(self):
        return (self.cx - self.a, self.cx + self.a, self.cy - self.b, self.cy + self.b)

    def boundary_point(self, t):
        t = np.asarray(t, dtype=float)
        e = 2.0 / self.p
        c, s = np.cos(t), np.sin(t)
        return np.stack([self.cx + self.a * np.sign(c) * np.abs(c) ** e,
                         self.cy + self.b * np.sign(s) * np.abs(s) ** e], axis=-1)

    @property
    def inradius(self):
        return min(self.a, self.b)

    @property
    def diameter(self):
        # centrally symmetric: diameter is twice the largest center distance
        def radius(t):
            q = self.boundary_point(t) - self.center
            return np.hypot(q[..., 0], q[..., 1])

        t = np.linspace(0.0, 2.0 * np.pi, 4 * _BOUNDARY_SAMPLES, endpoint=False)
        k = int(np.argmax(radius(t)))
        step = t[1] - t[0]
        lo, hi = t[k] - step, t[k] + step
        best = _golden_max(radius, np.array([lo]), np.array([hi]))[0]
        return 2.0 * float(radius(np.array([best]))[0])


@dataclass(frozen=True)
class Square(ConvexDomain):
    x0: float = 0.0
    y0: float = 0.0
    side: float = 1.0

    strongly_convex = False

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("side must be positive")

    @property
    def center(self):
        return np.array([self.x0 + 0.5 * self.side, self.y0 + 0.5 * self.side])

    def gauge(self, x):
        x = _as_points(x)
        c = self.center
        return np.maximum(np.abs(x[..., 0] - c[0]), np.abs(x[..., 1] - c[1])) / (0.5 * self.side)

    def bbox(self):
        return (self.x0, self.x0 + self.side, self.y0, self.y0 + self.side)

    def boundary_point(self, t):
        # arclength-uniform walk around the perimeter
        t = np.mod(np.asarray(t, dtype=float), 2.0 * np.pi) / (2.0 * np.pi) * 4.0
        k = np.floor(t)
        r = (t - k) * self.side
        s = self.side
        x = np.select([k == 0, k == 1, k == 2], [r, s, s - r], 0.0)
        y = np.select([k == 0, k == 1, k == 2], [0.0, r, s], s - r)
        return np.stack([self.x0 + x, self.y0 + y], axis=-1)

    def _distance(self, x):
        s = self.side
        dx = np.minimum(x[..., 0] - self.x0, self.x0 + s - x[..., 0])
        dy = np.minimum(x[..., 1] - self.y0, self.y0 + s - x[..., 1])
        return np.minimum(dx, dy)

    @property
    def inradius(self):
        return 0.5 * self.side

    @property
    def diameter(self):
        return math.sqrt(2.0) * self.side


def _golden_max(fun, lo, hi, iters=80):
    """Vectorized golden-section maximization of ``fun`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - _GOLDEN * (b - a)
        d_new = a + _GOLDEN * (b - a)
        c, d = c_new, d_new
        fc, fd = fun(c), fun(d)
    return 0.5 * (a + b)


def _curve_distance(domain, x, chunk=4096):
    """Distance to the boundary curve: dense sampling then golden refinement."""
    flat = x.reshape(-1, 2)
    n = _BOUNDARY_SAMPLES
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    curve = domain.boundary_point(t)
    step = t[1] - t[0]
    out = np.empty(len(flat))
    for start in range(0, len(flat), chunk):
        pts = flat[start:start + chunk]
        d2 = ((pts[:, None, :] - curve[None, :, :]) ** 2).sum(axis=-1)
        k = np.argmin(d2, axis=1)

        def neg_dist(s, pts=pts):
            q = domain.boundary_point(s)
            return -np.hypot(q[:, 0] - pts[:, 0], q[:, 1] - pts[:, 1])

        best = _golden_max(neg_dist, t[k] - step, t[k] + step)
        out[start:start + chunk] = -neg_dist(best)
    return out.reshape(x.shape[:-1])


# -- module-level API -----------------------------------------------------------

def contains(domain: ConvexDomain, x) -> bool | np.ndarray:
    """True iff ``x`` lies in the open region."""
    return domain.contains(x)


def boundary_distance(domain: ConvexDomain, x):
    return domain.boundary_distance(x)


def diameter(domain) -> float:
    return domain.diameter


def segment_samples(x1, x3, m: int) -> np.ndarray:
    """``m`` uniformly spaced points on ``[x1, x3]``, endpoints included."""
    if m < 2:
        raise ValueError("need at least two samples")
    x1 = np.asarray(x1, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    t = np.linspace(0.0, 1.0, m)[:, None]
    pts = (1.0 - t) * x1 + t * x3
    pts[-1] = x3
    return pts


@dataclass(frozen=True)
class InnerParallelSet:
    """``{x in parent : d(x, boundary) > rho}``."""

    parent: ConvexDomain
    rho: float

    def contains(self, x):
        x = _as_points(x)
        inside = np.asarray(self.parent.contains(x))
        if self.rho == 0:
            return inside
        out = np.zeros(inside.shape, dtype=bool)
        if np.any(inside):
            out[inside] = self.parent.boundary_distance(x[inside]) > self.rho
        return out

    @property
    def is_empty(self) -> bool:
        return self.rho >= self.parent.inradius

    def exact(self) -> ConvexDomain | None:
        """Closed-form shape of the set, when one exists."""
        p, r = self.parent, self.rho
        if self.is_empty:
            return None
        if r == 0:
            return p
        if isinstance(p, Disk):
            return Disk(p.cx, p.cy, p.radius - r)
        if isinstance(p, Square):
            return Square(p.x0 + r, p.y0 + r, p.side - 2.0 * r)
        return None

    @property
    def diameter(self) -> float:
        if self.is_empty:
            return 0.0
        ex = self.exact()
        if ex is not None:
            return ex.diameter
        # offset curve, with the swallowtail parts (closer than rho) discarded
        n = 2 * _BOUNDARY_SAMPLES
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        dt = 1e-6
        tangent = self.parent.boundary_point(t + dt) - self.parent.boundary_point(t - dt)
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1)
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        pts = self.parent.boundary_point(t) - self.rho * normal
        keep = self.parent.contains(pts)
        pts = pts[keep]
        keep = self.parent.boundary_distance(pts) >= self.rho * (1.0 - 1e-6)
        pts = pts[keep]
        if len(pts) < 2:
            return 0.0
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
        return float(d.max())


def inner_parallel(domain: ConvexDomain, rho: float) -> InnerParallelSet:
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return InnerParallelSet(domain, float(rho))


def domain_from_config(cfg: dict) -> ConvexDomain:
    """Build a domain from ``{"shape": ..., "params": {...}}``."""
    shape = cfg.get("shape")
    params = dict(cfg.get("params", {}))
    center = params.pop("center", None)
    if center is not None:
        params["cx"], params["cy"] = center
    if shape == "disk":
        return Disk(**{k: float(v) for k, v in params.items()})
    if shape == "ellipse":
        return Ellipse(**{k: float(v) for k, v in params.items()})
    if shape == "superellipse":
        p = params.pop("p", 4)
        return Superellipse(p=int(p), **{k: float(v) for k, v in params.items()})
    if shape == "square":
        corner = params.pop("corner", None)
        if corner is not None:
            params["x0"], params["y0"] = corner
        return Square(**{k: float(v) for k, v in params.items()})
    raise ValueError(f"unknown shape {shape!r}")


def domain_to_config(domain: ConvexDomain) -> dict:
    if isinstance(domain, Disk):
        return {"shape": "disk", "params": {"center": [domain.cx, domain.cy], "radius": domain.radius}}
    if isinstance(domain, Ellipse):
        return {"shape": "ellipse", "params": {"center": [domain.cx, domain.cy], "a": domain.a, "b": domain.b}}
    if isinstance(domain, Superellipse):
        return {"shape": "superellipse",
                "params": {"center": [domain.cx, domain.cy], "a": domain.a, "b": domain.b, "p": domain.p}}
    if isinstance(domain, Square):
        return {"shape": "square", "params": {"corner": [domain.x0, domain.y0], "side": domain.side}}
    raise TypeError(type(domain))
