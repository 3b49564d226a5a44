"""Measured audits of the convexity maximum principles at a deficit maximizer.

Given a solution ``u`` and the located maximizer ``(x1, x3, lam)`` of the
concavity function of the transformed field ``v`` (``v = -u**q`` or
``v = -log u``), every constant of the bounds is measured on the discrete
data: the frozen gradient ``xi = Dv(x1)``, the coefficient variation
``eps(xi)``, the Hessian constant ``C``, and the infima ``sigma`` and ``nu``
of ``db/ds`` and ``b`` over the segment.  The bound is then checked against
the measured ``C_v(x1, x3, lam)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .coefficients import CoefficientSet, Expression
from .concavity import (DeficitReport, concavity_fn, evaluate, harmonic_from_values,
                        numerical_floor)
from .errors import (BoundaryMaximum, HypothesisFailure, SDomainViolation,
                     UndefinedHarmonicConcavity)
from .fields import ScalarField, gradient_fields, hessian_at, interpolate_many, negate
from .geometry import ConvexDomain, segment_samples
from .solver import EigenPerturbed, Phi, Power

SLACK = 0.05
N_DIM = 2


# -- right-hand sides of the transformed equations ---------------------------------


def _quad(alpha, xi):
    return np.einsum("...ij,i,j->...", alpha, xi, xi)


@dataclass(frozen=True, eq=False)
class PowerTransform:
    """``b(x, s, xi) = f_xi(x) / (-s)`` for ``v = -u**((1 - beta)/2)``, defined for ``s < 0``.

    ``f_xi(x) = a(x)(1 - beta)/2 + (1 + beta)/(1 - beta) * xi^T alpha(x) xi``.
    """

    coefficients: CoefficientSet
    beta: float

    kind = "power"

    def f_xi(self, x, xi):
        c = self.coefficients
        return c.a(x) * (1 - self.beta) / 2 + (1 + self.beta) / (1 - self.beta) * _quad(c.alpha(x), xi)

    def check_s(self, s):
        if np.max(s) >= 0:
            raise SDomainViolation("power-transform b needs s < 0 (v vanishes on the boundary)")

    def b(self, x, s, xi):
        return self.f_xi(x, xi) / (-np.asarray(s))

    def db_ds(self, x, s, xi):
        return self.f_xi(x, xi) / np.asarray(s) ** 2


@dataclass(frozen=True, eq=False)
class LogTransform:
    """``b(x, s, xi) = xi^T alpha(x) xi + a(x) + eps_phi e^s phi(e^-s)`` for ``v = -log u``."""

    coefficients: CoefficientSet
    phi: Phi
    eps_phi: float

    kind = "log"

    def check_s(self, s):
        return None

    def b(self, x, s, xi):
        c = self.coefficients
        s = np.asarray(s)
        return _quad(c.alpha(x), xi) + c.a(x) + self.eps_phi * np.exp(s) * self.phi(np.exp(-s))

    def db_ds(self, x, s, xi):
        s = np.asarray(s)
        t = np.exp(-s)
        val = self.eps_phi * (np.exp(s) * self.phi(t) - self.phi.deriv(t))
        return np.broadcast_to(val, np.broadcast_shapes(np.shape(val), np.shape(x)[:-1])).copy()


def bfunction_for(coefficients: CoefficientSet, nonlinearity) -> PowerTransform | LogTransform:
    if isinstance(nonlinearity, Power):
        return PowerTransform(coefficients, nonlinearity.beta)
    if isinstance(nonlinearity, EigenPerturbed):
        return LogTransform(coefficients, nonlinearity.phi, nonlinearity.eps_phi)
    raise TypeError(f"unsupported nonlinearity {nonlinearity!r}")


# -- measured constants -------------------------------------------------------------


def epsilon_of_xi(coeffs: CoefficientSet, x1, x3, m: int = 257) -> float:
    """``max_ij sup_{x in [x1, x3]} |grad alpha^{ij}(x)|`` on ``m`` segment samples.

    The leading coefficients of the transformed equations are ``alpha^{ij}(x)``
    for every frozen gradient, so the value does not depend on ``xi``.
    """
    pts = segment_samples(x1, x3, m)
    g = coeffs.grad_alpha(pts)
    return float(np.max(np.linalg.norm(g, axis=-1)))


def _nearest_node(grid, x):
    i = int(round((x[0] - grid.xmin) / grid.h))
    j = int(round((x[1] - grid.ymin) / grid.h))
    return i, j


def c_const(v: ScalarField, x1, x3, domain: ConvexDomain) -> float:
    """``n^2 max_ij max_{k=1,3} |v_ij(x_k)| diam(domain)`` with Hessians at the nearest nodes."""
    hmax = 0.0
    for x in (x1, x3):
        i, j = _nearest_node(v.grid, x)
        hmax = max(hmax, float(np.max(np.abs(hessian_at(v, i, j)))))
    return N_DIM ** 2 * hmax * domain.diameter


@dataclass
class SigmaNu:
    sigma_raw: float
    nu_raw: float
    sigma: float
    nu: float


def sigma_nu_estimate(bfun, x1, x3, s1, s3, xi, m: int = 65) -> SigmaNu:
    """Infima of ``db/ds`` and ``b`` over segment x s-interval on an ``m x m`` sampling.

    The safeguarded values subtract the largest change between neighbouring
    samples (sample spacing times the largest sampled slope).
    """
    lo, hi = min(s1, s3), max(s1, s3)
    bfun.check_s(np.array([lo, hi]))
    xs = segment_samples(x1, x3, m)
    ss = np.linspace(lo, hi, m)
    X = np.broadcast_to(xs[:, None, :], (m, m, 2))
    S = np.broadcast_to(ss[None, :], (m, m))
    out = []
    for q in (bfun.db_ds(X, S, xi), bfun.b(X, S, xi)):
        q = np.asarray(q, dtype=float)
        step = max(float(np.max(np.abs(np.diff(q, axis=0)))) if m > 1 else 0.0,
                   float(np.max(np.abs(np.diff(q, axis=1)))) if m > 1 else 0.0)
        out.append((float(q.min()), float(q.min()) - step))
    (sr, ss_), (nr, ns) = out
    return SigmaNu(sr, nr, ss_, ns)


@dataclass
class TheoremAudit:
    theorem: str
    status: str
    x1: list
    x3: list
    lam: float
    xi: list = field(default_factory=list)
    s1: float = math.nan
    s3: float = math.nan
    sigma: float = math.nan
    sigma_raw: float = math.nan
    nu: float = math.nan
    nu_raw: float = math.nan
    eps_xi: float = math.nan
    C_const: float = math.nan
    jc: float = math.nan
    hc: float | None = math.nan
    lhs: float = math.nan
    rhs: float = math.nan
    rhs_raw: float = math.nan
    margin: float = math.nan
    margin_raw: float = math.nan
    branch: str = ""
    rho: float = math.nan
    floor: float = math.nan
    hypotheses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "vacuous")

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def _localize(report: DeficitReport, v: ScalarField) -> float:
    dom = v.grid.domain
    h = v.grid.h
    t = report.triple
    if not t.is_interior(dom):
        raise BoundaryMaximum("maximizing triple touches the boundary")
    d = dom.boundary_distance(np.array([t.x1, t.x3]))
    rho = min(float(d.min()), dom.inradius / 2)
    if rho < 3 * h:
        raise BoundaryMaximum(f"maximizer within {rho:.3g} < 3h of the boundary")
    return rho


def _measure(v: ScalarField, bfun, report: DeficitReport, m_seg: int, m_sn: int):
    t = report.triple
    x1, x3 = np.asarray(t.x1), np.asarray(t.x3)
    gx, gy = gradient_fields(v)
    xi = np.array([interpolate_many(gx, x1[None])[0], interpolate_many(gy, x1[None])[0]])
    s1, s3 = (float(s) for s in evaluate(v, np.array([x1, x3])))
    sn = sigma_nu_estimate(bfun, x1, x3, s1, s3, xi, m_sn)
    eps = epsilon_of_xi(bfun.coefficients, x1, x3, m_seg)
    C = c_const(v, x1, x3, v.grid.domain)
    lam = t.lam
    s2 = lam * s3 + (1 - lam) * s1
    pts = np.array([x1, t.x2, x3])
    b1, b2, b3 = (float(b) for b in bfun.b(pts, np.array([s1, s2, s3]), xi))
    jc = b2 - lam * b3 - (1 - lam) * b1
    hc = harmonic_from_values(b1, b2, b3, lam)
    lhs = concavity_fn(v, t)
    return t, xi, s1, s3, sn, eps, C, jc, hc, lhs


def _vacuous(theorem, report, v, floor):
    t = report.triple
    return TheoremAudit(theorem, "vacuous", list(t.x1), list(t.x3), t.lam, floor=floor,
                        notes=["deficit at or below the numerical floor"])


def _verdict(rhs, lhs, slack=SLACK):
    margin = rhs - lhs
    return margin, margin >= -slack * abs(rhs)


def audit_theorem1(v: ScalarField, bfun, report: DeficitReport, *, floor: float | None = None,
                   m_seg: int = 257, m_sn: int = 65, slack: float = SLACK) -> TheoremAudit:
    """Check ``C_v <= (-JC + C eps(xi)) / sigma`` at the reported maximizer.

    ``v`` is the transformed field (``-u**q`` or ``-log u``). Raises
    :class:`HypothesisFailure` when ``sigma <= 0`` and :class:`BoundaryMaximum`
    when the maximizer is within ``3h`` of the boundary.
    """
    floor = numerical_floor(v) if floor is None else floor
    if report.deficit <= floor:
        return _vacuous("first", report, v, floor)
    rho = _localize(report, v)
    t, xi, s1, s3, sn, eps, C, jc, hc, lhs = _measure(v, bfun, report, m_seg, m_sn)
    if sn.sigma_raw <= 0 or sn.sigma <= 0:
        raise HypothesisFailure(f"sigma not positive (raw {sn.sigma_raw:.3g}, safeguarded {sn.sigma:.3g})")
    rhs = (-jc + C * eps) / sn.sigma
    rhs_raw = (-jc + C * eps) / sn.sigma_raw
    margin, ok = _verdict(rhs, lhs, slack)
    margin_raw, ok_raw = _verdict(rhs_raw, lhs, slack)
    return TheoremAudit("first", "pass" if ok and ok_raw else "inequality-failure",
                        list(t.x1), list(t.x3), t.lam, xi.tolist(), s1, s3, sn.sigma, sn.sigma_raw,
                        sn.nu, sn.nu_raw, eps, C, jc, hc, lhs, rhs, rhs_raw, margin, margin_raw,
                        "", rho, floor, {"sigma_positive": True})


def audit_theorem2(v: ScalarField, bfun, report: DeficitReport, *, floor: float | None = None,
                   m_seg: int = 257, m_sn: int = 65, slack: float = SLACK) -> TheoremAudit:
    """Check the two-branch bound (jointly concave or harmonic) at the maximizer.

    If ``JC >= 0``: ``C_v <= (C eps + C^2 eps^2 / nu) / sigma``; otherwise
    ``C_v <= (-HC + C eps (1 - JC/nu) + C^2 eps^2 / nu) / sigma``.
    """
    floor = numerical_floor(v) if floor is None else floor
    if report.deficit <= floor:
        return _vacuous("second", report, v, floor)
    rho = _localize(report, v)
    t, xi, s1, s3, sn, eps, C, jc, hc, lhs = _measure(v, bfun, report, m_seg, m_sn)
    if min(sn.sigma_raw, sn.sigma, sn.nu_raw, sn.nu) <= 0:
        raise HypothesisFailure(f"sigma/nu not positive (sigma {sn.sigma:.3g}, nu {sn.nu:.3g})")

    def bound(sigma, nu):
        if jc >= 0:
            return (C * eps + C * C * eps * eps / nu) / sigma
        if hc is None:
            raise UndefinedHarmonicConcavity("b is not positive at the audited points")
        return (-hc + C * eps * (1 - jc / nu) + C * C * eps * eps / nu) / sigma

    rhs, rhs_raw = bound(sn.sigma, sn.nu), bound(sn.sigma_raw, sn.nu_raw)
    margin, ok = _verdict(rhs, lhs, slack)
    margin_raw, ok_raw = _verdict(rhs_raw, lhs, slack)
    return TheoremAudit("second", "pass" if ok and ok_raw else "inequality-failure",
                        list(t.x1), list(t.x3), t.lam, xi.tolist(), s1, s3, sn.sigma, sn.sigma_raw,
                        sn.nu, sn.nu_raw, eps, C, jc, hc, lhs, rhs, rhs_raw, margin, margin_raw,
                        "jointly-concave" if jc >= 0 else "harmonic", rho, floor,
                        {"sigma_positive": True, "nu_positive": True})


def transformed_field(u: ScalarField, nonlinearity) -> ScalarField:
    """``v = -u**((1-beta)/2)`` for power sources, ``v = -log u`` otherwise."""
    from .fields import transform_log, transform_power
    if isinstance(nonlinearity, Power):
        return negate(transform_power(u, nonlinearity.beta))
    return negate(transform_log(u))


def audit_instance(u: ScalarField, coefficients: CoefficientSet, nonlinearity,
                   report: DeficitReport, **kw) -> TheoremAudit:
    """Run the bound that applies to the problem type and turn audit errors into a status.

    Power sources are checked with the two-branch bound, perturbed eigenvalue
    sources with the first bound.
    """
    v = transformed_field(u, nonlinearity)
    bfun = bfunction_for(coefficients, nonlinearity)
    audit = audit_theorem2 if isinstance(nonlinearity, Power) else audit_theorem1
    name = "second" if audit is audit_theorem2 else "first"
    t = report.triple
    try:
        res = audit(v, bfun, report, **kw)
    except (HypothesisFailure, SDomainViolation, UndefinedHarmonicConcavity) as exc:
        return TheoremAudit(name, "hypothesis-failure", list(t.x1), list(t.x3), t.lam,
                            notes=[f"{type(exc).__name__}: {exc}"])
    except BoundaryMaximum as exc:
        return TheoremAudit(name, "boundary-maximum", list(t.x1), list(t.x3), t.lam,
                            notes=[str(exc)])
    if not v.grid.domain.strongly_convex:
        res.notes.append("domain is not strongly convex; the estimate is outside its stated setting")
    return res


# -- proposition-level record --------------------------------------------------------


def audit_propositions(coefficients: CoefficientSet, nonlinearity, u: ScalarField,
                       report: DeficitReport, *, n_samples: int = 1001) -> dict:
    """Record ``(eps_meas, deficit)`` and the localized constants for slope fitting.

    ``eps_meas = sup|grad a| + max_ij sup|grad alpha^{ij}|`` over the domain.
    The chain constants are logged for inspection only.
    """
    dom = u.grid.domain
    if not dom.strongly_convex:
        warnings.warn("auditing on a domain that is not strongly convex", stacklevel=2)
    eps_meas = coefficients.eps_meas(dom, n_samples)
    v = transformed_field(u, nonlinearity)
    f = negate(v)
    floor = numerical_floor(f)
    out = {"eps_meas": eps_meas, "deficit": report.deficit, "floor": floor,
           "censored": report.deficit <= floor,
           "ratio": report.deficit / eps_meas if eps_meas > 0 else None,
           "strongly_convex": dom.strongly_convex}
    rho = max(3 * u.grid.h, min(dom.inradius / 2,
                                float(dom.boundary_distance(np.array([report.x1, report.x3])).min())
                                if report.triple.is_interior(dom) else 3 * u.grid.h))
    pts = u.grid.points()
    inner = u.grid.mask & (np.asarray(dom.contains(pts)))
    inner[inner] = dom.boundary_distance(pts[inner]) >= rho
    gx, gy = gradient_fields(v)
    vals = v.values[inner]
    grad = np.hypot(np.where(gx.grid.mask, gx.values, 0), np.where(gy.grid.mask, gy.values, 0))[inner]
    if vals.size:
        a_min = float(coefficients.a(pts[inner]).min())
        m_rho = float(np.max(np.abs(vals)))
        chain = {"rho": rho, "m_rho": m_rho, "M_rho": float(grad.max()),
                 "upsilon_rho": float(np.min(-vals)), "a_min": a_min}
        if isinstance(nonlinearity, Power):
            b = nonlinearity.beta
            chain["nu_bound"] = (1 - b) / (2 * m_rho) * a_min
            chain["sigma_bound"] = (1 - b) / (2 * m_rho ** 2) * a_min
        else:
            phi, e = nonlinearity.phi, nonlinearity.eps_phi
            chain["sigma_bound"] = float(e * math.exp(-m_rho) * phi(math.exp(m_rho)))
        out["chain"] = chain
    return out


# -- harmonic concavity of b = 1/(s g0(x)) -------------------------------------------


@dataclass
class RemarkWitness:
    found: bool
    g0: str
    hc: float
    x1: float = math.nan
    s1: float = math.nan
    x3: float = math.nan
    s3: float = math.nan
    lam: float = math.nan
    evaluated: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def audit_remark_noconc(g0: str, interval=(0.0, 1.0), s_range=(0.1, 2.0), n: int = 9,
                        tol: float = 1e-12) -> RemarkWitness:
    """Search for a point where ``b = 1/(s g0(x))`` fails harmonic concavity.

    For positive ``b``, ``HC_b = 1/B(x2, s2) - 1/(lam B(x3, s3) + (1-lam) B(x1, s1))``
    with ``B = s g0(x)``, so a witness is a segment along which ``B`` is not
    convex.  The search is a grid over ``(x1, s1, x3, s3, lam)``; a witness
    needs ``HC < -tol * max|b|``.
    """
    e = Expression(g0)
    xs = np.linspace(*interval, n)
    ss = np.linspace(*s_range, n)
    lams = np.arange(1, n + 1) / (n + 1)
    gx = e(np.column_stack([xs, np.zeros_like(xs)]))
    if np.min(gx) <= 0:
        raise ValueError("g0 must be positive on the interval")
    X1, S1, X3, S3, L = np.meshgrid(xs, ss, xs, ss, lams, indexing="ij")
    G1 = np.broadcast_to(gx[:, None, None, None, None], X1.shape)
    G3 = np.broadcast_to(gx[None, None, :, None, None], X1.shape)
    X2 = L * X3 + (1 - L) * X1
    S2 = L * S3 + (1 - L) * S1
    G2 = e(np.stack([X2, np.zeros_like(X2)], axis=-1))
    B1, B2, B3 = S1 * G1, S2 * G2, S3 * G3
    hc = 1.0 / B2 - 1.0 / (L * B3 + (1 - L) * B1)
    scale = float(np.max(1.0 / np.concatenate([B1.ravel(), B3.ravel()])))
    k = int(np.argmin(hc))
    best = float(hc.ravel()[k])
    idx = np.unravel_index(k, hc.shape)
    found = best < -tol * scale
    return RemarkWitness(bool(found), g0, best, float(X1[idx]), float(S1[idx]), float(X3[idx]),
                         float(S3[idx]), float(L[idx]), int(hc.size))
