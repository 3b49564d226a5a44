"""Finite-difference Newton solver for semilinear anisotropic Dirichlet problems.

Solves ``-alpha^{ij}(x) D_ij u = F(x, u)`` in a convex domain with ``u = 0`` on
the boundary, where ``F`` is either ``a(x) u**beta`` (sublinear power) or
``a(x) u + eps_phi * phi(u)`` (perturbed eigenvalue type).

The operator is discretized on the masked grid with 3-point second differences
along the axes and both diagonals; nodes whose stencil leaves the domain use
Shortley-Weller one-sided differences to the exact boundary crossing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp

from .coefficients import X, Y, CoefficientSet, Expression, parse_expression
from .errors import (BetaOneRejected, ConfigError, EllipticityViolation, NeedsTwoResolutions,
                     NewtonDivergence, PositivityLoss)
from .fields import Grid, ScalarField
from .geometry import ConvexDomain

U_FLOOR = 1e-12

# -- nonlinearities -------------------------------------------------------------


@dataclass(frozen=True)
class Phi:
    """Positive C^1 perturbation ``phi`` on ``(0, inf)``.

    ``condition`` records which sign hypothesis holds: ``"nonincreasing"``
    (``phi' <= 0``) or ``"loosened"`` (``e^s phi(e^-s) - phi'(e^-s) >= gamma > 0``).
    """

    kind: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("one", "inverse-shift", "exp", "power"):
            raise ConfigError(f"unknown phi {self.kind!r}")
        if self.kind == "power" and not 0.0 <= self.gamma < 1.0:
            raise ConfigError("phi power exponent must lie in [0, 1)")

    @property
    def condition(self) -> str:
        if self.kind == "power" and self.gamma > 0:
            return "loosened"
        return "nonincreasing"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "one":
            return np.ones_like(t)
        if self.kind == "inverse-shift":
            return 1.0 / (1.0 + t)
        if self.kind == "exp":
            return np.exp(-t)
        return t ** self.gamma

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "one":
            return np.zeros_like(t)
        if self.kind == "inverse-shift":
            return -1.0 / (1.0 + t) ** 2
        if self.kind == "exp":
            return -np.exp(-t)
        if self.gamma == 0:
            return np.zeros_like(t)
        return self.gamma * t ** (self.gamma - 1.0)

    def to_config(self):
        return {"kind": self.kind, "gamma": self.gamma} if self.kind == "power" else self.kind


PHI_ONE = Phi("one")
PHI_INVERSE_SHIFT = Phi("inverse-shift")
PHI_EXP = Phi("exp")


@dataclass(frozen=True)
class Power:
    """Source ``a(x) u**beta`` with ``0 <= beta < 1``."""

    beta: float

    def __post_init__(self):
        if self.beta == 1.0:
            raise BetaOneRejected("beta = 1 is the pure eigenvalue problem and is not supported")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")

    @property
    def is_linear(self) -> bool:
        return self.beta == 0.0

    def source(self, a, u):
        if self.beta == 0.0:
            return a.copy()
        return a * np.maximum(u, U_FLOOR) ** self.beta

    def dsource(self, a, u):
        if self.beta == 0.0:
            return np.zeros_like(u)
        return self.beta * a * np.maximum(u, U_FLOOR) ** (self.beta - 1.0)

    def to_config(self):
        return {"kind": "power", "beta": self.beta}


@dataclass(frozen=True)
class EigenPerturbed:
    """Source ``a(x) u + eps_phi * phi(u)`` with ``eps_phi > 0``."""

    phi: Phi
    eps_phi: float

    def __post_init__(self):
        if not self.eps_phi > 0:
            raise ConfigError("eps_phi must be positive")

    @property
    def is_linear(self) -> bool:
        return self.phi.kind == "one"

    def source(self, a, u):
        return a * u + self.eps_phi * self.phi(np.maximum(u, U_FLOOR))

    def dsource(self, a, u):
        return a + self.eps_phi * self.phi.deriv(np.maximum(u, U_FLOOR))

    def to_config(self):
        return {"kind": "eigen", "phi": self.phi.to_config(), "eps_phi": self.eps_phi}


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything needed for one Dirichlet solve."""

    domain: ConvexDomain
    h: float
    coefficients: CoefficientSet
    nonlinearity: Power | EigenPerturbed
    tol: float = 1e-10
    max_iter: int = 50
    min_step: float = 2.0 ** -20
    trace: Expression | None = field(default=None, repr=False)

    def with_h(self, h: float) -> "ProblemSpec":
        return replace(self, h=h)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    min_u: float
    boundary_scheme: str
    wall_time: float
    residual_history: list = field(default_factory=list)
    n_unknowns: int = 0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "min_u": self.min_u,
                "boundary_scheme": self.boundary_scheme, "wall_time": self.wall_time,
                "residual_history": list(self.residual_history), "n_unknowns": self.n_unknowns}


# -- operator ---------------------------------------------------------------------

# grid steps (di, dj) along which 3-point second differences are taken
_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Discretization of ``-alpha^{ij} D_ij`` on the interior nodes.

    ``apply(u, g) = A @ u + B @ g`` where ``g`` holds the Dirichlet data at
    ``boundary_points``.
    """

    grid: Grid
    index: np.ndarray
    points: np.ndarray
    A: sps.csr_matrix
    B: sps.csr_matrix
    boundary_points: np.ndarray
    min_theta: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def apply(self, u, g=None):
        out = self.A @ u
        if g is not None and self.B.shape[1]:
            out = out + self.B @ g
        return out

    def to_field(self, u, trace: float = 0.0) -> ScalarField:
        vals = np.full((self.grid.ny, self.grid.nx), np.nan)
        vals[self.grid.mask] = u
        return ScalarField(self.grid, vals, trace, dirichlet=True)


def assemble_operator(spec: ProblemSpec) -> DiscreteOperator:
    """Assemble the sparse operator for ``spec`` (Dirichlet data kept separate)."""
    grid = Grid.covering(spec.domain, spec.h)
    mask = grid.mask
    ny, nx = mask.shape
    index = np.full(mask.shape, -1, dtype=np.int64)
    jj, ii = np.nonzero(mask)
    n = jj.size
    index[jj, ii] = np.arange(n)
    pts = grid.points()[jj, ii]
    h = grid.h

    coeffs = spec.coefficients
    lam_min = coeffs.min_eigenvalue(pts)
    if n and np.min(lam_min) < coeffs.zeta:
        raise EllipticityViolation(
            f"smallest sampled eigenvalue {np.min(lam_min):.6g} below floor {coeffs.zeta}")
    a11, a12, a22 = coeffs.a11(pts), coeffs.a12(pts), coeffs.a22(pts)
    # -alpha^{ij} D_ij = -(a11 D_xx + a22 D_yy + a12 (D_dd+ - D_dd-))
    weights = (a11, a22, a12, -a12)

    rows, cols, vals = [], [], []
    brow, bval, bpts = [], [], []
    nb = 0
    min_theta = 1.0
    for (di, dj), w in zip(_DIRECTIONS, weights):
        if not np.any(w):
            continue
        step = h * math.hypot(di, dj)
        d = np.array([di * h, dj * h])
        hs, nbr = [], []
        for sgn in (1, -1):
            ti, tj = ii + sgn * di, jj + sgn * dj
            inb = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
            inside = np.zeros(n, dtype=bool)
            inside[inb] = mask[tj[inb], ti[inb]]
            theta = np.ones(n)
            out = ~inside
            if np.any(out):
                theta[out] = spec.domain.ray_exit(pts[out], sgn * d)
                min_theta = min(min_theta, float(theta[out].min()))
            hs.append(theta * step)
            nbr.append((inside, np.where(inside, index[np.clip(tj, 0, ny - 1), np.clip(ti, 0, nx - 1)], -1),
                        theta))
        hp, hm = hs
        cp = -w * 2.0 / (hp * (hp + hm))
        cm = -w * 2.0 / (hm * (hp + hm))
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(w * 2.0 / (hp * hm))
        for c, (inside, nidx, theta), sgn in zip((cp, cm), nbr, (1, -1)):
            rows.append(np.nonzero(inside)[0])
            cols.append(nidx[inside])
            vals.append(c[inside])
            out = np.nonzero(~inside)[0]
            if out.size:
                brow.append(out)
                bval.append(c[out])
                bpts.append(pts[out] + (sgn * theta[out])[:, None] * d)
                nb += out.size
    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n))
    if nb:
        B = sps.csr_matrix((np.concatenate(bval), (np.concatenate(brow), np.arange(nb))),
                           shape=(n, nb))
        bp = np.concatenate(bpts)
    else:
        B = sps.csr_matrix((n, 0))
        bp = np.zeros((0, 2))
    return DiscreteOperator(grid, index, pts, A, B, bp, min_theta)


# -- Newton -----------------------------------------------------------------------


def _initial_guess(op: DiscreteOperator, a, g):
    rhs = a - (op.B @ g if g is not None else 0.0)
    w = spla.splu(op.A.tocsc()).solve(rhs)
    return w


def solve(spec: ProblemSpec) -> tuple[ScalarField, SolveReport]:
    """Solve the Dirichlet problem by damped Newton iteration.

    Returns the solution on the grid and a report. The Newton start is the
    solution of the linear problem with source ``a(x)``, scaled to unit max
    for nonlinear sources.

    Raises
    ------
    NewtonDivergence
        The residual could not be driven below ``spec.tol``.
    PositivityLoss
        The final iterate touches the floor ``U_FLOOR`` somewhere.
    """
    t0 = time.perf_counter()
    op = assemble_operator(spec)
    if op.n == 0:
        from .errors import EmptyMask
        raise EmptyMask("no grid node lies inside the domain")
    a = spec.coefficients.a(op.points)
    if np.min(a) <= 0:
        raise EllipticityViolation("source weight a(x) must be positive")
    g = spec.trace(op.boundary_points) if spec.trace is not None else None
    nl = spec.nonlinearity
    bg = op.B @ g if g is not None else np.zeros(op.n)

    def residual(u):
        return op.A @ u + bg - nl.source(a, u)

    u = _initial_guess(op, a, g)
    if not (isinstance(nl, Power) and nl.is_linear):
        u = u / np.max(u)
    r = residual(u)
    rn = float(np.max(np.abs(r)))
    history = [rn]
    it = 0
    while rn > spec.tol:
        if it >= spec.max_iter:
            raise NewtonDivergence(f"residual {rn:.3e} after {it} Newton steps")
        J = (op.A - sps.diags(nl.dsource(a, u))).tocsc()
        try:
            delta = spla.splu(J).solve(-r)
        except RuntimeError as exc:
            raise NewtonDivergence(f"singular Newton matrix: {exc}") from None
        t = 1.0
        while True:
            cand = u + t * delta
            rc = residual(cand)
            rcn = float(np.max(np.abs(rc)))
            if np.isfinite(rcn) and rcn <= (1.0 - 1e-4 * t) * rn:
                break
            t *= 0.5
            if t < spec.min_step:
                raise NewtonDivergence(f"line search stalled at residual {rn:.3e}")
        u, r, rn = cand, rc, rcn
        history.append(rn)
        it += 1
    umin = float(np.min(u))
    if umin <= U_FLOOR:
        raise PositivityLoss(f"solution reaches {umin:.3e} at an interior node")
    report = SolveReport(it, rn, umin, "shortley-weller", time.perf_counter() - t0, history, op.n)
    return op.to_field(u), report


# -- manufactured solutions ---------------------------------------------------------


@dataclass
class ConvergenceReport:
    hs: list
    errors: list
    orders: list
    forcing: str
    reports: list

    @property
    def ratios(self) -> list:
        return [e0 / e1 if e1 > 0 else math.inf for e0, e1 in zip(self.errors, self.errors[1:])]

    def to_dict(self) -> dict:
        return {"h": self.hs, "errors": self.errors, "orders": self.orders,
                "ratios": self.ratios, "forcing": self.forcing,
                "solves": [r.to_dict() for r in self.reports]}


def manufactured_forcing(coeffs: CoefficientSet, u_exact: str, beta: float) -> str:
    """``(-alpha^{ij} D_ij u*) / u*^beta`` as an expression string."""
    u = parse_expression(u_exact)
    lap = -(coeffs.a11.sym * sp.diff(u, X, 2) + 2 * coeffs.a12.sym * sp.diff(u, X, Y)
            + coeffs.a22.sym * sp.diff(u, Y, 2))
    a = sp.simplify(lap / u ** sp.nsimplify(beta)) if beta else sp.simplify(lap)
    return str(a)


def manufactured_convergence(spec: ProblemSpec, u_exact: str, resolutions) -> ConvergenceReport:
    """Solve with the forcing derived from ``u_exact`` at each ``h`` and report orders.

    The boundary data is the trace of ``u_exact``; the nonlinearity must be
    :class:`Power`. Errors are max-norm over interior nodes.
    """
    hs = [float(h) for h in resolutions]
    if len(hs) < 2:
        raise NeedsTwoResolutions("an order estimate needs at least two resolutions")
    if not isinstance(spec.nonlinearity, Power):
        raise ConfigError("manufactured solutions are supported for power sources only")
    forcing = manufactured_forcing(spec.coefficients, u_exact, spec.nonlinearity.beta)
    coeffs = spec.coefficients.with_a(forcing)
    exact = Expression(u_exact)
    errors, reports = [], []
    for h in hs:
        s = replace(spec, h=h, coefficients=coeffs, trace=exact)
        u, rep = solve(s)
        pts = u.grid.interior_points()
        errors.append(float(np.max(np.abs(u.interior() - exact(pts)))))
        reports.append(rep)
    orders = [math.log(e0 / e1) / math.log(h0 / h1) if e0 > 0 and e1 > 0 else math.inf
              for e0, e1, h0, h1 in zip(errors, errors[1:], hs, hs[1:])]
    return ConvergenceReport(hs, errors, orders, forcing, reports)
