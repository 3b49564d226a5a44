"""Concavity functionals and the global search for the concavity deficit.

For a field ``f`` the concavity function at a triple ``(x1, x3, lam)`` is
``f(x2) - lam f(x3) - (1 - lam) f(x1)`` with ``x2 = lam x3 + (1 - lam) x1``; it
is non-negative everywhere iff ``f`` is concave.  The *deficit* of ``f`` is
``max(0, max C_{-f})``, i.e. how far ``f`` falls below its chords.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import EmptyMask, UndefinedHarmonicConcavity
from .fields import ScalarField, evaluation_data, interpolate_many
from .geometry import ConvexDomain, inner_parallel

UNDEFINED = None  # value of the harmonic concavity function outside its case split


@dataclass(frozen=True)
class Triple:
    x1: tuple[float, ...]
    x3: tuple[float, ...]
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "x1", tuple(float(c) for c in np.atleast_1d(self.x1)))
        object.__setattr__(self, "x3", tuple(float(c) for c in np.atleast_1d(self.x3)))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")

    @property
    def x2(self) -> np.ndarray:
        return self.lam * np.asarray(self.x3) + (1.0 - self.lam) * np.asarray(self.x1)

    def swapped(self) -> "Triple":
        return Triple(self.x3, self.x1, 1.0 - self.lam)

    def is_interior(self, domain: ConvexDomain) -> bool:
        pts = np.array([self.x1, self.x2, self.x3])
        return bool(np.all(domain.contains(pts)))

    def margin(self, domain: ConvexDomain) -> float:
        """Smallest boundary distance among ``x1, x2, x3``."""
        pts = np.array([self.x1, self.x2, self.x3])
        if not np.all(domain.contains_closed(pts)):
            return 0.0
        return float(np.min(domain.boundary_distance(pts)))


# -- pointwise evaluation ----------------------------------------------------------

def _pad2(pts):
    pts = np.asarray(pts, dtype=float)
    if pts.shape[-1] == 1:
        pts = np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)
    return pts


def evaluate(f: ScalarField, pts, strict: bool = True) -> np.ndarray:
    """Values of ``f`` at points of the closed domain.

    Points on or beyond the boundary take the Dirichlet trace; the rest are
    interpolated.
    """
    pts = _pad2(pts)
    dom = f.grid.domain
    if dom is None:
        return interpolate_many(f, pts, strict=strict)
    out = np.empty(pts.shape[:-1])
    inside = np.asarray(dom.contains(pts))
    out[~inside] = f.trace
    if np.any(inside):
        out[inside] = interpolate_many(f, pts[inside], strict=strict)
    return out


def concavity_fn(f: ScalarField, t: Triple) -> float:
    """``f(x2) - lam f(x3) - (1 - lam) f(x1)``."""
    if t.lam == 0.0 or t.lam == 1.0:
        return 0.0
    v1, v2, v3 = evaluate(f, np.array([t.x1, t.x2, t.x3]))
    return float(v2 - t.lam * v3 - (1.0 - t.lam) * v1)


def joint_concavity_fn(g, t: Triple, s1: float, s3: float) -> float:
    """Joint-concavity defect of ``g(x, s)`` at ``((x1, s1), (x3, s3), lam)``."""
    lam = t.lam
    s2 = lam * s3 + (1.0 - lam) * s1
    x1, x2, x3 = np.asarray(t.x1), t.x2, np.asarray(t.x3)
    return float(g(x2, s2) - lam * g(x3, s3) - (1.0 - lam) * g(x1, s1))


def harmonic_concavity_fn(g, t: Triple, s1: float, s3: float):
    """Harmonic-concavity defect, or :data:`UNDEFINED` outside the case split."""
    lam = t.lam
    s2 = lam * s3 + (1.0 - lam) * s1
    g1 = float(g(np.asarray(t.x1), s1))
    g3 = float(g(np.asarray(t.x3), s3))
    g2 = float(g(t.x2, s2))
    return harmonic_from_values(g1, g2, g3, lam)


def harmonic_from_values(g1: float, g2: float, g3: float, lam: float):
    den = lam * g1 + (1.0 - lam) * g3
    if den > 0:
        return g2 - g1 * g3 / den
    if g1 == 0 and g3 == 0:
        return g2
    return UNDEFINED


def hc_minus_jc(g, t: Triple, s1: float, s3: float) -> float:
    hc = harmonic_concavity_fn(g, t, s1, s3)
    if hc is UNDEFINED:
        raise UndefinedHarmonicConcavity("harmonic concavity is undefined at this point")
    return hc - joint_concavity_fn(g, t, s1, s3)


# -- deficit search ----------------------------------------------------------------

@dataclass
class DeficitReport:
    x1: list[float]
    x3: list[float]
    lam: float
    deficit: float
    coarse_value: float
    refined_value: float
    interior: bool
    h: float
    lambda_grid: int
    refinement_iterations: int
    stride: int
    rho: float = 0.0
    pairs: int = 0
    candidates: list = field(default_factory=list, repr=False)

    @property
    def triple(self) -> Triple:
        return Triple(self.x1, self.x3, self.lam)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("candidates")
        return d


def numerical_floor(f: ScalarField, factor: float = 10.0) -> float:
    """Deficit level indistinguishable from discretization error."""
    return factor * f.grid.h**2 * f.sup_norm


def _scan(f, nodes, lams, top_k, chunk=4_000_000):
    """Exhaustive ``C_{-f}`` over unordered node pairs and the lambda grid.

    The lambda grid is symmetric, so unordered pairs cover every ordered one.
    Returns candidates ``(value, a, b, k)`` sorted by value, then by row-major
    pair order, then by lambda index.
    """
    g = f.grid
    pts = np.stack([g.xmin + nodes[:, 0] * g.h, g.ymin + nodes[:, 1] * g.h], axis=1)
    fnode = np.ascontiguousarray(f.values[nodes[:, 1], nodes[:, 0]])
    n = len(nodes)
    if g.is_1d:
        return _scan_1d(f, pts, fnode, lams, top_k), n * (n - 1) // 2, pts

    from . import _kernels

    if f.lift is None:
        code, q, coef, src = _kernels.IDENTITY, 1.0, 1.0, f
    else:
        code = _kernels.POWER if f.lift.kind == "power" else _kernels.LOG
        q, coef, src = f.lift.q, f.lift.coef, f.lift.base
    vals, cmap = evaluation_data(src)
    best = []
    total = 0
    a = 0
    while a < n - 1:
        a1 = a
        count = 0
        while a1 < n - 1 and (count == 0 or count + (n - a1 - 1) <= chunk):
            count += n - a1 - 1
            a1 += 1
        sizes = n - np.arange(a, a1) - 1
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        out_val = np.empty(count)
        out_lam = np.empty(count, dtype=np.int64)
        _kernels.scan_rows(pts, fnode, vals, cmap, g.xmin, g.ymin, g.h, lams,
                           code, q, coef, a, a1, offsets, out_val, out_lam)
        kk = min(top_k, count)
        idx = np.argpartition(-out_val, kk - 1)[:kk]
        rows = np.searchsorted(offsets, idx, side="right") - 1
        for q_, r in zip(idx, rows):
            ia = a + int(r)
            ib = ia + 1 + int(q_ - offsets[r])
            best.append((float(out_val[q_]), ia, ib, int(out_lam[q_])))
        best.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
        best = best[:top_k]
        total += count
        a = a1
    return best, total, pts


def _scan_1d(f, pts, fnode, lams, top_k):
    n = len(pts)
    ia, ib = np.triu_indices(n, 1)
    cvals = np.empty((len(ia), len(lams)))
    for k, lam in enumerate(lams):
        x2 = lam * pts[ib] + (1.0 - lam) * pts[ia]
        f2 = interpolate_many(f, x2)
        cvals[:, k] = -f2 + lam * fnode[ib] + (1.0 - lam) * fnode[ia]
    flat = cvals.ravel()
    kk = min(top_k, len(flat))
    idx = np.argpartition(-flat, kk - 1)[:kk]
    L = len(lams)
    best = [(float(flat[q]), int(ia[q // L]), int(ib[q // L]), int(q % L)) for q in idx]
    best.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    return best


def _projector(domain, rho):
    if domain is None:
        return None, None
    region = domain if rho == 0 else inner_parallel(domain, rho).exact()
    if region is not None:
        return region.project, region.contains_closed
    def closed(x):
        x = np.asarray(x)
        ok = np.asarray(domain.contains(x))
        out = np.zeros(ok.shape, dtype=bool)
        if np.any(ok):
            out[ok] = domain.boundary_distance(x[ok]) >= rho
        return out

    return domain.project, closed


def max_deficit(f: ScalarField, lambda_grid: int = 15, top_k: int = 16, *,
                max_pairs: int = 20_000_000, rho: float = 0.0, stride: int | None = None,
                refine: bool = True) -> DeficitReport:
    """Global maximum of ``C_{-f}`` over triples: exhaustive scan, then local refinement.

    Parameters
    ----------
    f : ScalarField
        Field whose departure from concavity is measured.
    lambda_grid : int
        Number ``L`` of interior lambda values ``k/(L+1)``; endpoints are skipped
        because the concavity function vanishes there.
    top_k : int
        Number of scan candidates handed to the Nelder-Mead refinement.
    max_pairs : int
        Upper bound on the number of node pairs in the scan; the node set is
        subsampled with the smallest stride that respects it.
    rho : float
        Restrict ``x1, x3`` to the closed inner parallel set at distance ``rho``.
    stride : int, optional
        Force a subsampling stride instead of deriving it from ``max_pairs``.
    """
    if lambda_grid < 3:
        raise ValueError("lambda_grid must be at least 3")
    g = f.grid
    mask = g.mask.copy()
    dom = g.domain
    if rho > 0:
        if dom is None:
            raise ValueError("rho > 0 needs a grid with a domain")
        ips = inner_parallel(dom, rho)
        mask &= np.asarray(ips.contains(g.points()))
    jj, ii = np.nonzero(mask)
    if len(ii) == 0:
        raise EmptyMask("no mask nodes to scan")
    if stride is None:
        stride = 1
        while True:
            sel = (ii % stride == 0) & (jj % stride == 0)
            n = int(sel.sum())
            if n * (n - 1) // 2 <= max_pairs:
                break
            stride += 1
    sel = (ii % stride == 0) & (jj % stride == 0)
    nodes = np.stack([ii[sel], jj[sel]], axis=1)
    if len(nodes) < 2:
        raise EmptyMask("fewer than two nodes after subsampling")
    lams = np.arange(1, lambda_grid + 1) / (lambda_grid + 1)
    best, total, pts = _scan(f, nodes, lams, top_k)

    cands = []
    for val, a, b, k in best:
        if len(cands) >= top_k:
            break
        cands.append((val, pts[a], pts[b], float(lams[k])))
    coarse_val, cx1, cx3, clam = cands[0]

    best_val, bx1, bx3, blam, iters = coarse_val, cx1, cx3, clam, 0
    if refine:
        project, closed = _projector(dom, rho)
        for val, x1, x3, lam in cands:
            rv, rx1, rx3, rlam, it = _refine(f, x1, x3, lam, val, project, closed)
            iters += it
            better = rv > best_val + 1e-15
            tie = abs(rv - best_val) <= 1e-15 and np.linalg.norm(rx1 - rx3) < np.linalg.norm(bx1 - bx3)
            if better or tie:
                best_val, bx1, bx3, blam = rv, rx1, rx3, rlam
    t = Triple(bx1[: 1 if g.is_1d else 2], bx3[: 1 if g.is_1d else 2], blam)
    interior = t.is_interior(dom) if dom is not None else True
    return DeficitReport(
        x1=list(t.x1), x3=list(t.x3), lam=float(blam), deficit=max(0.0, float(best_val)),
        coarse_value=float(coarse_val), refined_value=float(best_val), interior=interior,
        h=g.h, lambda_grid=lambda_grid, refinement_iterations=iters, stride=stride,
        rho=rho, pairs=total,
        candidates=[(float(v), list(a), list(b), l) for v, a, b, l in cands])


def _refine(f, x1, x3, lam, start_val, project, closed):
    g = f.grid
    h = g.h
    one_d = f.grid.is_1d

    def unpack(z):
        if one_d:
            p1 = np.array([z[0], 0.0])
            p3 = np.array([z[1], 0.0])
            lz = z[2]
        else:
            p1, p3, lz = z[0:2], z[2:4], z[4]
        if project is not None:
            p1, p3 = project(p1), project(p3)
        else:
            # without a domain the grid box is the region of definition
            lo, hi = (g.xmin, g.ymin), (g.xmax, g.ymax if not one_d else 0.0)
            p1, p3 = np.clip(p1, lo, hi), np.clip(p3, lo, hi)
        return p1, p3, float(np.clip(lz, 0.0, 1.0))

    def objective(z):
        p1, p3, lz = unpack(z)
        if closed is not None and not np.all(closed(np.array([p1, p3]))):
            return np.inf
        p2 = lz * p3 + (1.0 - lz) * p1
        v = evaluate(f, np.array([p1, p2, p3]), strict=False)
        c = -v[1] + lz * v[2] + (1.0 - lz) * v[0]
        return -c if np.isfinite(c) else np.inf

    z0 = np.concatenate([x1[:1], x3[:1], [lam]]) if one_d else np.concatenate([x1, x3, [lam]])
    dim = len(z0)
    simplex = np.tile(z0, (dim + 1, 1))
    sep = max(np.linalg.norm(x3 - x1), h)
    for k in range(dim):
        simplex[k + 1, k] += h if k < dim - 1 else min(0.5 * h / sep, 0.05)
    res = minimize(objective, z0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": h / 100.0, "fatol": np.inf,
                            "maxiter": 400 * dim, "maxfev": 800 * dim})
    p1, p3, lz = unpack(res.x)
    val = -res.fun if np.isfinite(res.fun) else -np.inf
    if val < start_val:
        return start_val, x1, x3, lam, int(res.nit)
    return float(val), p1, p3, lz, int(res.nit)


def boundary_audit(report: DeficitReport, f: ScalarField, floor: float | None = None,
                   margin_cells: float = 2.0) -> str:
    """Classify the maximizing triple: ``interior``, ``near-boundary-warning`` or
    ``boundary-violation``.  Deficits at or below the floor pass vacuously."""
    if floor is None:
        floor = numerical_floor(f)
    if report.deficit <= floor:
        return "interior"
    dom = f.grid.domain
    if dom is None:
        return "interior"
    t = report.triple
    if not t.is_interior(dom):
        return "boundary-violation"
    if t.margin(dom) < margin_cells * f.grid.h:
        return "near-boundary-warning"
    return "interior"
