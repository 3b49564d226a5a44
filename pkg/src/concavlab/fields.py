"""Scalar fields sampled on masked uniform grids.

Values are stored as ``(ny, nx)`` arrays indexed ``[j, i]`` with ``x = xmin + i*h``
and ``y = ymin + j*h``; nodes outside the mask hold ``nan``.  A grid with
``ny == 1`` is a 1D grid on ``[xmin, xmax]`` whose nodes are all in the mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .errors import (MalformedHeader, NonpositiveInputValue, PointTooCloseToBoundary,
                     StencilExitsDomain, ValueCountMismatch)
from .geometry import ConvexDomain

_MIN_NODES = 9


@dataclass(frozen=True, eq=False)
class Grid:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    mask: np.ndarray = field(repr=False)
    domain: ConvexDomain | None = None

    def __post_init__(self):
        if self.nx < _MIN_NODES or (self.ny != 1 and self.ny < _MIN_NODES):
            raise ValueError(f"grid needs at least {_MIN_NODES} nodes per axis")
        if self.ny > 1:
            hx = (self.xmax - self.xmin) / (self.nx - 1)
            hy = (self.ymax - self.ymin) / (self.ny - 1)
            if abs(hx - hy) > 1e-12 * max(hx, hy):
                raise ValueError(f"grid cells must be square (hx={hx!r}, hy={hy!r})")
        if self.mask.shape != (self.ny, self.nx):
            raise ValueError("mask shape does not match grid")
        self.mask.setflags(write=False)

    @classmethod
    def covering(cls, domain: ConvexDomain, h: float) -> "Grid":
        """Smallest grid of spacing ``h`` whose box contains ``domain``."""
        xmin, xmax, ymin, ymax = domain.bbox()
        cells = []
        for lo, hi in ((xmin, xmax), (ymin, ymax)):
            cells.append(max(_MIN_NODES - 1, int(math.ceil((hi - lo) / h - 1e-9))))
        nxc, nyc = cells
        padx = 0.5 * (nxc * h - (xmax - xmin))
        pady = 0.5 * (nyc * h - (ymax - ymin))
        x0, y0 = xmin - padx, ymin - pady
        # keep the spacing bit-identical on both axes
        x1, y1 = x0 + nxc * h, y0 + nyc * h
        xs = x0 + h * np.arange(nxc + 1)
        ys = y0 + h * np.arange(nyc + 1)
        X, Y = np.meshgrid(xs, ys)
        mask = np.asarray(domain.contains(np.stack([X, Y], axis=-1)))
        return cls(x0, x1, y0, y1, nxc + 1, nyc + 1, mask, domain)

    @classmethod
    def line(cls, xmin: float, xmax: float, nx: int) -> "Grid":
        return cls(xmin, xmax, 0.0, 0.0, nx, 1, np.ones((1, nx), dtype=bool))

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    @property
    def h(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return self.xmin + self.h * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        if self.is_1d:
            return np.array([self.ymin])
        return self.ymin + self.h * np.arange(self.ny)

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(ny, nx, 2)``."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.stack([X, Y], axis=-1)

    def node(self, i: int, j: int = 0) -> np.ndarray:
        return np.array([self.xmin + i * self.h, self.ymin + j * self.h])

    @property
    def n_interior(self) -> int:
        return int(self.mask.sum())

    def interior_points(self) -> np.ndarray:
        return self.points()[self.mask]

    def with_mask(self, mask: np.ndarray) -> "Grid":
        return Grid(self.xmin, self.xmax, self.ymin, self.ymax, self.nx, self.ny,
                    np.asarray(mask, dtype=bool) & self.mask, self.domain)

    def cell_ok(self) -> np.ndarray:
        """``(ny-1, nx-1)`` flags: all four corners of the cell are in the mask."""
        m = self.mask
        return m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:]


@dataclass(frozen=True, eq=False)
class Lift:
    """Off-grid rule ``coef * T(interpolated base)`` for a pointwise transform ``T``.

    ``kind`` is ``"power"`` (``T(w) = max(w, 0) ** q``) or ``"log"``.
    """

    base: "ScalarField"
    kind: str
    q: float = 1.0
    coef: float = 1.0

    def apply(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            return self.coef * np.maximum(w, 0.0) ** self.q
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef * np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), np.nan)

    def scaled(self, c: float) -> "Lift":
        return Lift(self.base, self.kind, self.q, c * self.coef)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values on a masked grid plus the Dirichlet trace on the boundary.

    ``lift`` optionally records how the field was produced from a smoother
    base field by a pointwise map (see :func:`transform_power`); off-grid
    evaluation then interpolates the base field and applies the map.

    ``dirichlet`` declares that the field is smooth up to the boundary and
    attains ``trace`` there (true for computed solutions).  Cells cut by the
    boundary are then interpolated with ghost values extrapolated to the
    boundary crossing instead of borrowing a neighbouring cell.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    trace: float = 0.0
    lift: "Lift | None" = field(default=None, repr=False)
    dirichlet: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.ny, self.grid.nx):
            raise ValueError("values shape does not match grid")
        v[~self.grid.mask] = np.nan
        if not np.all(np.isfinite(v[self.grid.mask])):
            raise ValueError("interior nodes must carry finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fun, trace: float = 0.0) -> "ScalarField":
        pts = grid.points()
        vals = np.full((grid.ny, grid.nx), np.nan)
        vals[grid.mask] = fun(pts[grid.mask])
        return cls(grid, vals, trace)

    def interior(self) -> np.ndarray:
        return self.values[self.grid.mask]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.interior())))

    def restricted(self, mask: np.ndarray) -> "ScalarField":
        g = self.grid.with_mask(mask)
        return ScalarField(g, self.values, self.trace, dirichlet=self.dirichlet)

    def __call__(self, x):
        return interpolate(self, x)


# -- interpolation ----------------------------------------------------------------

# candidate fallback cells, nearest first (center distance at most 2 cells)
_OFFSETS = sorted(((di, dj) for dj in range(-2, 3) for di in range(-2, 3) if di * di + dj * dj <= 4),
                  key=lambda o: (o[0] ** 2 + o[1] ** 2, o[1], o[0]))


def _bilinear(vals, i, j, tx, ty):
    v00 = vals[j, i]
    v10 = vals[j, i + 1]
    v01 = vals[j + 1, i]
    v11 = vals[j + 1, i + 1]
    return v00 + tx * (v10 - v00) + ty * (v01 - v00) + tx * ty * (v00 - v10 - v01 + v11)


def cell_map(grid: Grid) -> np.ndarray:
    """For each cell, the indices ``(i, j)`` of the cell whose bilinear polynomial
    evaluates points inside it: itself when all four corners are interior,
    otherwise the nearest fully interior cell within ``2h``; ``-1`` if none."""
    cached = getattr(grid, "_cell_map", None)
    if cached is not None:
        return cached
    out = _nearest_cells(grid.cell_ok())
    object.__setattr__(grid, "_cell_map", out)
    return out


def _nearest_cells(ok: np.ndarray) -> np.ndarray:
    ny, nx = ok.shape
    out = np.full((ny, nx, 2), -1, dtype=np.intp)
    todo = np.ones((ny, nx), dtype=bool)
    J, I = np.mgrid[0:ny, 0:nx]
    for di, dj in _OFFSETS:
        ci, cj = I + di, J + dj
        inb = (ci >= 0) & (ci < nx) & (cj >= 0) & (cj < ny)
        hit = todo & inb
        hit[hit] = ok[cj[hit], ci[hit]]
        out[hit, 0] = ci[hit]
        out[hit, 1] = cj[hit]
        todo &= ~hit
    out.setflags(write=False)
    return out


def _ghost_values(f: ScalarField) -> np.ndarray:
    """Node values with exterior neighbours of the mask filled by linear
    extrapolation through the boundary crossing, where ``f = trace``.

    Each interior neighbour ``n`` of an exterior node ``e`` gives the estimate
    ``trace + (f_n - trace) (1 - 1/theta)`` with ``theta`` the fraction of the
    segment ``n -> e`` inside the domain; estimates are averaged with weights
    ``theta`` so that nearly tangent crossings count little.
    """
    g = f.grid
    vals = np.where(g.mask, f.values, np.nan)
    dom = g.domain
    if dom is None or not math.isfinite(f.trace):
        return vals
    mask = g.mask
    ny, nx = mask.shape
    num = np.zeros(mask.shape)
    den = np.zeros(mask.shape)
    pts = g.points()
    h = g.h
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            # exterior node e at (j, i), interior neighbour at (j + dj, i + di)
            src = np.zeros(mask.shape, dtype=bool)
            js = slice(max(0, -dj), ny - max(0, dj))
            jt = slice(max(0, dj), ny - max(0, -dj))
            is_ = slice(max(0, -di), nx - max(0, di))
            it = slice(max(0, di), nx - max(0, -di))
            src[js, is_] = mask[jt, it]
            sel = src & ~mask
            if not np.any(sel):
                continue
            jj, ii = np.nonzero(sel)
            pn = pts[jj + dj, ii + di]
            theta = dom.ray_exit(pn, np.array([-di * h, -dj * h]))
            fn = f.values[jj + dj, ii + di]
            est = f.trace + (fn - f.trace) * (1.0 - 1.0 / theta)
            num[jj, ii] += theta * est
            den[jj, ii] += theta
    ghost = den > 0
    vals[ghost] = num[ghost] / den[ghost]
    return vals


def evaluation_data(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Node values and cell map used for off-grid evaluation of ``f``.

    Without the ``dirichlet`` flag these are the masked values and
    :func:`cell_map`; with it, ghost values extend the field and every cell
    whose corners are all known evaluates with its own bilinear polynomial.
    """
    cached = getattr(f, "_eval_data", None)
    if cached is not None:
        return cached
    if f.dirichlet and f.grid.domain is not None and math.isfinite(f.trace):
        ext = _ghost_values(f)
        fin = np.isfinite(ext)
        ok = fin[:-1, :-1] & fin[:-1, 1:] & fin[1:, :-1] & fin[1:, 1:]
        cmap = _nearest_cells(ok)
        vals = np.where(fin, ext, 0.0)
    else:
        vals = np.where(f.grid.mask, f.values, 0.0)
        cmap = cell_map(f.grid)
    vals.setflags(write=False)
    data = (np.ascontiguousarray(vals), np.ascontiguousarray(cmap))
    object.__setattr__(f, "_eval_data", data)
    return data


def _locate(g: Grid, pts, cm):
    u = (pts[:, 0] - g.xmin) / g.h
    w = (pts[:, 1] - g.ymin) / g.h
    i = np.clip(np.floor(u).astype(np.intp), 0, g.nx - 2)
    j = np.clip(np.floor(w).astype(np.intp), 0, g.ny - 2)
    return u, w, cm[j, i, 0], cm[j, i, 1]


def interpolate_many(f: ScalarField, pts, strict: bool = True) -> np.ndarray:
    """Bilinear interpolation at many points.

    Points whose cell has an exterior corner are evaluated with the bilinear
    polynomial of the nearest fully interior cell within ``2h`` (or, for
    fields flagged ``dirichlet``, of their own cell completed by ghost
    values).  With ``strict`` a point with no such cell raises; otherwise it
    yields ``nan``.
    """
    g = f.grid
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, pts.shape[-1])
    if g.is_1d:
        u = (pts[:, 0] - g.xmin) / g.h
        i = np.clip(np.floor(u).astype(int), 0, g.nx - 2)
        t = u - i
        v = f.values[0]
        return ((1 - t) * v[i] + t * v[i + 1]).reshape(shape)
    if f.lift is not None:
        return f.lift.apply(interpolate_many(f.lift.base, pts, strict=strict)).reshape(shape)
    vals, cm = evaluation_data(f)
    u, w, ci, cj = _locate(g, pts, cm)
    found = ci >= 0
    if strict and not np.all(found):
        p = pts[np.flatnonzero(~found)[0]]
        raise PointTooCloseToBoundary(f"no fully interior cell within 2h of {p.tolist()}")
    out = np.full(len(pts), np.nan)
    ci, cj, u, w = ci[found], cj[found], u[found], w[found]
    out[found] = _bilinear(vals, ci, cj, u - ci, w - cj)
    return out.reshape(shape)


def interpolate(f: ScalarField, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape == (1,):
        x = np.array([x[0], 0.0])
    return float(interpolate_many(f, x[None, :])[0])


# -- finite differences -----------------------------------------------------------

def _check_stencil(f, i, j, offsets):
    g = f.grid
    for di, dj in offsets:
        ii, jj = i + di, j + dj
        if not (0 <= ii < g.nx and 0 <= jj < g.ny) or not g.mask[jj, ii]:
            raise StencilExitsDomain(f"stencil at node ({i}, {j}) leaves the mask")


def gradient_at(f: ScalarField, i: int, j: int) -> np.ndarray:
    """Central-difference gradient at node ``(i, j)``."""
    _check_stencil(f, i, j, [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])
    v, h = f.values, f.grid.h
    return np.array([(v[j, i + 1] - v[j, i - 1]) / (2 * h),
                     (v[j + 1, i] - v[j - 1, i]) / (2 * h)])


def hessian_at(f: ScalarField, i: int, j: int) -> np.ndarray:
    """Second-order central Hessian at node ``(i, j)``; cross stencil for ``f_xy``."""
    _check_stencil(f, i, j, [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)])
    v, h = f.values, f.grid.h
    fxx = (v[j, i + 1] - 2 * v[j, i] + v[j, i - 1]) / h**2
    fyy = (v[j + 1, i] - 2 * v[j, i] + v[j - 1, i]) / h**2
    fxy = (v[j + 1, i + 1] - v[j + 1, i - 1] - v[j - 1, i + 1] + v[j - 1, i - 1]) / (4 * h**2)
    return np.array([[fxx, fxy], [fxy, fyy]])


def _shift(a, di, dj):
    """``out[j, i] = a[j + dj, i + di]`` with ``nan`` padding."""
    out = np.full_like(a, np.nan)
    ny, nx = a.shape
    ys = slice(max(0, -dj), min(ny, ny - dj))
    xs = slice(max(0, -di), min(nx, nx - di))
    yt = slice(max(0, dj), min(ny, ny + dj))
    xt = slice(max(0, di), min(nx, nx + di))
    out[ys, xs] = a[yt, xt]
    return out


def gradient_fields(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Gradient components as fields on the nodes where the stencil fits."""
    v, h = f.values, f.grid.h
    gx = (_shift(v, 1, 0) - _shift(v, -1, 0)) / (2 * h)
    gy = (_shift(v, 0, 1) - _shift(v, 0, -1)) / (2 * h)
    m = f.grid.mask & np.isfinite(gx) & np.isfinite(gy)
    g = f.grid.with_mask(m)
    return ScalarField(g, gx), ScalarField(g, gy)


def hessian_fields(f: ScalarField) -> tuple[ScalarField, ScalarField, ScalarField]:
    v, h = f.values, f.grid.h
    fxx = (_shift(v, 1, 0) - 2 * v + _shift(v, -1, 0)) / h**2
    fyy = (_shift(v, 0, 1) - 2 * v + _shift(v, 0, -1)) / h**2
    fxy = (_shift(v, 1, 1) - _shift(v, -1, 1) - _shift(v, 1, -1) + _shift(v, -1, -1)) / (4 * h**2)
    m = f.grid.mask & np.isfinite(fxx) & np.isfinite(fyy) & np.isfinite(fxy)
    g = f.grid.with_mask(m)
    return ScalarField(g, fxx), ScalarField(g, fxy), ScalarField(g, fyy)


# -- pointwise transforms ---------------------------------------------------------

def _require_positive(u: ScalarField):
    if np.any(u.interior() <= 0):
        raise NonpositiveInputValue("transform needs u > 0 on every interior node")


def transform_power(u: ScalarField, beta: float, lift: bool = True) -> ScalarField:
    """Node-wise ``u ** ((1 - beta) / 2)`` with zero boundary trace.

    With ``lift`` (the default) off-grid points are evaluated as the power of
    the interpolated ``u``; the power is singular at the boundary, whereas
    ``u`` itself is smooth, so interpolating ``u`` is far more accurate there.
    """
    _require_positive(u)
    q = 0.5 * (1.0 - beta)
    vals = np.where(u.grid.mask, np.abs(u.values) ** q, np.nan)
    return ScalarField(u.grid, vals, 0.0, Lift(u, "power", q) if lift else None)


def transform_log(u: ScalarField, lift: bool = True) -> ScalarField:
    """Node-wise ``log u``; the boundary trace is not a value (``nan``)."""
    _require_positive(u)
    vals = np.where(u.grid.mask, np.log(np.where(u.grid.mask, u.values, 1.0)), np.nan)
    return ScalarField(u.grid, vals, math.nan, Lift(u, "log") if lift else None)


def scale(f: ScalarField, c: float) -> ScalarField:
    lift = f.lift.scaled(c) if f.lift is not None else None
    return ScalarField(f.grid, c * f.values, c * f.trace, lift, f.dirichlet)


def negate(f: ScalarField) -> ScalarField:
    return scale(f, -1.0)


# -- file format ------------------------------------------------------------------

_MAGIC = "#FIELD v1"


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_field(f: ScalarField, path) -> None:
    g = f.grid
    lines = [_MAGIC, " ".join([str(g.nx), str(g.ny)] + [_fmt(v) for v in (g.xmin, g.xmax, g.ymin, g.ymax)])]
    for row in f.values:
        lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path, domain: ConvexDomain | None = None, dirichlet: bool = False) -> ScalarField:
    with open(path) as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != _MAGIC:
        raise MalformedHeader(f"{path}: first line must be {_MAGIC!r}")
    if len(text) < 2:
        raise MalformedHeader(f"{path}: missing grid line")
    head = text[1].split()
    if len(head) != 6:
        raise MalformedHeader(f"{path}: grid line needs 'nx ny xmin xmax ymin ymax'")
    try:
        nx, ny = int(head[0]), int(head[1])
        xmin, xmax, ymin, ymax = (float(t) for t in head[2:])
    except ValueError as exc:
        raise MalformedHeader(f"{path}: {exc}") from None
    rows = [r for r in text[2:] if r.strip()]
    if len(rows) != ny:
        raise ValueCountMismatch(f"{path}: expected {ny} rows, found {len(rows)}")
    vals = np.empty((ny, nx))
    for j, r in enumerate(rows):
        toks = r.split()
        if len(toks) != nx:
            raise ValueCountMismatch(f"{path}: row {j} has {len(toks)} values, expected {nx}")
        vals[j] = [float(t) for t in toks]
    mask = np.isfinite(vals)
    grid = Grid(xmin, xmax, ymin, ymax, nx, ny, mask, domain)
    return ScalarField(grid, vals, dirichlet=dirichlet)
