"""Compiled inner loop of the deficit scan."""

import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "workqueue"

IDENTITY, POWER, LOG = 0, 1, 2


@njit(cache=True, inline="always")
def _apply(w, code, q):
    if code == POWER:
        w = max(w, 0.0)
        if q == 0.5:
            return np.sqrt(w)
        if q == 0.25:
            return np.sqrt(np.sqrt(w))
        if q == 1.0:
            return w
        return w ** q
    if code == LOG:
        if w > 0.0:
            return np.log(w)
        return np.nan
    return w


@njit(cache=True, parallel=True)
def scan_rows(pts, fnode, vals, cmap, xmin, ymin, h, lams, code, q, coef, a0, a1, offsets, out_val, out_lam):
    """Best ``C_{-f}`` over lambda for every pair ``(a, b)``, ``a0 <= a < a1 < ... b``.

    ``vals`` holds the node values that are interpolated (the base field when
    ``code`` is not IDENTITY); ``fnode`` the field values at the scanned nodes.
    Results for row ``a`` start at ``offsets[a - a0]``.
    """
    n = pts.shape[0]
    ncy = cmap.shape[0]
    ncx = cmap.shape[1]
    for r in prange(a1 - a0):
        a = a0 + r
        base = offsets[r]
        x1 = pts[a, 0]
        y1 = pts[a, 1]
        f1 = fnode[a]
        for b in range(a + 1, n):
            x3 = pts[b, 0]
            y3 = pts[b, 1]
            f3 = fnode[b]
            best = -np.inf
            bk = -1
            for k in range(lams.shape[0]):
                lam = lams[k]
                u = (lam * x3 + (1.0 - lam) * x1 - xmin) / h
                w = (lam * y3 + (1.0 - lam) * y1 - ymin) / h
                i = int(np.floor(u))
                j = int(np.floor(w))
                if i < 0:
                    i = 0
                elif i > ncx - 1:
                    i = ncx - 1
                if j < 0:
                    j = 0
                elif j > ncy - 1:
                    j = ncy - 1
                ci = cmap[j, i, 0]
                cj = cmap[j, i, 1]
                if ci < 0:
                    continue
                tx = u - ci
                ty = w - cj
                v00 = vals[cj, ci]
                v10 = vals[cj, ci + 1]
                v01 = vals[cj + 1, ci]
                v11 = vals[cj + 1, ci + 1]
                f2 = v00 + tx * (v10 - v00) + ty * (v01 - v00) + tx * ty * (v00 - v10 - v01 + v11)
                f2 = coef * _apply(f2, code, q)
                c = -f2 + lam * f3 + (1.0 - lam) * f1
                if c > best:
                    best = c
                    bk = k
            out_val[base + b - a - 1] = best
            out_lam[base + b - a - 1] = bk
