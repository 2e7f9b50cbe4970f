"""Compiled inner loops shared by the grid modules.

Everything here works on plain float64/int64 arrays so the callers stay in
numpy land. ``np.inf`` in a value array marks a point outside the domain.
"""

import numpy as np
from numba import njit

_EPS = np.finfo(np.float64).eps


@njit(cache=True)
def lower_hull(x, f, hull):
    """Indices of the lower convex hull of the finite points ``(x[i], f[i])``.

    ``x`` must be strictly increasing. Collinear points are kept so that a
    tie between equal slopes always resolves to the leftmost vertex.
    Returns the number of vertices written to ``hull``.
    """
    m = 0
    for i in range(x.shape[0]):
        fi = f[i]
        if fi == np.inf:
            continue
        while m >= 2:
            a = hull[m - 2]
            b = hull[m - 1]
            cross = (x[b] - x[a]) * (fi - f[a]) - (f[b] - f[a]) * (x[i] - x[a])
            if cross < 0.0:
                m -= 1
            else:
                break
        hull[m] = i
        m += 1
    return m


@njit(cache=True)
def _conjugate_row(x, f, y, out, arg, open_lo, hull):
    m = lower_hull(x, f, hull)
    ny = y.shape[0]
    if m == 0:
        for j in range(ny):
            out[j] = -np.inf
            arg[j] = -1
        return
    k = 0
    for j in range(ny):
        yj = y[j]
        while k < m - 1:
            a = hull[k]
            b = hull[k + 1]
            dx = x[b] - x[a]
            s = (f[b] - f[a]) / dx
            tol = 1e-12 * (1.0 + abs(s)) + 16.0 * _EPS * (abs(f[a]) + abs(f[b])) / dx
            if yj > s + tol:
                k += 1
            elif open_lo and a == 0 and yj >= s - tol:
                # a tie at an open left edge belongs to the interior vertex
                k += 1
            else:
                break
        i = hull[k]
        out[j] = x[i] * yj - f[i]
        arg[j] = i


@njit(cache=True)
def conjugate_rows(x, F, y, out, arg, open_lo):
    """Discrete conjugate of every row of ``F``: ``max_i x[i]*y - F[r, i]``.

    ``y`` must be sorted ascending. ``arg`` receives the maximizing column
    (leftmost on ties, -1 for an all-infinite row). Linear in row length
    plus dual length.
    """
    hull = np.empty(x.shape[0], dtype=np.int64)
    for r in range(F.shape[0]):
        _conjugate_row(x, F[r], y, out[r], arg[r], open_lo, hull)


@njit(cache=True)
def window_simpson_rows(G, h, out):
    """Composite Simpson over the run of positive entries of each row.

    Rows of ``exp(-V)`` vanish outside the domain of ``V``; integrating only
    across the positive window keeps a jump at the domain edge from being
    smeared by the Simpson weights.
    """
    n = G.shape[1]
    for r in range(G.shape[0]):
        row = G[r]
        i0 = 0
        while i0 < n and row[i0] <= 0.0:
            i0 += 1
        if i0 == n:
            out[r] = 0.0
            continue
        i1 = i0
        while i1 + 1 < n and row[i1 + 1] > 0.0:
            i1 += 1
        npts = i1 - i0 + 1
        if npts == 1:
            out[r] = 0.0
        elif npts == 2:
            out[r] = 0.5 * h * (row[i0] + row[i1])
        else:
            last = i1
            acc = 0.0
            if (npts - 1) % 2 == 1:
                acc += h / 12.0 * (-row[i1 - 2] + 8.0 * row[i1 - 1] + 5.0 * row[i1])
                last = i1 - 1
            s = row[i0] + row[last]
            for i in range(i0 + 1, last):
                s += (4.0 if (i - i0) % 2 == 1 else 2.0) * row[i]
            out[r] = acc + s * h / 3.0


@njit(cache=True)
def min_plus_convolution(f, g, out):
    """``out[m] = min_{i+j=m} f[i] + g[j]`` skipping infinite entries."""
    for m in range(out.shape[0]):
        out[m] = np.inf
    for i in range(f.shape[0]):
        fi = f[i]
        if fi == np.inf:
            continue
        for j in range(g.shape[0]):
            gj = g[j]
            if gj == np.inf:
                continue
            v = fi + gj
            if v < out[i + j]:
                out[i + j] = v
