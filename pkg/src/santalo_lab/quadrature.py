"""Composite Simpson quadrature on uniform grids."""

import numpy as np

from ._kernels import window_simpson_rows


def interval_integrals(f, h):
    """Per-interval integrals of sampled data, Simpson-consistent.

    The returned array has one entry per grid interval and sums to the
    composite Simpson value (with the standard one-interval correction when
    the interval count is odd). Cumulative sums give a fourth-order CDF.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    if n < 2:
        return np.zeros(0)
    if n == 2:
        return np.array([0.5 * h * (f[0] + f[1])])
    out = np.empty(n - 1)
    npairs = (n - 1) // 2
    a = f[0 : 2 * npairs : 2]
    b = f[1 : 2 * npairs : 2]
    c = f[2 : 2 * npairs + 1 : 2]
    first = h / 12.0 * (5.0 * a + 8.0 * b - c)
    pair = h / 3.0 * (a + 4.0 * b + c)
    out[0 : 2 * npairs : 2] = first
    out[1 : 2 * npairs : 2] = pair - first
    if (n - 1) % 2 == 1:
        out[-1] = h / 12.0 * (-f[-3] + 8.0 * f[-2] + 5.0 * f[-1])
    return out


def simpson(f, h):
    """Composite Simpson integral of uniformly sampled data."""
    return float(np.sum(interval_integrals(f, h)))


def window_simpson(G, h, axis=-1):
    """Simpson along ``axis`` restricted to each line's positive window."""
    G = np.moveaxis(np.asarray(G, dtype=float), axis, -1)
    shape = G.shape[:-1]
    flat = np.ascontiguousarray(G.reshape(-1, G.shape[-1]))
    out = np.empty(flat.shape[0])
    window_simpson_rows(flat, float(h), out)
    return out.reshape(shape)


def box_integral(G, steps):
    """Nested windowed Simpson of an n-dimensional sample array."""
    out = np.asarray(G, dtype=float)
    for h in reversed(steps):
        out = window_simpson(out, h, axis=-1)
    return float(out)
