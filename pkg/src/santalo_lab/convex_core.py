"""Convex functions sampled on uniform box grids.

Values are float64 arrays with ``np.inf`` marking points outside the domain.
A grid edge on which a function is finite is treated as *open*: the function
is understood to continue past the grid, so the discrete conjugate there is
a truncation. Edges listed as closed are genuine domain boundaries.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels

MAX_DIM = 3


class DegenerateFunctionError(ValueError):
    """Raised when a function has no finite sample to work with."""


def _as_tuple(v, dim=None):
    if np.ndim(v) == 0:
        v = (float(v),) * (dim or 1)
    return tuple(float(t) for t in v)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Extended-real function on the box ``[lo, hi]`` sampled uniformly.

    Args:
        lo: Lower corner (scalar in 1D).
        hi: Upper corner (scalar in 1D).
        values: Samples with shape ``(n_1, ..., n_d)``; ``np.inf`` is the
            out-of-domain sentinel.
    """

    lo: tuple
    hi: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        dim = values.ndim
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dimension must be 1..{MAX_DIM}, got {dim}")
        lo, hi = _as_tuple(self.lo, dim), _as_tuple(self.hi, dim)
        if len(lo) != dim or len(hi) != dim:
            raise ValueError("lo/hi length does not match the value array")
        for a, b, n in zip(lo, hi, values.shape):
            if not b > a:
                raise ValueError("grid requires hi > lo")
            if n < 3:
                raise ValueError("at least 3 samples per axis are required")
        if np.isnan(values).any():
            raise ValueError("NaN in grid values")
        if (values == -np.inf).any():
            raise ValueError("-inf is not a valid grid value")
        finite = np.isfinite(values)
        if not finite.any():
            raise DegenerateFunctionError("degenerate function: no finite values")
        if dim == 1:
            idx = np.flatnonzero(finite)
            if idx[-1] - idx[0] + 1 != idx.size:
                raise ValueError("finite window must be contiguous")
        values.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)

    @classmethod
    def _trusted(cls, lo, hi, values, **extra):
        # skips validation for arrays produced by this module
        obj = object.__new__(cls)
        values = np.asarray(values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(obj, "lo", _as_tuple(lo, values.ndim))
        object.__setattr__(obj, "hi", _as_tuple(hi, values.ndim))
        object.__setattr__(obj, "values", values)
        for k, v in extra.items():
            object.__setattr__(obj, k, v)
        return obj

    @classmethod
    def from_callable(cls, fn, lo, hi, samples, dim=None, **kwargs):
        """Sample ``fn`` on a uniform grid; ``fn`` receives one array per axis."""
        if dim is None:
            lens = [len(v) for v in (lo, hi, samples) if np.ndim(v) == 1]
            dim = max(lens) if lens else 1
        lo_t, hi_t = _as_tuple(lo, dim), _as_tuple(hi, dim)
        ns = (int(samples),) * dim if np.ndim(samples) == 0 else tuple(int(s) for s in samples)
        axes = [np.linspace(a, b, n) for a, b, n in zip(lo_t, hi_t, ns)]
        mesh = np.meshgrid(*axes, indexing="ij")
        with np.errstate(all="ignore"):
            vals = np.asarray(fn(*mesh), dtype=float)
        vals = np.broadcast_to(vals, mesh[0].shape)
        return cls(lo_t, hi_t, vals, **kwargs)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def steps(self) -> tuple:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lo, self.hi, self.shape))

    @property
    def step(self) -> float:
        """Grid step of a 1D function (the first axis otherwise)."""
        return self.steps[0]

    def axis(self, i: int = 0) -> np.ndarray:
        return np.linspace(self.lo[i], self.hi[i], self.shape[i])

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def window(self) -> tuple[int, int]:
        """Index range ``[i0, i1]`` of the finite window (1D)."""
        idx = np.flatnonzero(self.finite)
        return int(idx[0]), int(idx[-1])

    def __call__(self, x):
        """Linear interpolation in 1D; ``+inf`` outside the finite window."""
        if self.dim != 1:
            return self.evaluate(np.atleast_2d(x))
        x = np.asarray(x, dtype=float)
        if np.any((x < self.lo[0] - 1e-12) | (x > self.hi[0] + 1e-12)):
            raise ValueError("evaluation point outside the grid")
        i0, i1 = self.window()
        xs = self.x
        out = np.full(x.shape, np.inf)
        a, b = xs[i0], xs[i1]
        tol = 1e-9 * self.step
        inside = (x >= a - tol) & (x <= b + tol)
        if i1 > i0:
            out[inside] = np.interp(x[inside], xs[i0 : i1 + 1], self.values[i0 : i1 + 1])
        else:
            out[inside] = self.values[i0]
        return out if out.ndim else float(out)

    def evaluate(self, points) -> np.ndarray:
        """Multilinear interpolation at ``points`` of shape ``(m, dim)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError("point dimension does not match the grid")
        idx, frac = [], []
        for d in range(self.dim):
            h = self.steps[d]
            u = (pts[:, d] - self.lo[d]) / h
            if np.any(u < -1e-9) or np.any(u > self.shape[d] - 1 + 1e-9):
                raise ValueError("evaluation point outside the grid")
            i = np.clip(np.floor(u).astype(int), 0, self.shape[d] - 2)
            idx.append(i)
            frac.append(np.clip(u - i, 0.0, 1.0))
        out = np.zeros(pts.shape[0])
        for corner in itertools.product((0, 1), repeat=self.dim):
            w = np.ones(pts.shape[0])
            sel = []
            for d, c in enumerate(corner):
                w = w * (frac[d] if c else 1.0 - frac[d])
                sel.append(idx[d] + c)
            v = self.values[tuple(sel)]
            with np.errstate(invalid="ignore"):
                contrib = np.where(w > 0, w * v, 0.0)
            out += contrib
        return out

    def to_csv(self, path=None) -> str:
        """Serialize as CSV (``x,value`` or ``x1,..,xd,value``)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = ["x"] if self.dim == 1 else [f"x{i + 1}" for i in range(self.dim)]
        w.writerow(names + ["value"])
        axes = [self.axis(i) for i in range(self.dim)]
        for ij in itertools.product(*(range(n) for n in self.shape)):
            row = [_fmt(axes[d][ij[d]]) for d in range(self.dim)]
            w.writerow(row + [_fmt(self.values[ij])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, **kwargs):
        """Parse CSV text or a file path written by :meth:`to_csv`."""
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        dim = len(header) - 1
        if dim < 1 or header[-1].strip() != "value":
            raise ValueError("CSV header must end with 'value'")
        data = np.array([[float(c) for c in r] for r in body])
        coords = [np.unique(data[:, d]) for d in range(dim)]
        shape = tuple(c.size for c in coords)
        if int(np.prod(shape)) != data.shape[0]:
            raise ValueError("CSV rows do not form a full box grid")
        order = np.lexsort(tuple(data[:, d] for d in reversed(range(dim))))
        values = data[order, -1].reshape(shape)
        return cls(tuple(c[0] for c in coords), tuple(c[-1] for c in coords), values, **kwargs)


def _fmt(v: float) -> str:
    return "inf" if v == np.inf else f"{v:.17g}"


def _second_difference_ok(values, tol):
    dim = values.ndim
    directions = [tuple(int(i == d) for i in range(dim)) for d in range(dim)]
    for a, b in itertools.combinations(range(dim), 2):
        for sign in (1, -1):
            directions.append(tuple(1 if i == a else (sign if i == b else 0) for i in range(dim)))
    for v in directions:
        lo = tuple(slice(max(0, -2 * c), n - max(0, 2 * c)) for c, n in zip(v, values.shape))
        mid = tuple(slice(s.start + c, s.stop + c) for s, c in zip(lo, v))
        hi = tuple(slice(s.start + 2 * c, s.stop + 2 * c) for s, c in zip(lo, v))
        a, m, b = values[lo], values[mid], values[hi]
        ok = np.isfinite(a) & np.isfinite(m) & np.isfinite(b)
        if not ok.any():
            continue
        d2 = a[ok] + b[ok] - 2.0 * m[ok]
        if np.any(d2 < -tol * (1.0 + np.abs(m[ok]))):
            return False
    return True


@dataclass(frozen=True, eq=False)
class ConvexGridFunction(GridFunction):
    """A :class:`GridFunction` whose samples are discretely convex."""

    convexity_tol: float = field(default=1e-9)

    def __post_init__(self):
        super().__post_init__()
        if self.convexity_tol < 0:
            raise ValueError("convexity_tol must be nonnegative")
        if not _second_difference_ok(self.values, self.convexity_tol):
            raise ValueError("values are not discretely convex")

    @classmethod
    def from_grid(cls, g: GridFunction, convexity_tol: float = 1e-9) -> "ConvexGridFunction":
        return cls(g.lo, g.hi, g.values, convexity_tol=convexity_tol)


def lower_hull(x, f) -> np.ndarray:
    """Vertex indices of the lower convex hull of finite samples."""
    x = np.ascontiguousarray(x, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    hull = np.empty(x.size, dtype=np.int64)
    m = _kernels.lower_hull(x, f, hull)
    return hull[:m].copy()


def slope_range(f: GridFunction, axis: int = 0) -> tuple[float, float]:
    """Min and max one-sided finite-difference slopes along ``axis``."""
    v = np.moveaxis(f.values, axis, -1)
    with np.errstate(invalid="ignore"):
        d = np.diff(v, axis=-1) / f.steps[axis]
    d = d[np.isfinite(d)]
    if d.size == 0:
        return 0.0, 0.0
    return float(d.min()), float(d.max())


def default_dual_box(f: GridFunction):
    """Dual box ``[min slope - 1, max slope + 1]`` per axis."""
    lo, hi = [], []
    for d in range(f.dim):
        a, b = slope_range(f, d)
        lo.append(a - 1.0)
        hi.append(b + 1.0)
    return tuple(lo), tuple(hi), f.shape


def _per_axis(v, dim, cast=float):
    if v is None:
        return None
    if np.ndim(v) == 0:
        return (cast(v),) * dim
    v = tuple(cast(t) for t in v)
    if len(v) != dim:
        raise ValueError("per-axis argument has the wrong length")
    return v


def _closed_faces(f, closed):
    if closed is None:
        return tuple((False, False) for _ in range(f.dim))
    if isinstance(closed, bool):
        return tuple((closed, closed) for _ in range(f.dim))
    closed = tuple(closed)
    if f.dim == 1 and len(closed) == 2 and all(isinstance(c, (bool, np.bool_)) for c in closed):
        return (tuple(bool(c) for c in closed),)
    return tuple((bool(a), bool(b)) for a, b in closed)


def legendre_transform(
    f: GridFunction,
    dual_lo=None,
    dual_hi=None,
    dual_samples=None,
    *,
    extend: bool = False,
    closed=None,
    return_argmax: bool = False,
):
    """Discrete Fenchel conjugate ``g(y) = max_x x.y - f(x)`` over grid points.

    Each 1D pass builds the lower hull of the samples and merges its slopes
    with the sorted dual grid, so the cost is linear per axis sweep. Higher
    dimensions are handled by nested per-axis sweeps.

    Args:
        f: Function to conjugate.
        dual_lo, dual_hi, dual_samples: Dual grid (scalars or per-axis);
            defaults to ``[min slope - 1, max slope + 1]`` with the primal
            sample count.
        extend: When true, dual points whose maximizer sits on an open grid
            face are set to ``+inf``. This is the conjugate of ``f``
            continued affinely past the grid instead of its truncation.
        closed: Faces that are true domain boundaries. ``None`` means every
            face is open; in 1D a pair ``(left, right)`` is accepted,
            otherwise one pair per axis.
        return_argmax: Also return the integer maximizer indices with
            shape ``(dim, *dual_shape)``.

    Returns:
        A :class:`ConvexGridFunction` on the dual grid.
    """
    dim = f.dim
    dlo, dhi, dn = default_dual_box(f)
    dlo = _per_axis(dual_lo, dim) or dlo
    dhi = _per_axis(dual_hi, dim) or dhi
    dn = _per_axis(dual_samples, dim, int) or dn
    for a, b, n in zip(dlo, dhi, dn):
        if not b > a:
            raise ValueError("dual grid requires dual_hi > dual_lo")
        if n < 3:
            raise ValueError("dual grid needs at least 3 samples per axis")
    if not np.isfinite(f.values).any():
        raise DegenerateFunctionError("degenerate function")
    faces = _closed_faces(f, closed)

    h = np.asarray(f.values, dtype=float)
    args = []
    # sweep the last axis first; later sweeps conjugate -h in the next axis
    for ax in reversed(range(dim)):
        x = f.axis(ax)
        y = np.linspace(dlo[ax], dhi[ax], dn[ax])
        rows = h if ax == dim - 1 else -h
        rows = np.moveaxis(rows, ax, -1)
        lead = rows.shape[:-1]
        flat = np.ascontiguousarray(rows.reshape(-1, rows.shape[-1]))
        out = np.empty((flat.shape[0], y.size))
        arg = np.empty((flat.shape[0], y.size), dtype=np.int64)
        open_lo = bool(extend and not faces[ax][0])
        _kernels.conjugate_rows(x, flat, y, out, arg, open_lo)
        h = np.moveaxis(out.reshape(lead + (y.size,)), -1, ax)
        args.insert(0, np.moveaxis(arg.reshape(lead + (y.size,)), -1, ax))

    argmax = _compose_argmax(args, dn) if (extend or return_argmax) else None
    values = h
    if extend:
        values = values.copy()
        for ax in range(dim):
            lo_closed, hi_closed = faces[ax]
            if not lo_closed:
                values[argmax[ax] == 0] = np.inf
            if not hi_closed:
                values[argmax[ax] == f.shape[ax] - 1] = np.inf
        if not np.isfinite(values).any():
            raise DegenerateFunctionError("degenerate function: conjugate is +inf on the dual grid")
    g = ConvexGridFunction._trusted(dlo, dhi, values, convexity_tol=1e-9)
    if return_argmax:
        return g, argmax
    return g


def _compose_argmax(args, dual_shape):
    # args[ax] holds the axis-ax maximizer as a function of
    # (x_0..x_{ax-1}, y_ax..y_{d-1}); resolve them front to back.
    dim = len(args)
    grids = np.meshgrid(*(np.arange(n) for n in dual_shape), indexing="ij", sparse=True)
    chosen = []
    for ax in range(dim):
        index = tuple(chosen) + tuple(grids[ax:])
        a = args[ax][index]
        chosen.append(np.maximum(a, 0))
    return np.stack(chosen)


def conjugate_at(f: GridFunction, y) -> np.ndarray:
    """Truncated discrete conjugate of ``f`` at arbitrary points ``y``.

    In 1D ``y`` is a vector; otherwise an ``(m, dim)`` array evaluated by
    brute force over the grid samples.
    """
    if f.dim == 1:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        order = np.argsort(y, kind="stable")
        out = np.empty((1, y.size))
        arg = np.empty((1, y.size), dtype=np.int64)
        F = np.ascontiguousarray(f.values[None, :])
        _kernels.conjugate_rows(f.x, F, np.ascontiguousarray(y[order]), out, arg, False)
        res = np.empty(y.size)
        res[order] = out[0]
        return res
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    mesh = np.meshgrid(*(f.axis(i) for i in range(f.dim)), indexing="ij")
    fin = np.isfinite(f.values)
    X = np.stack([m[fin] for m in mesh], axis=1)
    V = f.values[fin]
    return np.array([np.max(X @ q - V) for q in pts])


def _commensurate(h1, h2):
    r = max(h1, h2) / min(h1, h2)
    ri = round(r)
    if abs(r - ri) > 1e-9 * r or ri < 1:
        raise ValueError("incommensurable grids: step ratio is not an integer")
    return ri


def _upsample(f: GridFunction, ratio: int) -> np.ndarray:
    v = np.full((f.shape[0] - 1) * ratio + 1, np.inf)
    v[::ratio] = f.values
    return v


def inf_convolution(f: GridFunction, g: GridFunction) -> GridFunction:
    """Discrete infimal convolution ``min_{x=y+z} f(y) + g(z)`` (1D).

    The result lives on the sum grid ``[lo_f + lo_g, hi_f + hi_g]`` with the
    finer of the two steps. A coarser grid with an integer step ratio is
    refined by inserting ``+inf`` samples, so only genuinely representable
    pairs enter the minimum.
    """
    if f.dim != 1 or g.dim != 1:
        raise ValueError("inf_convolution supports 1D grids only")
    if not (np.isfinite(f.values).any() or np.isfinite(g.values).any()):
        raise DegenerateFunctionError("both functions are identically +inf")
    hf, hg = f.step, g.step
    ratio = _commensurate(hf, hg)
    if hf > hg:
        fv, gv, h = _upsample(f, ratio), np.asarray(g.values), hg
    elif hg > hf:
        fv, gv, h = np.asarray(f.values), _upsample(g, ratio), hf
    else:
        fv, gv, h = np.asarray(f.values), np.asarray(g.values), hf
    # clip both to their finite windows to keep the double loop tight
    fi = np.flatnonzero(np.isfinite(fv))
    gi = np.flatnonzero(np.isfinite(gv))
    out = np.full(fv.size + gv.size - 1, np.inf)
    sub = np.empty(fi[-1] - fi[0] + gi[-1] - gi[0] + 1)
    _kernels.min_plus_convolution(
        np.ascontiguousarray(fv[fi[0] : fi[-1] + 1]), np.ascontiguousarray(gv[gi[0] : gi[-1] + 1]), sub
    )
    out[fi[0] + gi[0] : fi[0] + gi[0] + sub.size] = sub
    lo = f.lo[0] + g.lo[0]
    return GridFunction._trusted(lo, lo + h * (out.size - 1), out)


def moreau_envelope_points(V: GridFunction, k: float, x) -> np.ndarray:
    """Exact ``min_p V(p) + k (x - p)^2 / 2`` for the piecewise-linear ``V``.

    ``V`` is replaced by the linear interpolant of its lower hull on the
    finite window (``+inf`` outside). The proximal point is located by
    interleaving the breakpoints ``y_j + s_j / k`` and ``y_{j+1} + s_j / k``.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    xs, vs = V.x, np.asarray(V.values)
    hull = lower_hull(xs, vs)
    yv, fv = xs[hull], vs[hull]
    x = np.asarray(x, dtype=float)
    if hull.size == 1:
        return fv[0] + 0.5 * k * (x - yv[0]) ** 2
    s = np.diff(fv) / np.diff(yv)
    left = yv[:-1] + s / k
    right = yv[1:] + s / k
    breaks = np.empty(2 * s.size)
    breaks[0::2], breaks[1::2] = left, right
    pos = np.searchsorted(breaks, x, side="right")
    on_segment = pos % 2 == 1
    j = pos // 2
    jv = np.minimum(j, hull.size - 1)
    js = np.minimum(j, s.size - 1)
    p = np.where(on_segment, x - s[js] / k, yv[jv])
    val = np.where(on_segment, fv[js] + s[js] * (p - yv[js]), fv[jv])
    return val + 0.5 * k * (x - p) ** 2


def moreau_yosida(V: GridFunction, k: float) -> ConvexGridFunction:
    """Regularization ``V_k = V [] (k|.|^2/2) + |.|^2/(2k)`` on the grid of ``V``.

    The envelope is exact for the piecewise-linear interpolant of ``V``, so
    ``V_k`` is finite on the whole grid even when ``V`` is an indicator.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    if V.dim != 1:
        raise ValueError("moreau_yosida supports 1D grids only")
    x = V.x
    vals = moreau_envelope_points(V, k, x) + x * x / (2.0 * k)
    return ConvexGridFunction._trusted(V.lo, V.hi, vals, convexity_tol=1e-9)


def young_gap(f: GridFunction, fstar: GridFunction, x, y) -> float:
    """``f(x) + f*(y) - x.y`` with both functions interpolated on their grids."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if f.dim == 1:
        fx, gy = f(x[0]), fstar(y[0])
    else:
        fx, gy = f.evaluate(x[None, :])[0], fstar.evaluate(y[None, :])[0]
    return float(fx + gy - float(x @ y))


def quadratic(lo=-8.0, hi=8.0, samples=4097, scale=1.0) -> ConvexGridFunction:
    """Convenience sampler for ``scale * x^2 / 2`` on a 1D grid."""
    return ConvexGridFunction.from_callable(lambda x: 0.5 * scale * x * x, lo, hi, samples)


def indicator(lo, hi, a, b, samples) -> GridFunction:
    """0 on ``[a, b]`` and ``+inf`` elsewhere, on the grid ``[lo, hi]``."""
    def fn(x):
        h = (hi - lo) / (samples - 1)
        return np.where((x >= a - 1e-9 * h) & (x <= b + 1e-9 * h), 0.0, np.inf)

    return ConvexGridFunction.from_callable(fn, lo, hi, samples)


__all__: Sequence[str] = [
    "GridFunction",
    "ConvexGridFunction",
    "DegenerateFunctionError",
    "legendre_transform",
    "conjugate_at",
    "inf_convolution",
    "moreau_yosida",
    "moreau_envelope_points",
    "young_gap",
    "lower_hull",
    "slope_range",
    "default_dual_box",
    "quadratic",
    "indicator",
]
