"""One-dimensional log-concave measures and their quantile representations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convex_core import ConvexGridFunction, GridFunction
from .quadrature import interval_integrals

TRUNCATION = 1e-16
CONTINUITY_TOL = 1e-10
TAIL_REJECT = 1e-4


class TailError(ValueError):
    """A quantile table whose unresolved tails are too heavy to integrate."""


@dataclass(frozen=True, eq=False)
class LogConcaveMeasure:
    """Probability measure with density ``exp(-V) / Z`` on a 1D grid.

    Everything is stored on the truncated support window: grid indices
    ``window = (i0, i1)`` of the potential, the normalized density there and
    the CDF at those grid points.
    """

    potential: ConvexGridFunction
    log_normalizer: float
    support: tuple
    window: tuple
    density: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)
    truncated: tuple = (False, False)

    @property
    def step(self) -> float:
        return self.potential.step

    @property
    def x(self) -> np.ndarray:
        i0, i1 = self.window
        return self.potential.x[i0 : i1 + 1]

    @property
    def V(self) -> np.ndarray:
        i0, i1 = self.window
        return np.asarray(self.potential.values[i0 : i1 + 1])

    def expect(self, g) -> float:
        """``E[g(X)]`` for a callable or for samples ``g`` on :attr:`x` (Simpson)."""
        if callable(g):
            g = g(self.x)
        return float(np.sum(interval_integrals(np.asarray(g) * self.density, self.step)))

    def quantile(self, t) -> np.ndarray:
        """Generalized inverse of the CDF, by linear interpolation."""
        return np.interp(t, self.cdf, self.x)

    def cdf_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.cdf, left=0.0, right=1.0)

    def density_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.density, left=0.0, right=0.0)

    @property
    def essentially_continuous(self) -> bool:
        return essential_continuity_check(self)

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` (potential) and ``<stem>.json`` (sidecar)."""
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        self.potential.to_csv(csv_path)
        sidecar = {
            "log_normalizer": self.log_normalizer,
            "support": list(self.support),
            "essentially_continuous": self.essentially_continuous,
        }
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return csv_path, json_path

    @classmethod
    def load(cls, stem) -> "LogConcaveMeasure":
        stem = Path(stem)
        V = ConvexGridFunction.from_csv(stem.with_suffix(".csv"))
        return normalize(V)


def normalize(V: GridFunction) -> LogConcaveMeasure:
    """Build the probability measure ``exp(-V) dx / Z`` from a 1D potential.

    The density is truncated where it drops below ``1e-16`` of its maximum;
    ``log Z`` and the CDF use composite Simpson quadrature on the window.
    """
    if V.dim != 1:
        raise ValueError("normalize expects a 1D potential")
    if not isinstance(V, ConvexGridFunction):
        V = ConvexGridFunction.from_grid(V)
    i0, i1 = V.window()
    v = np.asarray(V.values[i0 : i1 + 1])
    vmin = float(v.min())
    keep = np.flatnonzero(v - vmin <= -np.log(TRUNCATION))
    k0, k1 = i0 + int(keep[0]), i0 + int(keep[-1])
    if k1 - k0 + 1 < 3:
        raise ValueError("potential has no mass: fewer than 3 samples carry density")
    rho = np.exp(-(np.asarray(V.values[k0 : k1 + 1]) - vmin))
    pieces = interval_integrals(rho, V.step)
    mass = float(pieces.sum())
    if not (mass > 0 and np.isfinite(mass)):
        raise ValueError("potential has no mass")
    cdf = np.concatenate(([0.0], np.cumsum(pieces))) / mass
    cdf[-1] = 1.0
    np.maximum.accumulate(cdf, out=cdf)
    x = V.x
    return LogConcaveMeasure(
        potential=V,
        log_normalizer=-vmin + float(np.log(mass)),
        support=(float(x[k0]), float(x[k1])),
        window=(k0, k1),
        density=rho / mass,
        cdf=cdf,
        truncated=(k0 > i0, k1 < i1),
    )


def entropy(m: LogConcaveMeasure) -> float:
    """``H = -log Z - E[V]``."""
    return -m.log_normalizer - m.expect(m.V)


def open_ends(m: LogConcaveMeasure) -> tuple[bool, bool]:
    """Whether each support end is an infinite tail rather than a boundary.

    A tail counts as infinite when the density was truncated there or when
    the support runs into the grid edge, where the potential is understood
    to continue.
    """
    i0, i1 = m.window
    last = m.potential.shape[0] - 1
    return (m.truncated[0] or i0 == 0, m.truncated[1] or i1 == last)


def essential_continuity_check(m: LogConcaveMeasure) -> bool:
    """True when the density vanishes at both ends of the support.

    Each end passes if it is an infinite tail (see :func:`open_ends`) or if
    the density there is at most ``1e-10`` of its maximum.
    """
    peak = float(m.density.max())
    ends = (m.density[0], m.density[-1])
    return all(o or d <= CONTINUITY_TOL * peak for o, d in zip(open_ends(m), ends))


@dataclass(frozen=True, eq=False)
class QuantileMeasure:
    """A 1D measure given by a step quantile function on ``(0, 1)``.

    ``values[j]`` is the quantile on ``(edges[j], edges[j+1]]``. With
    ``exact=True`` the step function *is* the quantile (finitely many atoms);
    otherwise ``values`` are midpoint samples of a continuous quantile and
    integrals are subject to the tail check.
    """

    edges: np.ndarray
    values: np.ndarray
    exact: bool = False

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.ndim != 1 or v.shape != (e.size - 1,) or v.size == 0:
            raise ValueError("need len(edges) == len(values) + 1")
        if abs(e[0]) > 1e-12 or abs(e[-1] - 1.0) > 1e-12 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must increase strictly from 0 to 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("quantile values must be finite")
        e = e.copy()
        e[0], e[-1] = 0.0, 1.0
        e.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_table(cls, table, resolution: int = 4096) -> "QuantileMeasure":
        """Sample a quantile function (callable or array) at uniform midpoints."""
        if callable(table):
            t = (np.arange(resolution) + 0.5) / resolution
            values = np.asarray(table(t), dtype=float)
        else:
            values = np.asarray(table, dtype=float)
            resolution = values.size
        return cls(np.linspace(0.0, 1.0, resolution + 1), values, exact=False)

    @classmethod
    def from_atoms(cls, atoms, weights=None) -> "QuantileMeasure":
        """Exact quantile of a discrete measure on the real line."""
        atoms = np.asarray(atoms, dtype=float).ravel()
        if weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        weights = np.asarray(weights, dtype=float).ravel()
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        order = np.argsort(atoms, kind="stable")
        cum = np.concatenate(([0.0], np.cumsum(weights[order])))
        cum /= cum[-1]
        return cls(cum, atoms[order], exact=True)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def t_grid(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    def quantile(self, t) -> np.ndarray:
        idx = np.searchsorted(self.edges, t, side="left") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def integral(self, g=lambda q: q) -> float:
        return float(np.sum(self.widths * g(self.values)))

    def tail_estimate(self, integrand=None) -> float:
        """Midpoint error estimate at the two end cells (0 for exact steps)."""
        if self.exact:
            return 0.0
        p = self.values if integrand is None else integrand
        return _end_cell_error(p, self.widths)


def _end_cell_error(p, widths):
    if p.size < 3:
        return float(np.sum(np.abs(p) * widths))
    left = abs(p[0] - 2.0 * p[1] + p[2]) * widths[0]
    right = abs(p[-1] - 2.0 * p[-2] + p[-3]) * widths[-1]
    return float(left + right)


def moment_measure(m: LogConcaveMeasure) -> QuantileMeasure:
    """Pushforward of ``m`` under the left derivative of its potential.

    On the grid ``V'`` is the constant slope of each cell, so the pushforward
    is an exact step quantile: the cell slopes, weighted by cell masses.
    Cells with vanishing mass are merged away.
    """
    slopes = np.diff(m.V) / m.step
    mass = np.diff(m.cdf)
    keep = mass > 0
    edges = np.concatenate(([0.0], np.cumsum(mass[keep])))
    edges /= edges[-1]
    return QuantileMeasure(edges, slopes[keep], exact=True)


@dataclass(frozen=True, eq=False)
class Profile:
    """Piecewise-linear function on ``[0, 1]`` given at increasing knots."""

    knots: np.ndarray
    values: np.ndarray
    boundary_violation: bool = False

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != f.shape or t.size < 2:
            raise ValueError("knots and values must be 1D of equal length")
        if abs(t[0]) > 1e-12 or abs(t[-1] - 1.0) > 1e-12 or np.any(np.diff(t) <= 0):
            raise ValueError("knots must increase strictly from 0 to 1")
        if not np.all(np.isfinite(f)):
            raise ValueError("profile values must be finite")
        scale = max(1.0, float(np.abs(f).max()))
        if np.any(f < -1e-12 * scale):
            raise ValueError("profile values must be nonnegative")
        t, f = t.copy(), np.maximum(f, 0.0)
        t[0], t[-1] = 0.0, 1.0
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "values", f)

    @classmethod
    def from_function(cls, fn, resolution: int = 4096, extra_knots=()) -> "Profile":
        t = np.union1d(np.linspace(0.0, 1.0, resolution + 1), np.asarray(extra_knots, dtype=float))
        return cls(t, fn(t))

    @property
    def derivative(self) -> np.ndarray:
        """Slope on each cell (the left derivative at the cell's right knot)."""
        return np.diff(self.values) / np.diff(self.knots)

    @property
    def vanishing(self) -> bool:
        return self.values[0] == 0.0 and self.values[-1] == 0.0

    def is_concave(self, tol: float = 1e-6) -> bool:
        """Consecutive slopes nonincreasing, up to ``tol * max f`` in value units."""
        d = self.derivative
        if d.size < 2:
            return True
        h = np.diff(self.knots)
        jump = (d[1:] - d[:-1]) * np.minimum(h[1:], h[:-1])
        return bool(np.all(jump <= tol * max(float(self.values.max()), 1e-300)))

    @property
    def concave(self) -> bool:
        return self.is_concave()

    def is_symmetric(self, tol: float = 1e-8) -> bool:
        if not np.allclose(self.knots, 1.0 - self.knots[::-1], atol=1e-12, rtol=0):
            return False
        return bool(np.max(np.abs(self.values - self.values[::-1])) <= tol)

    @property
    def symmetric(self) -> bool:
        return self.is_symmetric()

    def __call__(self, t):
        return np.interp(t, self.knots, self.values)

    def refine(self, knots) -> "Profile":
        """Same piecewise-linear function re-expressed on the union of knots."""
        t = np.union1d(self.knots, np.clip(np.asarray(knots, dtype=float), 0.0, 1.0))
        return Profile(t, self(t), self.boundary_violation)

    def integral_log(self) -> float:
        """Exact ``∫_0^1 log f`` for the piecewise-linear ``f``."""
        return float(np.sum(np.diff(self.knots) * _mean_log(self.values[:-1], self.values[1:])))

    def require_admissible(self, *, vanishing: bool = True):
        if not self.concave:
            raise ValueError("profile is not concave")
        if vanishing and not self.vanishing:
            raise ValueError("profile must vanish at 0 and 1")
        if np.any(self.values[1:-1] <= 0):
            raise ValueError("degenerate profile: vanishes in the interior")


def _mean_log(a, b):
    """Average of ``log`` over a linear segment from ``a`` to ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    out = np.full(lo.shape, -np.inf)
    pos = hi > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (hi - lo) / lo
        ratio = np.where(r > 1e-8, np.log1p(r) / r, 1.0 - 0.5 * r)
        ratio = np.where(lo > 0, ratio, 0.0)
        out[pos] = np.log(hi[pos]) - 1.0 + ratio[pos]
    return out


def profile(m: LogConcaveMeasure, resolution: int = 4096) -> Profile:
    """Profile ``t -> density(F^{-1}(t))`` on a uniform grid of ``[0, 1]``.

    Endpoints are set to zero when the density vanishes at the support
    ends; otherwise the boundary density is kept and the profile is flagged.
    """
    if abs(m.cdf[-1] - 1.0) > 1e-10 or abs(m.cdf[0]) > 1e-10:
        raise ValueError("measure is not normalized")
    t = np.linspace(0.0, 1.0, resolution + 1)
    f = m.density_at(m.quantile(t))
    ok = essential_continuity_check(m)
    if ok:
        f[0] = f[-1] = 0.0
    else:
        f[0], f[-1] = m.density[0], m.density[-1]
    return Profile(t, f, boundary_violation=not ok)


def _profile_positions(f: Profile):
    """Knot positions ``x(t_k)`` with ``x(1/2) = 0`` and ``dx/dt = 1/f``."""
    p = f.refine([0.5])
    t, v = p.knots, p.values
    a, b = v[:-1], v[1:]
    h = np.diff(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(b / a) / (b - a)
        dx = np.where(np.abs(b - a) > 1e-12 * np.maximum(a, b), h * lr, 2.0 * h / (a + b))
    dx[(a == 0) | (b == 0)] = np.inf
    mid = int(np.flatnonzero(t == 0.5)[0])
    right = np.cumsum(dx[mid:])
    left = -np.cumsum(dx[:mid][::-1])[::-1]
    return p, np.concatenate((left, [0.0], right))


def measure_from_profile(f: Profile, samples: int = 2**14 + 1, depth: float = 40.0) -> LogConcaveMeasure:
    """Rebuild the log-concave measure whose profile is ``f``.

    Inside each profile cell the potential is affine in ``x``; a cell
    touching a zero endpoint becomes an affine tail, extended until the
    potential has risen by ``depth`` above its minimum. The median is
    placed at the origin.
    """
    f.require_admissible(vanishing=False)
    p, xk = _profile_positions(f)
    t, v = p.knots, p.values
    slopes = -p.derivative  # V' on each cell
    inner = np.isfinite(xk)
    xs, Vs = xk[inner], -np.log(v[inner])
    vmin = float(Vs.min())

    def tail_end(x_edge, V_edge, slope, direction):
        if slope * direction <= 0:
            raise ValueError("degenerate profile: tail does not decay")
        return x_edge + direction * max(0.0, vmin + depth - V_edge) / abs(slope)

    left_open, right_open = v[0] == 0.0, v[-1] == 0.0
    L = tail_end(xs[0], Vs[0], slopes[0], -1) if left_open else xs[0]
    R = tail_end(xs[-1], Vs[-1], slopes[-1], +1) if right_open else xs[-1]
    if f.is_symmetric() and left_open and right_open:
        R = max(R, -L)
        L = -R
    margin = 4
    n_inner = samples - 1 - margin * ((not left_open) + (not right_open))
    h = (R - L) / n_inner
    lo = L - (0 if left_open else margin * h)
    grid = lo + h * np.arange(samples)
    knots_x = np.concatenate(([L] if left_open else [], xs, [R] if right_open else []))
    knots_V = np.concatenate(
        ([Vs[0] + slopes[0] * (L - xs[0])] if left_open else [],
         Vs,
         [Vs[-1] + slopes[-1] * (R - xs[-1])] if right_open else [])
    )
    vals = np.interp(grid, knots_x, knots_V)
    first = 0 if left_open else margin
    last = samples - 1 if right_open else samples - 1 - margin
    vals[:first] = np.inf
    vals[last + 1 :] = np.inf
    if not left_open:
        vals[first] = knots_V[0]
    if not right_open:
        vals[last] = knots_V[-1]
    V = ConvexGridFunction(grid[0], grid[-1], vals, convexity_tol=1e-7)
    return normalize(V)


__all__ = [
    "LogConcaveMeasure",
    "QuantileMeasure",
    "Profile",
    "TailError",
    "normalize",
    "entropy",
    "essential_continuity_check",
    "moment_measure",
    "profile",
    "measure_from_profile",
]
