"""Named potentials, profiles and orthant potentials used by the CLI and tests.

Potentials come with default grids wide enough that the density has decayed
below double precision at any open grid edge.
"""

from __future__ import annotations

import math

import numpy as np

from .convex_core import ConvexGridFunction, GridFunction
from .measures import Profile
from .unconditional import UnconditionalPotential

POTENTIALS = ("gaussian", "laplace", "shifted_exponential", "power", "uniform_indicator", "custom_csv")
PROFILES = ("trapezoid_profile", "linear_cap_profile", "random_profile")
ORTHANT = ("unconditional_l1", "unconditional_gaussian", "unconditional_lp")
KINDS = POTENTIALS + PROFILES + ORTHANT

RANDOM_PROFILE_SLOPES = 256


def default_grid(kind: str, p: float = 2.0) -> tuple[float, float, int]:
    """``(lo, hi, samples)`` used when the caller gives no grid."""
    if kind == "gaussian":
        return -12.0, 12.0, 2**14 + 1
    if kind == "laplace":
        return -40.0, 40.0, 2**15 + 1
    if kind == "shifted_exponential":
        return -2.0, 38.0, 20481
    if kind == "power":
        r = math.ceil((40.0 * p) ** (1.0 / p))
        return -float(r), float(r), 2**14 + 1
    if kind == "uniform_indicator":
        return -2.0, 2.0, 4097
    if kind in ORTHANT:
        return 0.0, math.nan, 257
    raise ValueError(f"no default grid for {kind!r}")


def _grid(kind, grid, **kw):
    return default_grid(kind, **kw) if grid is None else grid


def gaussian(grid=None) -> ConvexGridFunction:
    lo, hi, n = _grid("gaussian", grid)
    return ConvexGridFunction.from_callable(lambda x: 0.5 * x * x, lo, hi, n)


def laplace(grid=None) -> ConvexGridFunction:
    lo, hi, n = _grid("laplace", grid)
    return ConvexGridFunction.from_callable(np.abs, lo, hi, n)


def shifted_exponential(grid=None) -> ConvexGridFunction:
    """``1 + x`` for ``x >= -1``, ``+inf`` to the left."""
    lo, hi, n = _grid("shifted_exponential", grid)
    h = (hi - lo) / (n - 1)
    return ConvexGridFunction.from_callable(lambda x: np.where(x >= -1.0 - 1e-9 * h, 1.0 + x, np.inf), lo, hi, n)


def power(p: float, grid=None) -> ConvexGridFunction:
    """``|x|^p / p``."""
    if p < 1:
        raise ValueError("power family needs p >= 1")
    lo, hi, n = _grid("power", grid, p=p)
    return ConvexGridFunction.from_callable(lambda x: np.abs(x) ** p / p, lo, hi, n)


def uniform_indicator(grid=None) -> ConvexGridFunction:
    """0 on ``[-1, 1]``; the grid should extend past the support."""
    lo, hi, n = _grid("uniform_indicator", grid)
    h = (hi - lo) / (n - 1)
    return ConvexGridFunction.from_callable(
        lambda x: np.where(np.abs(x) <= 1.0 + 1e-9 * h, 0.0, np.inf), lo, hi, n
    )


def custom_csv(path, grid=None) -> ConvexGridFunction:
    if grid is not None:
        raise ValueError("custom_csv takes its grid from the file")
    return ConvexGridFunction.from_grid(GridFunction.from_csv(path))


def _check_eps(eps):
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")


def trapezoid_profile(eps: float) -> Profile:
    """Rises to 1/2 on ``[0, eps]``, flat, falls on ``[1 - eps, 1]``."""
    _check_eps(eps)
    return Profile(np.array([0.0, eps, 1.0 - eps, 1.0]), np.array([0.0, 0.5, 0.5, 0.0]))


def linear_cap_profile(eps: float, mirror: bool = False) -> Profile:
    """``min(t, (1 - t) / eps)``, or its reflection ``t -> 1 - t``."""
    _check_eps(eps)
    peak = 1.0 / (1.0 + eps)
    knots = np.array([0.0, peak, 1.0])
    values = np.array([0.0, peak, 0.0])
    if mirror:
        knots, values = 1.0 - knots[::-1], values[::-1]
    return Profile(knots, values)


def mirrored(f: Profile) -> Profile:
    return Profile(1.0 - f.knots[::-1], f.values[::-1], f.boundary_violation)


def random_profile(rng, symmetric: bool = False, slopes: int = RANDOM_PROFILE_SLOPES) -> Profile:
    """Concave profile with sorted uniform slopes, shifted to integrate to zero.

    ``rng`` is a ``numpy.random.Generator`` or a seed.
    """
    rng = np.random.default_rng(rng)
    t = np.linspace(0.0, 1.0, slopes + 1)
    if symmetric:
        half = slopes // 2
        up = np.sort(rng.uniform(0.0, 1.0, half))[::-1]
        first = np.concatenate(([0.0], np.cumsum(up) / slopes))
        values = np.concatenate((first, first[-2::-1]))
    else:
        d = np.sort(rng.uniform(-1.0, 1.0, slopes))[::-1]
        d -= d.mean()
        values = np.concatenate(([0.0], np.cumsum(d) / slopes))
        values[-1] = 0.0
        values = np.maximum(values, 0.0)
    return Profile(t, values)


def _orthant(fn, n, samples, R):
    return UnconditionalPotential.from_function(fn, n, samples=samples, R=R)


def unconditional_l1(n: int = 2, samples: int = 257, R=None) -> UnconditionalPotential:
    return _orthant(lambda *x: sum(x), n, samples, R)


def unconditional_gaussian(n: int = 2, samples: int = 257, R=None) -> UnconditionalPotential:
    return _orthant(lambda *x: 0.5 * sum(xi * xi for xi in x), n, samples, R)


def unconditional_lp(p: float, n: int = 2, samples: int = 257, R=None) -> UnconditionalPotential:
    """The ``l^p`` norm restricted to the positive orthant."""
    if p < 1:
        raise ValueError("lp family needs p >= 1")
    return _orthant(lambda *x: sum(xi**p for xi in x) ** (1.0 / p), n, samples, R)
