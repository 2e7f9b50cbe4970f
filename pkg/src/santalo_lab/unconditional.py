"""Orthant integrals behind the unconditional induction in dimensions 2 and 3.

For ``V`` restricted to the positive orthant and ``t > 0``:

* ``a(t) = ∫ e^{-tV}``, ``α(t) = ∫ e^{-tV*}`` over ``R_+^n``;
* ``a_i``, ``α_i`` are the same integrals over the face ``x_i = 0``;
* ``F(t) = t^{2n} a(t) α(t)``, which should satisfy ``F' >= n t^{n-1}``
  and ``F(1) >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex_core import ConvexGridFunction, legendre_transform
from .quadrature import box_integral

DEPTH = 40.0


@dataclass(frozen=True, eq=False)
class UnconditionalPotential:
    """A convex potential sampled on the orthant box ``[0, R]^n``."""

    V: ConvexGridFunction
    R: float
    monotone_flag: bool

    @property
    def n(self) -> int:
        return self.V.dim

    @classmethod
    def from_function(cls, fn, n: int, samples: int = 257, R=None, depth: float = DEPTH):
        """Sample ``fn`` (one array argument per axis) on ``[0, R]^n``.

        ``R`` defaults to the smallest radius where ``V`` has risen by
        ``depth`` along every axis, so ``e^{-V}`` is negligible past the box.
        """
        if n not in (2, 3):
            raise ValueError("unconditional checks support n in {2, 3}")
        if R is None:
            R = _radius(fn, n, depth)
        V = ConvexGridFunction.from_callable(fn, (0.0,) * n, (R,) * n, samples, dim=n, convexity_tol=1e-8)
        return cls(V, float(R), _monotone(V.values))


def _radius(fn, n, depth):
    zero = [np.zeros(1)] * n
    base = float(fn(*zero)[0])

    def rise(r):
        vals = []
        for i in range(n):
            pt = [np.zeros(1)] * n
            pt[i] = np.array([r])
            vals.append(float(fn(*pt)[0]) - base)
        return min(vals)

    hi = 1.0
    while rise(hi) < depth:
        hi *= 2.0
        if hi > 1e8:
            raise ValueError("potential does not grow along the axes")
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if rise(mid) < depth else (lo, mid)
    return hi


def _monotone(values, tol=1e-12):
    v = np.asarray(values)
    for ax in range(v.ndim):
        d = np.diff(v, axis=ax)
        if np.any(d < -tol * (1.0 + np.abs(np.take(v, np.arange(1, v.shape[ax]), axis=ax)))):
            return False
    return True


def _nice_upper(s):
    # round up to a multiple of 1/8 so unit slopes land on the dual grid
    return math.ceil((s + 1.0) * 8.0 - 1e-9) / 8.0


def dual_potential(U: UnconditionalPotential, samples=None) -> ConvexGridFunction:
    """``V*`` on ``[0, s_max + 1]^n``; ``+inf`` where the sup escapes the box."""
    V = U.V
    smax = 0.0
    for ax in range(V.dim):
        d = np.diff(np.asarray(V.values), axis=ax) / V.steps[ax]
        smax = max(smax, float(np.max(d[np.isfinite(d)])))
    hi = _nice_upper(smax)
    n = V.shape[0] if samples is None else samples
    closed = tuple((True, False) for _ in range(V.dim))
    return legendre_transform(V, 0.0, hi, n, extend=True, closed=closed)


def _face(values, i):
    return np.take(values, 0, axis=i)


def _orthant_integrals(V, Vs, t):
    with np.errstate(over="ignore"):
        ev = np.exp(-t * np.asarray(V.values))
        es = np.exp(-t * np.asarray(Vs.values))
    a = box_integral(ev, V.steps)
    alpha = box_integral(es, Vs.steps)
    n = V.dim
    ai = [box_integral(_face(ev, i), V.steps[:i] + V.steps[i + 1 :]) for i in range(n)]
    alphai = [box_integral(_face(es, i), Vs.steps[:i] + Vs.steps[i + 1 :]) for i in range(n)]
    return a, alpha, np.array(ai), np.array(alphai)


def _weighted_integral(V, t):
    v = np.asarray(V.values)
    fin = np.isfinite(v)
    w = np.zeros_like(v)
    w[fin] = v[fin] * np.exp(-t * v[fin])
    return box_integral(w, V.steps)


def _grid_sup(G, q):
    """max over grid points x of ``x.q - G(x)`` (truncated conjugate)."""
    axes = [G.axis(i) for i in range(G.dim)]
    acc = -np.asarray(G.values)
    for i, ax in enumerate(axes):
        shape = [1] * G.dim
        shape[i] = ax.size
        acc = acc + (ax * q[i]).reshape(shape)
    return float(np.max(acc))


def facial_error(U: UnconditionalPotential, Vs: ConvexGridFunction) -> float:
    """Largest mismatch between ``(V_i)*`` and ``(V*)_i`` over all faces."""
    V = U.V
    n = V.dim
    worst = 0.0
    for i in range(n):
        face = np.take(np.asarray(V.values), 0, axis=i)
        keep = [d for d in range(n) if d != i]
        fg = ConvexGridFunction._trusted(
            tuple(V.lo[d] for d in keep), tuple(V.hi[d] for d in keep), face, convexity_tol=1e-8
        )
        closed = tuple((True, False) for _ in keep)
        fstar = legendre_transform(
            fg,
            tuple(Vs.lo[d] for d in keep),
            tuple(Vs.hi[d] for d in keep),
            tuple(Vs.shape[d] for d in keep),
            extend=True,
            closed=closed,
        )
        sl = np.take(np.asarray(Vs.values), 0, axis=i)
        fin_a, fin_b = np.isfinite(fstar.values), np.isfinite(sl)
        if not np.array_equal(fin_a, fin_b):
            return math.inf
        if fin_a.any():
            worst = max(worst, float(np.max(np.abs(fstar.values[fin_a] - sl[fin_b]))))
    return worst


def unconditional_verify(
    U: UnconditionalPotential,
    t_samples=(0.25, 0.5, 0.75, 1.0),
    *,
    tolerance: float = 1e-3,
    fd_step: float = 1e-3,
):
    """Check the orthant product, the growth of ``F`` and the Jensen step.

    Reported checks, each turned into a signed margin:

    1. ``F(1) - 1``;
    2. ``F'(t) - n t^{n-1}`` with a central difference of step ``fd_step``;
    3. ``a'/a + n/t - V*(G/(t a))`` and the dual ``α'/α + n/t - V(Γ/(t α))``;
    4. minus the facial mismatch ``|(V_i)* - (V*)_i|``.

    The deficit is the smallest margin.
    """
    from .inequalities import VerificationReport

    if not U.monotone_flag:
        raise ValueError("potential is not nondecreasing in each coordinate")
    V, n = U.V, U.n
    Vs = dual_potential(U)

    def F(t):
        a, al, _, _ = _orthant_integrals(V, Vs, t)
        return t ** (2 * n) * a * al

    q = {}
    margins = {}
    for t in sorted(set(float(s) for s in t_samples) | {1.0}):
        a, al, ai, ali = _orthant_integrals(V, Vs, t)
        tag = f"{t:g}"
        q[f"a({tag})"] = a
        q[f"alpha({tag})"] = al
        for i in range(n):
            q[f"a_{i + 1}({tag})"] = ai[i]
            q[f"alpha_{i + 1}({tag})"] = ali[i]
            q[f"face_product_{i + 1}({tag})"] = t ** (n - 1) * ai[i] * ali[i]
        Ft = t ** (2 * n) * a * al
        q[f"F({tag})"] = Ft
        dF = (F(t + fd_step) - F(t - fd_step)) / (2.0 * fd_step)
        q[f"dF({tag})"] = dF
        margins[f"growth({tag})"] = dF - n * t ** (n - 1)

        a_prime = -_weighted_integral(V, t)
        al_prime = -_weighted_integral(Vs, t)
        g = ai / (t * a)
        gamma = ali / (t * al)
        primal = a_prime / a + n / t - _grid_sup(V, g)
        inside = bool(np.all(gamma <= np.array(V.hi)))
        dual = al_prime / al + n / t - (V.evaluate(gamma[None, :])[0] if inside else math.inf)
        q[f"jensen({tag})"] = primal
        q[f"jensen_dual({tag})"] = dual
        margins[f"jensen({tag})"] = primal
        margins[f"jensen_dual({tag})"] = dual
    margins["F(1)"] = q["F(1)"] - 1.0
    q["product"] = q["a(1)"] * q["alpha(1)"]
    fe = facial_error(U, Vs)
    q["facial_error"] = fe
    margins["facial"] = -fe
    worst = min(margins, key=margins.get)
    report = VerificationReport(
        name="unconditional",
        quantities={**q, **{f"margin_{k}": v for k, v in margins.items()}},
        deficit=margins[worst],
        tolerance=tolerance,
        flags={"monotone": U.monotone_flag},
    )
    return report
