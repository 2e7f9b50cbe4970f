"""Verifiers for the Santaló, entropy-transport and correlation inequalities.

Every verifier returns a :class:`VerificationReport` holding the intermediate
integrals, a signed deficit (nonnegative when the inequality holds) and the
tolerance the verdict was taken at.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .convex_core import (
    ConvexGridFunction,
    GridFunction,
    conjugate_at,
    inf_convolution,
    legendre_transform,
    lower_hull,
    moreau_yosida,
    slope_range,
)
from .measures import (
    LogConcaveMeasure,
    Profile,
    entropy,
    essential_continuity_check,
    moment_measure,
    normalize,
)
from .quadrature import box_integral, simpson
from .transport import potential_pair_cost, quantile_correlation

DEFAULT_TOLERANCE = 1e-6
EVEN_TOL = 1e-10


class AdmissibilityError(ValueError):
    """Input violates a hypothesis the inequality needs."""


@dataclass
class VerificationReport:
    """Outcome of one inequality check.

    ``passed`` is ``deficit >= -tolerance``. ``flags`` carries boolean side
    information (for instance a violated hypothesis that was tolerated).
    """

    name: str
    quantities: dict
    deficit: float
    tolerance: float
    passed: bool = field(init=False)
    error_estimate: float = 0.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.quantities = {k: float(v) for k, v in self.quantities.items()}
        self.deficit = float(self.deficit)
        self.tolerance = float(self.tolerance)
        self.error_estimate = float(self.error_estimate)
        self.flags = {k: bool(v) for k, v in self.flags.items()}
        self.passed = bool(self.deficit >= -self.tolerance)

    @property
    def finite(self) -> bool:
        vals = list(self.quantities.values()) + [self.deficit, self.tolerance, self.error_estimate]
        return all(math.isfinite(v) for v in vals)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        return cls(
            name=d["name"],
            quantities=d["quantities"],
            deficit=d["deficit"],
            tolerance=d["tolerance"],
            error_estimate=d.get("error_estimate", 0.0),
            flags=d.get("flags", {}),
        )


def _tolerance(error_estimate: float, override=None) -> float:
    if override is not None:
        return float(override)
    return max(DEFAULT_TOLERANCE, 10.0 * float(error_estimate))


def is_even(V: GridFunction, tol: float = EVEN_TOL) -> bool:
    """Whether ``V(x) = V(-x)`` on a grid symmetric about the origin."""
    for a, b in zip(V.lo, V.hi):
        if abs(a + b) > 1e-12 * max(1.0, abs(a), abs(b)):
            return False
    v = np.asarray(V.values)
    w = v[tuple(slice(None, None, -1) for _ in range(v.ndim))]
    fin = np.isfinite(v)
    if not np.array_equal(fin, np.isfinite(w)):
        return False
    return bool(np.all(np.abs(v[fin] - w[fin]) <= tol * (1.0 + np.abs(v[fin]))))


def _halved(V: GridFunction) -> GridFunction:
    """Every other sample (requires an odd sample count per axis)."""
    sl = tuple(slice(None, None, 2) for _ in range(V.dim))
    if any(n % 2 == 0 or n < 5 for n in V.shape):
        raise ValueError("half-resolution rerun needs an odd sample count >= 5")
    return type(V)._trusted(V.lo, V.hi, np.asarray(V.values)[sl], convexity_tol=getattr(V, "convexity_tol", 1e-9))


def _can_halve(V: GridFunction) -> bool:
    return all(n % 2 == 1 and n >= 5 for n in V.shape)


# -- inverse Santaló product ------------------------------------------------


def _window_faces(V: GridFunction):
    i0, i1 = V.window()
    return i0 == 0, i1 == V.shape[0] - 1


def _primal_mass(V: GridFunction) -> float:
    """∫ e^{-V}: Simpson on the window plus affine tails past open edges."""
    i0, i1 = V.window()
    v = np.asarray(V.values[i0 : i1 + 1])
    vmin = float(v.min())
    h = V.step
    mass = simpson(np.exp(-(v - vmin)), h) if v.size >= 3 else 0.0
    open_lo, open_hi = _window_faces(V)
    if open_lo:
        s = (v[1] - v[0]) / h
        if s >= 0:
            return math.inf
        mass += math.exp(-(v[0] - vmin)) / (-s)
    if open_hi:
        s = (v[-1] - v[-2]) / h
        if s <= 0:
            return math.inf
        mass += math.exp(-(v[-1] - vmin)) / s
    return math.exp(-vmin) * mass


def _dual_mass(V: GridFunction) -> float:
    """Exact ∫ e^{-V*} for the piecewise-linear interpolant of ``V``.

    Past an open grid edge ``V`` continues with its last slope, so ``V*`` is
    ``+inf`` beyond the extreme slopes; past a closed edge ``V*`` is affine.
    """
    x, f = V.x, np.asarray(V.values)
    hull = lower_hull(x, f)
    xs, fs = x[hull], f[hull]
    open_lo, open_hi = _window_faces(V)
    if xs.size == 1:
        if open_lo or open_hi:
            return 0.0
        return math.inf
    s = np.diff(fs) / np.diff(xs)
    s = np.maximum.accumulate(s)
    # vertex k is the maximizer for y in [s_{k-1}, s_k]
    lo_s = np.concatenate(([-np.inf], s))
    hi_s = np.concatenate((s, [np.inf]))
    if open_lo:
        lo_s[0] = s[0]
    if open_hi:
        hi_s[-1] = s[-1]
    total = 0.0
    # unbounded end pieces: integrable only if e^{fk - xk y} decays
    if math.isinf(lo_s[0]):
        if xs[0] >= 0:
            return math.inf
        total += math.exp(fs[0] - xs[0] * hi_s[0]) / (-xs[0])
    if math.isinf(hi_s[-1]):
        if xs[-1] <= 0:
            return math.inf
        total += math.exp(fs[-1] - xs[-1] * lo_s[-1]) / xs[-1]
    inner = [(xs[1:-1], fs[1:-1], lo_s[1:-1], hi_s[1:-1])]
    if not math.isinf(lo_s[0]):
        inner.append((xs[:1], fs[:1], lo_s[:1], hi_s[:1]))
    if not math.isinf(hi_s[-1]):
        inner.append((xs[-1:], fs[-1:], lo_s[-1:], hi_s[-1:]))
    for xk, fk, a, b in inner:
        width = np.maximum(b - a, 0.0)
        top = np.maximum(fk - xk * a, fk - xk * b)
        ax = np.abs(xk)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(ax > 0, -np.expm1(-ax * width) / ax, width)
        total += float(np.sum(np.where(width > 0, np.exp(top) * frac, 0.0)))
    return total


def _product_terms(V: GridFunction):
    if V.dim == 1:
        return _primal_mass(V), _dual_mass(V)
    Vs = legendre_transform(V, extend=True)
    with np.errstate(over="ignore"):
        Z = box_integral(np.exp(-np.asarray(V.values)), V.steps)
        Zs = box_integral(np.exp(-np.asarray(Vs.values)), Vs.steps)
    return Z, Zs


def santalo_product(V: GridFunction, c=None, *, tolerance=None, richardson: bool = True) -> VerificationReport:
    """Check ``∫ e^{-V} ∫ e^{-V*} >= c^n``.

    ``c`` defaults to 4 for an even potential and ``e`` otherwise. The error
    estimate compares with a half-resolution rerun.
    """
    Z, Zs = _product_terms(V)
    if not (0 < Z < math.inf) or not (0 < Zs < math.inf):
        raise AdmissibilityError(f"zero or infinite mass: Z={Z}, Z*={Zs}")
    even = is_even(V)
    c = (4.0 if even else math.e) if c is None else float(c)
    n = V.dim
    product = Z * Zs
    err = 0.0
    if richardson and _can_halve(V):
        Zh, Zsh = _product_terms(_halved(V))
        err = abs(product - Zh * Zsh) / 3.0
    return VerificationReport(
        name="santalo_product",
        quantities={"Z": Z, "Z_dual": Zs, "product": product, "c": c, "n": n},
        deficit=product - c**n,
        tolerance=_tolerance(err, tolerance),
        error_estimate=err,
        flags={"even": even},
    )


def moreau_conjugate_identity(V: GridFunction, k: float, *, tolerance: float = 1e-4) -> VerificationReport:
    """Compare ``(V_k)*`` with ``(V* + |.|^2/(2k)) [] (k|.|^2/2)`` in 1D.

    Both sides live on a dual grid with the primal step, so the
    inf-convolution lands exactly on the dual points. The comparison skips
    dual points whose maximizer for ``(V_k)*`` is a grid end (truncation),
    and points past half the dual radius, where cutting ``V*`` off at the
    radius could matter.
    """
    if V.dim != 1:
        raise ValueError("moreau_conjugate_identity supports 1D grids only")
    h = V.step
    smin, smax = slope_range(V)
    half = math.ceil((max(abs(smin), abs(smax)) + 1.0) / h)
    nd = 4 * half + 1
    D = 2 * half * h
    Vk = moreau_yosida(V, k)
    lhs, arg = legendre_transform(Vk, -D, D, nd, return_argmax=True)
    Vs = legendre_transform(V, -D, D, nd, extend=True)
    y = Vs.x
    A = GridFunction._trusted(-D, D, np.asarray(Vs.values) + y * y / (2.0 * k))
    B = ConvexGridFunction.from_callable(lambda z: 0.5 * k * z * z, -2.0 * D, 2.0 * D, 2 * nd - 1)
    rhs = inf_convolution(A, B).values[2 * half * 2 : 2 * half * 2 + nd]
    keep = (arg[0] > 0) & (arg[0] < V.shape[0] - 1) & (np.abs(y) <= 0.5 * D + 1e-12)
    err = float(np.max(np.abs(lhs.values[keep] - rhs[keep]))) if keep.any() else math.inf
    return VerificationReport(
        name="moreau_conjugate_identity",
        quantities={"k": k, "sup_error": err, "compared_points": int(keep.sum()), "dual_radius": D},
        deficit=-err,
        tolerance=tolerance,
    )


# -- basic identity and ET ---------------------------------------------------


def _basic_terms(V: GridFunction):
    m = normalize(V)
    nu = moment_measure(m)
    vstar_nu = float(np.sum(nu.widths * conjugate_at(m.potential, nu.values)))
    T = potential_pair_cost(m)
    H = entropy(m)
    residual = -m.log_normalizer - (-vstar_nu + T + H)
    return m, {"minus_log_Z": -m.log_normalizer, "int_Vstar_dnu": vstar_nu, "T_nu_eta": T, "H_eta": H}, residual


def basic_identity_residual(V: GridFunction, *, tolerance=None, richardson: bool = True) -> VerificationReport:
    """Residual of ``-log Z = -∫V* dν + T(ν, η) + H(η)``.

    ``T(ν, η)`` is the quadrature value of ``∫ x V'(x) dη``. When the measure
    is not essentially continuous the identity is still evaluated and the
    ``essentially_continuous`` flag is cleared.
    """
    m, q, residual = _basic_terms(V)
    err = 0.0
    if richardson and _can_halve(V):
        err = abs(residual - _basic_terms(_halved(V))[2]) / 3.0
    q["residual"] = residual
    return VerificationReport(
        name="basic_identity",
        quantities=q,
        deficit=-abs(residual),
        tolerance=_tolerance(err, tolerance),
        error_estimate=err,
        flags={"essentially_continuous": essential_continuity_check(m)},
    )


def _et_terms(m1, m2):
    H1, H2 = entropy(m1), entropy(m2)
    T = quantile_correlation(moment_measure(m1), moment_measure(m2))
    return H1, H2, T


def et_deficit(m1: LogConcaveMeasure, m2: LogConcaveMeasure, c=None, *, tolerance=None, richardson: bool = True):
    """Check ``H(η1) + H(η2) <= -log(c e^2) + T(ν1, ν2)`` in dimension 1.

    ``T(ν1, ν2)`` is the exact correlation of the two step quantiles of the
    moment measures (monotone coupling).
    """
    for k, m in enumerate((m1, m2), 1):
        if not essential_continuity_check(m):
            raise AdmissibilityError(f"measure {k} is not essentially continuous")
    even = is_even(m1.potential) and is_even(m2.potential)
    c = (4.0 if even else math.e) if c is None else float(c)
    H1, H2, T = _et_terms(m1, m2)
    deficit = T - math.log(c * math.e**2) - H1 - H2
    err = 0.0
    if richardson and _can_halve(m1.potential) and _can_halve(m2.potential):
        h1, h2, Th = _et_terms(normalize(_halved(m1.potential)), normalize(_halved(m2.potential)))
        err = abs(deficit - (Th - math.log(c * math.e**2) - h1 - h2)) / 3.0
    return VerificationReport(
        name="et_deficit",
        quantities={"H1": H1, "H2": H2, "T_nu1_nu2": T, "c": c},
        deficit=deficit,
        tolerance=_tolerance(err, tolerance),
        error_estimate=err,
        flags={"even": even},
    )


# -- profile formulation -----------------------------------------------------


def _common(f1: Profile, f2: Profile, extra=()):
    t = np.union1d(np.union1d(f1.knots, f2.knots), np.asarray(extra, dtype=float))
    return t, f1(t), f2(t)


def profile_inequality_gap(f1: Profile, f2: Profile, c=None, *, tolerance=None) -> VerificationReport:
    """Check ``∫ log(f1 f2) <= -log(e^2 c) + ∫ f1' f2'`` for concave profiles.

    Both integrals are exact for piecewise-linear profiles, so the error
    estimate is zero.
    """
    for f in (f1, f2):
        f.require_admissible(vanishing=True)
    sym = f1.is_symmetric() and f2.is_symmetric()
    c = (4.0 if sym else math.e) if c is None else float(c)
    t, a, b = _common(f1, f2)
    cross = float(np.sum(np.diff(a) * np.diff(b) / np.diff(t)))
    L1, L2 = f1.integral_log(), f2.integral_log()
    deficit = -math.log(math.e**2 * c) + cross - L1 - L2
    return VerificationReport(
        name="profile_inequality",
        quantities={"int_log_f1": L1, "int_log_f2": L2, "int_f1p_f2p": cross, "c": c},
        deficit=deficit,
        tolerance=_tolerance(0.0, tolerance),
        flags={"symmetric": sym},
    )


def _monotone_direction(a) -> int:
    d = np.diff(a)
    if np.all(d >= 0) and np.all(d <= 0):
        return 0
    if np.all(d >= 0):
        return 1
    if np.all(d <= 0):
        return -1
    return 2


def correlation_check(h, k, mu_weights, *, tolerance=1e-12) -> VerificationReport:
    """Chebyshev sum inequality ``Σw h · Σw k <= Σw · Σw h k``.

    Computed in exact rational arithmetic, so the deficit of similarly
    ordered tables is nonnegative up to the final rounding to float.
    """
    h, k, w = (np.asarray(v, dtype=float).ravel() for v in (h, k, mu_weights))
    if not (h.size == k.size == w.size):
        raise ValueError("tables must have equal length")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    dh, dk = _monotone_direction(h), _monotone_direction(k)
    if 2 in (dh, dk) or (dh * dk < 0):
        raise ValueError("h and k must be monotone in the same direction")
    F = [Fraction(float(v)) for v in w]
    H = [Fraction(float(v)) for v in h]
    K = [Fraction(float(v)) for v in k]
    mass = sum(F)
    sh = sum(a * b for a, b in zip(F, H))
    sk = sum(a * b for a, b in zip(F, K))
    shk = sum(a * b * c for a, b, c in zip(F, H, K))
    deficit = mass * shk - sh * sk
    return VerificationReport(
        name="correlation",
        quantities={"mass": float(mass), "int_h": float(sh), "int_k": float(sk), "int_hk": float(shk)},
        deficit=float(deficit),
        tolerance=tolerance,
    )


def chebyshev_pointwise_bound(f1: Profile, f2: Profile, x: float, *, tolerance=1e-9) -> VerificationReport:
    """Check ``∫_0^x f1' · ∫_0^x f2' <= x ∫_0^x f1' f2'`` exactly."""
    if not 0 < x <= 1:
        raise ValueError("x must lie in (0, 1]")
    t, a, b = _common(f1, f2, [x])
    sel = t <= x
    t, a, b = t[sel], a[sel], b[sel]
    da, db, h = np.diff(a), np.diff(b), np.diff(t)
    I1, I2 = float(a[-1] - a[0]), float(b[-1] - b[0])
    cross = float(np.sum(da * db / h))
    return VerificationReport(
        name="chebyshev_pointwise",
        quantities={"x": x, "int_f1p": I1, "int_f2p": I2, "int_f1p_f2p": cross, "f1f2": I1 * I2},
        deficit=x * cross - I1 * I2,
        tolerance=tolerance,
    )


def _int_log_2m2t(a, b):
    """∫_a^b log(2 - 2t) dt."""
    def U(t):
        u = 2.0 - 2.0 * t
        return u * np.log(u) - u

    return 0.5 * (U(a) - U(b))


def weighted_product_gap(f: Profile, g: Profile, *, tolerance=None) -> VerificationReport:
    """Check ``∫_0^{1/2} f'g' log(2-2t) <= ∫_0^{1/2} f'g'`` exactly.

    The deficit equals ``∫_0^{1/2} f'g' φ`` with ``φ(t) = 1 - log 2 - log(1-t)``;
    the auxiliary quantities ``∫ f' φ``, ``∫ g' φ`` and ``Φ(1/2)`` are reported.
    """
    for p in (f, g):
        p.require_admissible(vanishing=True)
    t, a, b = _common(f, g, [0.5])
    sel = t <= 0.5
    t, a, b = t[sel], a[sel], b[sel]
    lo, hi = t[:-1], t[1:]
    h = hi - lo
    u, v = np.diff(a) / h, np.diff(b) / h
    w_log = _int_log_2m2t(lo, hi)
    w_phi = h - w_log
    plain = float(np.sum(u * v * h))
    weighted = float(np.sum(u * v * w_log))
    return VerificationReport(
        name="weighted_product",
        quantities={
            "int_fpgp": plain,
            "int_fpgp_log": weighted,
            "int_fp_phi": float(np.sum(u * w_phi)),
            "int_gp_phi": float(np.sum(v * w_phi)),
            "int_fpgp_phi": float(np.sum(u * v * w_phi)),
            "Phi_half": 1.0 - math.log(2.0),
        },
        deficit=plain - weighted,
        tolerance=_tolerance(0.0, tolerance),
    )


from .unconditional import UnconditionalPotential, unconditional_verify  # noqa: E402

__all__ = [
    "VerificationReport",
    "AdmissibilityError",
    "is_even",
    "santalo_product",
    "basic_identity_residual",
    "et_deficit",
    "profile_inequality_gap",
    "correlation_check",
    "chebyshev_pointwise_bound",
    "weighted_product_gap",
    "moreau_conjugate_identity",
    "UnconditionalPotential",
    "unconditional_verify",
]
