"""Maximal-correlation transport cost.

``T(mu1, mu2) = sup E[X1 . X2]`` over couplings. In 1D it is computed from
quantile functions (monotone coupling); for small discrete measures in any
dimension an exact brute-force oracle solves the transportation problem.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .convex_core import GridFunction, conjugate_at, default_dual_box
from .measures import TAIL_REJECT, LogConcaveMeasure, QuantileMeasure, TailError, moment_measure
from .quadrature import interval_integrals

MAX_ORACLE_ATOMS = 64
PERMUTATION_LIMIT = 8


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^n (n <= 3)."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if atoms.ndim != 2 or atoms.shape[0] != w.size or w.size == 0:
            raise ValueError("atoms and weights must have matching length")
        if not 1 <= atoms.shape[1] <= 3:
            raise ValueError("atoms must live in R^1, R^2 or R^3")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if np.unique(atoms, axis=0).shape[0] != atoms.shape[0]:
            raise ValueError("atoms must be pairwise distinct")
        atoms.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.asarray(atoms, dtype=float)
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def scaled(self, a: float) -> "DiscreteMeasure":
        return DiscreteMeasure(a * self.atoms, self.weights)

    def quantile_measure(self) -> QuantileMeasure:
        if self.dim != 1:
            raise ValueError("quantile representation needs a 1D measure")
        return QuantileMeasure.from_atoms(self.atoms[:, 0], self.weights)

    def to_json(self) -> str:
        return json.dumps({"atoms": self.atoms.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        d = json.loads(text)
        return cls(np.asarray(d["atoms"], dtype=float), np.asarray(d["weights"], dtype=float))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint weights ``pi[i, j]`` between atoms of two discrete measures."""

    joint_weights: np.ndarray

    def check(self, m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = 1e-10) -> None:
        p = np.asarray(self.joint_weights)
        if p.shape != (m1.size, m2.size):
            raise ValueError("coupling shape does not match the marginals")
        if np.any(p < -tol):
            raise ValueError("coupling has negative entries")
        if np.max(np.abs(p.sum(axis=1) - m1.weights)) > tol:
            raise ValueError("row sums differ from the first marginal")
        if np.max(np.abs(p.sum(axis=0) - m2.weights)) > tol:
            raise ValueError("column sums differ from the second marginal")

    def to_json(self) -> str:
        return json.dumps(np.asarray(self.joint_weights).tolist())


def quantile_correlation(q1: QuantileMeasure, q2: QuantileMeasure, *, return_tail: bool = False):
    """``∫_0^1 q1(t) q2(t) dt`` for step quantile functions.

    Two exact step measures are integrated exactly on the union of their
    breakpoints. Sampled tables must share the same t-grid; they are
    integrated by the midpoint rule and rejected with :class:`TailError`
    when the end-cell error estimate exceeds ``1e-4`` of the total.
    """
    same = q1.edges.shape == q2.edges.shape and np.array_equal(q1.edges, q2.edges)
    if same:
        edges, v1, v2 = q1.edges, q1.values, q2.values
    elif q1.exact and q2.exact:
        edges = np.union1d(q1.edges, q2.edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        v1, v2 = q1.quantile(mid), q2.quantile(mid)
    else:
        raise ValueError("mismatched t-grids")
    w = np.diff(edges)
    prod = v1 * v2
    value = float(np.sum(w * prod))
    tail = 0.0 if (q1.exact and q2.exact) else QuantileMeasure(edges, prod).tail_estimate()
    if tail > TAIL_REJECT * max(abs(value), float(np.sum(w * np.abs(prod))), 1e-300):
        raise TailError(f"quantile tails too heavy: estimate {tail:.3g} against total {value:.6g}")
    return (value, tail) if return_tail else value


@lru_cache(maxsize=None)
def _permutations(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def _uniform_square(m1: DiscreteMeasure, m2: DiscreteMeasure) -> bool:
    return (
        m1.size == m2.size
        and m1.size <= PERMUTATION_LIMIT
        and np.all(m1.weights == m1.weights[0])
        and np.all(m2.weights == m2.weights[0])
    )


def brute_force_cost(m1: DiscreteMeasure, m2: DiscreteMeasure) -> tuple[float, Coupling]:
    """Exact maximal correlation between two discrete measures.

    Equal-weight square problems up to 8x8 are solved by enumerating every
    permutation (the vertices of the Birkhoff polytope). Anything else goes
    to a transportation simplex carried out in exact rational arithmetic.
    """
    if m1.size + m2.size > MAX_ORACLE_ATOMS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_ATOMS} atoms in total")
    if m1.dim != m2.dim:
        raise ValueError("measures live in different dimensions")
    C = m1.atoms @ m2.atoms.T
    if _uniform_square(m1, m2):
        k = m1.size
        perms = _permutations(k)
        totals = C[np.arange(k), perms].sum(axis=1)
        best = perms[int(np.argmax(totals))]
        pi = np.zeros((k, k))
        pi[np.arange(k), best] = 1.0 / k
        return float(totals.max()) / k, Coupling(pi)
    flows, value = _exact_transport(C, m1.weights, m2.weights)
    return value, Coupling(flows)


def _exact_transport(C, a, b):
    """Maximize ``sum c_ij x_ij`` over the transportation polytope exactly."""
    m, n = C.shape
    cost = [[-Fraction(float(C[i, j])) for j in range(n)] for i in range(m)]
    sa = [Fraction(float(v)) for v in a]
    sb = [Fraction(float(v)) for v in b]
    ta, tb = sum(sa), sum(sb)
    supply = [v / ta for v in sa]
    demand = [v / tb for v in sb]

    # northwest corner start; a zero cell keeps the basis a spanning tree
    x = {}
    i = j = 0
    rs, cs = supply[:], demand[:]
    while i < m and j < n:
        q = min(rs[i], cs[j])
        x[(i, j)] = q
        rs[i] -= q
        cs[j] -= q
        if rs[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1

    while True:
        u, v = _potentials(x, cost, m, n)
        entering = None
        for r in range(m):
            for c in range(n):
                if (r, c) not in x and cost[r][c] - u[r] - v[c] < 0:
                    entering = (r, c)  # Bland: first improving cell
                    break
            if entering:
                break
        if entering is None:
            break
        cycle = _cycle(x, entering, m, n)
        minus = cycle[1::2]
        theta = min(x[cell] for cell in minus)
        leaving = min(cell for cell in minus if x[cell] == theta)
        for k, cell in enumerate(cycle):
            if k % 2 == 0:
                x[cell] = x.get(cell, Fraction(0)) + theta
            else:
                x[cell] -= theta
        del x[leaving]

    flows = np.zeros((m, n))
    total = Fraction(0)
    for (r, c), q in x.items():
        flows[r, c] = float(q)
        total -= cost[r][c] * q
    return flows, float(total)


def _potentials(x, cost, m, n):
    u = [None] * m
    v = [None] * n
    u[0] = Fraction(0)
    rows_of = {c: [] for c in range(n)}
    cols_of = {r: [] for r in range(m)}
    for r, c in x:
        rows_of[c].append(r)
        cols_of[r].append(c)
    stack = [("r", 0)]
    while stack:
        kind, idx = stack.pop()
        if kind == "r":
            for c in cols_of[idx]:
                if v[c] is None:
                    v[c] = cost[idx][c] - u[idx]
                    stack.append(("c", c))
        else:
            for r in rows_of[idx]:
                if u[r] is None:
                    u[r] = cost[r][idx] - v[idx]
                    stack.append(("r", r))
    return u, v


def _cycle(x, entering, m, n):
    """Alternating cycle through the basis tree closed by ``entering``."""
    r0, c0 = entering
    adj = {("r", r): [] for r in range(m)}
    adj.update({("c", c): [] for c in range(n)})
    for r, c in x:
        adj[("r", r)].append(("c", c))
        adj[("c", c)].append(("r", r))
    start, goal = ("c", c0), ("r", r0)
    parent = {start: None}
    queue = [start]
    for node in queue:
        if node == goal:
            break
        for nxt in adj[node]:
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    # path runs row r0 -> ... -> column c0; turn node pairs into cells
    cells = [entering]
    for a, b in zip(path, path[1:]):
        cells.append((a[1], b[1]) if a[0] == "r" else (b[1], a[1]))
    return cells


def potential_pair_cost(m: LogConcaveMeasure) -> float:
    """``∫ x V'(x) dη`` with ``V'`` the cell slope and Simpson cell masses."""
    slopes = np.diff(m.V) / m.step
    first_moment = interval_integrals(m.x * m.density, m.step)
    return float(np.sum(slopes * first_moment))


def moment_pair_cost(m: LogConcaveMeasure) -> float:
    """``∫ V* dν + ∫ V dη`` evaluated with the discrete conjugate."""
    nu = moment_measure(m)
    vstar = conjugate_at(m.potential, nu.values)
    return float(np.sum(nu.widths * vstar)) + m.expect(m.V)


def _inside(points, lo, hi, tol=1e-12):
    p = np.atleast_2d(points)
    lo, hi = np.asarray(lo), np.asarray(hi)
    return bool(np.all(p >= lo - tol * (1 + np.abs(lo))) and np.all(p <= hi + tol * (1 + np.abs(hi))))


def dual_feasibility_gap(m1: DiscreteMeasure, m2: DiscreteMeasure, f: GridFunction, dual_box=None) -> float:
    """``∫ f dμ1 + ∫ f* dμ2 - T(μ1, μ2)``; nonnegative by weak duality.

    ``f`` is read as its (multi)linear interpolant on the grid and ``f*`` is
    its exact conjugate, which is the maximum over grid vertices.
    """
    if m1.dim != f.dim or m2.dim != f.dim:
        raise ValueError("measure and grid dimensions differ")
    if not _inside(m1.atoms, f.lo, f.hi):
        raise ValueError("atom of the first measure outside the grid")
    lo, hi, _ = default_dual_box(f) if dual_box is None else dual_box
    if not _inside(m2.atoms, lo, hi):
        raise ValueError("atom of the second measure outside the dual grid")
    fx = f(m1.atoms[:, 0]) if f.dim == 1 else f.evaluate(m1.atoms)
    fy = conjugate_at(f, m2.atoms[:, 0] if f.dim == 1 else m2.atoms)
    if not np.all(np.isfinite(fx)):
        raise ValueError("f is infinite at an atom of the first measure")
    cost, _ = brute_force_cost(m1, m2)
    return float(np.dot(m1.weights, fx) + np.dot(m2.weights, fy) - cost)


__all__ = [
    "DiscreteMeasure",
    "Coupling",
    "quantile_correlation",
    "brute_force_cost",
    "potential_pair_cost",
    "moment_pair_cost",
    "dual_feasibility_gap",
]
