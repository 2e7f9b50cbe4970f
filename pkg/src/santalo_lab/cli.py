"""Command-line front end: build a named family, run a verifier, write reports.

Every run writes ``<out>/<command>-<family>-<hash>.json`` plus a CSV summary
with the same stem. The hash covers the command, the family specs and the
options, so identical invocations overwrite identical files.

Exit codes: 0 when every report passed, 1 when one failed, 2 for an invalid
family spec or input, 3 when a report contains NaN.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import families as fam
from .convex_core import ConvexGridFunction, GridFunction, legendre_transform, moreau_yosida, slope_range
from .inequalities import (
    AdmissibilityError,
    VerificationReport,
    basic_identity_residual,
    chebyshev_pointwise_bound,
    correlation_check,
    et_deficit,
    moreau_conjugate_identity,
    profile_inequality_gap,
    santalo_product,
    unconditional_verify,
    weighted_product_gap,
)
from .measures import LogConcaveMeasure, Profile, TailError, measure_from_profile, normalize, profile
from .transport import DiscreteMeasure, brute_force_cost, dual_feasibility_gap, quantile_correlation

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = ("transform", "product", "et", "profile", "weighted", "uncond", "suite")
MIN_SAMPLES = 65
EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NAN = 0, 1, 2, 3


class SpecError(ValueError):
    """A family spec or option that cannot be run."""


@dataclass(frozen=True)
class FamilySpec:
    """A named family plus its grid and parameters.

    ``grid`` is ``(lo, hi, samples)`` or ``None`` for the family default.
    For orthant families only ``samples`` is used (the box radius is chosen
    from the decay of the potential) unless ``hi`` is given.
    """

    kind: str
    grid: tuple | None = None
    params: dict = field(default_factory=dict)

    def validate(self) -> "FamilySpec":
        if self.kind not in fam.KINDS:
            raise SpecError(f"unknown family {self.kind!r}; choose from {', '.join(fam.KINDS)}")
        if self.grid is not None:
            lo, hi, n = self.grid
            if int(n) != n or n < MIN_SAMPLES:
                raise SpecError(f"grid needs at least {MIN_SAMPLES} samples, got {n}")
            if self.kind not in fam.ORTHANT and not hi > lo:
                raise SpecError("grid needs hi > lo")
        p = self.params
        if self.kind in ("power", "unconditional_lp") and not p.get("p", 2.0) >= 1.0:
            raise SpecError("power families need p >= 1")
        if self.kind in ("trapezoid_profile", "linear_cap_profile") and not 0.0 < p.get("eps", 0.1) < 0.5:
            raise SpecError("eps must lie in (0, 1/2)")
        if self.kind in fam.ORTHANT and p.get("n", 2) not in (2, 3):
            raise SpecError("orthant families need n in {2, 3}")
        if self.kind == "custom_csv":
            path = p.get("path")
            if not path or not Path(path).is_file():
                raise SpecError(f"custom_csv needs an existing --path, got {path!r}")
        return self

    @property
    def category(self) -> str:
        if self.kind in fam.PROFILES:
            return "profile"
        if self.kind in fam.ORTHANT:
            return "orthant"
        return "potential"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": list(self.grid) if self.grid else None, "params": dict(sorted(self.params.items()))}


# -- building objects from specs ---------------------------------------------


def _grid(spec):
    if spec.grid is None:
        return None
    lo, hi, n = spec.grid
    return float(lo), float(hi), int(n)


def build_potential(spec: FamilySpec) -> GridFunction:
    k, p, g = spec.kind, spec.params, _grid(spec)
    if k == "gaussian":
        return fam.gaussian(g)
    if k == "laplace":
        return fam.laplace(g)
    if k == "shifted_exponential":
        return fam.shifted_exponential(g)
    if k == "power":
        return fam.power(p.get("p", 2.0), g)
    if k == "uniform_indicator":
        return fam.uniform_indicator(g)
    if k == "custom_csv":
        return fam.custom_csv(p["path"])
    if spec.category == "profile":
        return build_measure(spec).potential
    raise SpecError(f"{k} is not a 1D potential family")


def build_profile(spec: FamilySpec) -> Profile:
    k, p = spec.kind, spec.params
    if k == "trapezoid_profile":
        f = fam.trapezoid_profile(p.get("eps", 0.1))
    elif k == "linear_cap_profile":
        f = fam.linear_cap_profile(p.get("eps", 0.1))
    elif k == "random_profile":
        f = fam.random_profile(p.get("seed", 0), bool(p.get("symmetric", False)))
    elif spec.category == "potential":
        f = profile(normalize(build_potential(spec)))
    else:
        raise SpecError(f"{k} has no profile")
    return fam.mirrored(f) if p.get("mirror") else f


def build_measure(spec: FamilySpec) -> LogConcaveMeasure:
    if spec.category == "profile":
        return measure_from_profile(build_profile(spec))
    return normalize(build_potential(spec))


def build_orthant(spec: FamilySpec):
    if spec.category != "orthant":
        raise SpecError(f"{spec.kind} is not an orthant family")
    p = spec.params
    n = int(p.get("n", 2))
    samples = 257 if spec.grid is None else int(spec.grid[2])
    R = None
    if spec.grid is not None and math.isfinite(spec.grid[1]):
        R = float(spec.grid[1])
    if spec.kind == "unconditional_l1":
        return fam.unconditional_l1(n, samples, R)
    if spec.kind == "unconditional_gaussian":
        return fam.unconditional_gaussian(n, samples, R)
    return fam.unconditional_lp(p.get("p", 2.0), n, samples, R)


# -- single-family commands --------------------------------------------------


def _interior_mask(finite):
    """Finite points whose axis neighbours are all finite and inside the grid."""
    m = finite.copy()
    for ax in range(finite.ndim):
        edge = [slice(None)] * finite.ndim
        for s in (0, -1):
            edge[ax] = s
            m[tuple(edge)] = False
        f = np.moveaxis(finite, ax, 0)
        inner = np.zeros_like(f)
        inner[1:-1] = f[:-2] & f[2:]
        m &= np.moveaxis(inner, 0, ax)
    return m


def biconjugation_report(V: GridFunction, tolerance=None) -> VerificationReport:
    """Transform twice and compare with ``V`` away from the window edges."""
    fs = legendre_transform(V)
    fss = legendre_transform(fs, V.lo, V.hi, V.shape)
    keep = _interior_mask(np.isfinite(V.values))
    err = float(np.max(np.abs(fss.values[keep] - V.values[keep]))) if keep.any() else 0.0
    spread = max(b - a for a, b in (slope_range(V, ax) for ax in range(V.dim)))
    tol = 2.0 * max(V.steps) * spread if tolerance is None else float(tolerance)
    return VerificationReport(
        name="biconjugation",
        quantities={"sup_error": err, "slope_spread": spread, "step": max(V.steps)},
        deficit=-err,
        tolerance=max(tol, 1e-12 * (1.0 + float(np.max(np.abs(V.values[np.isfinite(V.values)]))))),
    )


def _c(options):
    c = options.get("c", "auto")
    return None if c in (None, "auto") else float(c)


def run_single(command: str, spec: FamilySpec, spec2: FamilySpec | None, options: dict):
    """Run one command; returns the list of reports and optional extra files."""
    tol = options.get("tolerance")
    extra = {}
    if command == "transform":
        V = build_potential(spec)
        extra["conjugate.csv"] = legendre_transform(V).to_csv()
        return [biconjugation_report(V, tol)], extra
    if command == "product":
        return [santalo_product(build_potential(spec), _c(options), tolerance=tol)], extra
    if command == "et":
        other = spec2 or spec
        return [et_deficit(build_measure(spec), build_measure(other), _c(options), tolerance=tol)], extra
    if command == "profile":
        other = spec2 or spec
        return [profile_inequality_gap(build_profile(spec), build_profile(other), _c(options), tolerance=tol)], extra
    if command == "weighted":
        other = spec2 or spec
        return [weighted_product_gap(build_profile(spec), build_profile(other), tolerance=tol)], extra
    if command == "uncond":
        return [unconditional_verify(build_orthant(spec), tolerance=1e-3 if tol is None else tol)], extra
    raise SpecError(f"unknown command {command!r}")


# -- randomized suite ----------------------------------------------------------


def aggregate(name: str, reports) -> VerificationReport:
    """Collapse a batch into the report with the smallest margin."""
    reports = list(reports)
    worst = min(reports, key=lambda r: r.deficit + r.tolerance)
    q = {f"worst.{k}": v for k, v in worst.quantities.items()}
    q["count"] = len(reports)
    q["min_deficit"] = min(r.deficit for r in reports)
    q["failures"] = sum(not r.passed for r in reports)
    return VerificationReport(
        name=name,
        quantities=q,
        deficit=worst.deficit,
        tolerance=worst.tolerance,
        error_estimate=worst.error_estimate,
        flags=worst.flags,
    )


def _monotone_table(rng, size=100):
    h = np.sort(rng.normal(size=size))
    k = np.sort(rng.normal(size=size))
    if rng.random() < 0.5:
        h, k = h[::-1], k[::-1]
    return h, k


def _atoms(rng, size):
    return np.unique(rng.integers(-20, 21, size=size) / 4.0)


def _suite_transport(rng, pairs=500):
    out = []
    for _ in range(pairs):
        a = _atoms(rng, int(rng.integers(1, 9)))
        b = _atoms(rng, a.size)
        while b.size != a.size:
            b = _atoms(rng, a.size)
        m1, m2 = DiscreteMeasure.uniform(a[:, None]), DiscreteMeasure.uniform(b[:, None])
        exact, _ = brute_force_cost(m1, m2)
        fast = quantile_correlation(m1.quantile_measure(), m2.quantile_measure())
        diff = abs(fast - exact)
        out.append(VerificationReport("monotone_coupling", {"quantile": fast, "oracle": exact}, -diff, 1e-9))
    return aggregate("monotone_coupling", out)


def _suite_duality(rng, triples=500):
    out = []
    for _ in range(triples):
        scale = rng.uniform(0.25, 2.0)
        shift = rng.uniform(-1.0, 1.0)
        f = ConvexGridFunction.from_callable(lambda x: 0.5 * scale * (x - shift) ** 2, -4.0, 4.0, 801)
        n1, n2 = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        a = _atoms(rng, n1) / 2.0
        b = np.unique(np.round(rng.uniform(-1.0, 1.0, n2), 3))
        w1 = rng.dirichlet(np.ones(a.size))
        w2 = rng.dirichlet(np.ones(b.size))
        m1, m2 = DiscreteMeasure(a[:, None], w1), DiscreteMeasure(b[:, None], w2)
        gap = dual_feasibility_gap(m1, m2, f)
        out.append(VerificationReport("weak_duality", {"gap": gap}, gap, 1e-8))
    return aggregate("weak_duality", out)


def _suite_profiles(rng, symmetric, pairs=1000):
    c = 4.0 if symmetric else math.e
    reps = [
        profile_inequality_gap(fam.random_profile(rng, symmetric), fam.random_profile(rng, symmetric), c)
        for _ in range(pairs)
    ]
    return aggregate(f"profile_inequality[{'symmetric' if symmetric else 'general'}]", reps)


def _suite_correlation(rng, tables=1000):
    reps = []
    for _ in range(tables):
        h, k = _monotone_table(rng)
        reps.append(correlation_check(h, k, rng.uniform(0.0, 1.0, h.size)))
    return aggregate("correlation", reps)


def _suite_chebyshev(rng, profiles=200, points=10):
    reps = []
    for _ in range(profiles):
        f = fam.random_profile(rng, bool(rng.integers(2)))
        g = fam.random_profile(rng, bool(rng.integers(2)))
        for x in rng.uniform(0.0, 1.0, points):
            reps.append(chebyshev_pointwise_bound(f, g, float(max(x, 1e-6))))
    return aggregate("chebyshev_pointwise", reps)


def _suite_weighted(rng, pairs=500):
    reps = []
    for i in range(pairs):
        sym = i % 2 == 0
        reps.append(weighted_product_gap(fam.random_profile(rng, sym), fam.random_profile(rng, not sym)))
    return aggregate("weighted_product", reps)


def _suite_extremal():
    reps = []
    tent = Profile(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 0.0]))
    for eps in (0.2, 0.1, 0.05):
        reps.append(profile_inequality_gap(tent, fam.trapezoid_profile(eps), 4.0))
        reps.append(profile_inequality_gap(fam.linear_cap_profile(eps), fam.linear_cap_profile(eps, True), math.e))
    return aggregate("profile_extremal_sequences", reps)


def suite_tasks(options: dict):
    """Deterministically ordered ``(name, callable(rng))`` pairs."""
    tol = options.get("tolerance")
    tasks = []
    potentials = {
        "gaussian": fam.gaussian,
        "laplace": fam.laplace,
        "shifted_exponential": fam.shifted_exponential,
        "power1.5": lambda: fam.power(1.5),
        "power3": lambda: fam.power(3.0),
        "uniform_indicator": fam.uniform_indicator,
    }
    for name, make in potentials.items():
        tasks.append((f"transform:{name}", lambda rng, make=make: biconjugation_report(make())))
        tasks.append((f"product:{name}", lambda rng, make=make: santalo_product(make(), tolerance=tol)))
        if name != "uniform_indicator":
            tasks.append((f"basic:{name}", lambda rng, make=make: basic_identity_residual(make(), tolerance=tol)))
    tasks.append(("basic:power2", lambda rng: basic_identity_residual(fam.power(2.0), tolerance=tol)))
    tasks.append(("et:gaussian", lambda rng: et_deficit(normalize(fam.gaussian()), normalize(fam.gaussian()), 4.0)))
    tasks.append(("et:laplace", lambda rng: et_deficit(normalize(fam.laplace()), normalize(fam.laplace()), 4.0)))
    for eps in (0.2, 0.1, 0.05):
        tasks.append(
            (
                f"et:laplace-trapezoid{eps:g}",
                lambda rng, eps=eps: et_deficit(
                    normalize(fam.laplace()), measure_from_profile(fam.trapezoid_profile(eps)), 4.0
                ),
            )
        )
    tasks.append(("profile:symmetric", lambda rng: _suite_profiles(rng, True)))
    tasks.append(("profile:general", lambda rng: _suite_profiles(rng, False)))
    tasks.append(("profile:extremal", lambda rng: _suite_extremal()))
    tasks.append(("correlation", _suite_correlation))
    tasks.append(("chebyshev", _suite_chebyshev))
    tasks.append(("weighted", _suite_weighted))
    tasks.append(("transport:monotone", _suite_transport))
    tasks.append(("transport:duality", _suite_duality))
    lap = lambda: fam.laplace((-8.0, 8.0, 8193))  # noqa: E731
    for k in (1.0, 4.0, 16.0):
        tasks.append((f"moreau:identity{k:g}", lambda rng, k=k: moreau_conjugate_identity(lap(), k)))
    tasks.append(("moreau:product64", lambda rng: santalo_product(moreau_yosida(fam.laplace((-120.0, 120.0, 2**16 + 1)), 64.0))))
    for name, make in (
        ("l1", lambda: fam.unconditional_l1(2)),
        ("gaussian", lambda: fam.unconditional_gaussian(2)),
        ("l2", lambda: fam.unconditional_lp(2.0, 2)),
        ("l4", lambda: fam.unconditional_lp(4.0, 2)),
    ):
        tasks.append((f"uncond:{name}", lambda rng, make=make: unconditional_verify(make())))
    return tasks


def _threads() -> int:
    env = os.environ.get("SANTALO_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"SANTALO_LAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_suite(options: dict):
    tasks = suite_tasks(options)
    seeds = np.random.SeedSequence(int(options.get("seed", 0))).spawn(len(tasks))

    def one(i):
        name, fn = tasks[i]
        rep = fn(np.random.default_rng(seeds[i]))
        rep.name = f"{name}"
        return rep

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(one, range(len(tasks))))


# -- output ------------------------------------------------------------------


def run_hash(command, spec, spec2, options) -> str:
    payload = {
        "command": command,
        "family": spec.to_dict() if spec else None,
        "family2": spec2.to_dict() if spec2 else None,
        "options": {k: v for k, v in sorted(options.items()) if k != "out"},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "deficit", "passed"])
    for r in reports:
        w.writerow([r.name, repr(r.deficit), str(r.passed).lower()])
    return buf.getvalue()


def write_outputs(out: Path, stem: str, reports, extra=None, as_array=False) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    dicts = [r.to_dict() for r in reports]
    body = dicts if (as_array or len(dicts) != 1) else dicts[0]
    path = out / f"{stem}.json"
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    (out / f"{stem}.csv").write_text(summary_csv(reports))
    for suffix, text in (extra or {}).items():
        (out / f"{stem}.{suffix}").write_text(text)
    return path


def exit_code(reports) -> int:
    for r in reports:
        vals = list(r.quantities.values()) + [r.deficit, r.tolerance, r.error_estimate]
        if any(math.isnan(v) for v in vals):
            return EXIT_NAN
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


# -- argument handling ---------------------------------------------------------


def _parse_grid(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    if len(parts) != 3:
        raise SpecError("--grid expects lo,hi,samples")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), float(parts[2])
    except ValueError:
        raise SpecError(f"cannot parse grid {text!r}") from None
    if n != int(n):
        raise SpecError("grid samples must be an integer")
    return lo, hi, int(n)


def _parse_c(text):
    if text is None or str(text) == "auto":
        return "auto"
    try:
        c = float(text)
    except ValueError:
        raise SpecError(f"--c expects a positive real or 'auto', got {text!r}") from None
    if not c > 0:
        raise SpecError("--c must be positive")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with default values for these flags")
    common.add_argument("--family", help=f"one of: {', '.join(fam.KINDS)}")
    common.add_argument("--family2", help="second family for two-argument checks")
    common.add_argument("--grid", help="lo,hi,samples")
    common.add_argument("--grid2", help="lo,hi,samples for the second family")
    common.add_argument("--c", help="constant c, or 'auto' to pick it from symmetry")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: reports)")
    common.add_argument("--tolerance", type=float)
    common.add_argument("--eps", type=float, help="extremal approximation parameter in (0, 1/2)")
    common.add_argument("--p", type=float, help="exponent for power families")
    common.add_argument("--n", type=int, help="dimension of orthant families")
    common.add_argument("--symmetric", action="store_const", const=True, help="symmetric random profiles")
    common.add_argument("--mirror2", action="store_const", const=True, help="reflect the second profile")
    common.add_argument("--path", help="CSV file for custom_csv")
    parser = argparse.ArgumentParser(prog="santalo-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common])
    return parser


def merge_config(args) -> dict:
    """Flag values override values read from ``--config``."""
    conf = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                conf = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise SpecError(f"cannot read config {args.config}: {exc}") from None
    merged = dict(conf)
    for k, v in vars(args).items():
        if v is not None and k != "config":
            merged[k] = v
    return merged


def _family_params(cfg, second=False):
    params = {}
    for key in ("eps", "p", "n", "symmetric", "path"):
        if cfg.get(key) is not None:
            params[key] = cfg[key]
    if cfg.get("seed") is not None:
        params["seed"] = int(cfg["seed"]) + (1 if second else 0)
    if second and cfg.get("mirror2"):
        params["mirror"] = True
    return params


def specs_from_config(cfg):
    command = cfg["command"]
    if command == "suite":
        return None, None
    if not cfg.get("family"):
        raise SpecError(f"{command} needs --family")
    spec = FamilySpec(cfg["family"], _parse_grid(cfg.get("grid")), _family_params(cfg)).validate()
    spec2 = None
    if cfg.get("family2"):
        spec2 = FamilySpec(cfg["family2"], _parse_grid(cfg.get("grid2")), _family_params(cfg, True)).validate()
    return spec, spec2


def _attach_negative_values(argv):
    # "--grid -8,8,65" would otherwise read "-8,8,65" as a flag
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--grid", "--grid2", "--c", "--tolerance", "--eps", "--p") and i + 1 < len(argv):
            nxt = argv[i + 1]
            if nxt.startswith("-") and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
                out.append(f"{tok}={nxt}")
                i += 2
                continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_attach_negative_values(argv))
    try:
        cfg = merge_config(args)
        cfg["command"] = args.command
        spec, spec2 = specs_from_config(cfg)
        options = {"c": _parse_c(cfg.get("c")), "tolerance": cfg.get("tolerance")}
        if args.command == "suite":
            options["seed"] = int(cfg.get("seed", 0))
            reports = run_suite(options)
            extra = {}
        else:
            reports, extra = run_single(args.command, spec, spec2, options)
    except (SpecError, AdmissibilityError, TailError, ValueError) as exc:
        print(f"santalo-lab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(cfg.get("out", "reports"))
    label = spec.kind if spec else "all"
    stem = f"{args.command}-{label}-{run_hash(args.command, spec, spec2, options)}"
    path = write_outputs(out, stem, reports, extra, as_array=args.command == "suite")
    code = exit_code(reports)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} deficit={r.deficit:.6g} tol={r.tolerance:.3g}")
    print(f"wrote {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
