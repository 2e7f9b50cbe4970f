import math

import numpy as np
import pytest
from scipy import integrate, stats

from santalo_lab import families as fam
from santalo_lab.convex_core import ConvexGridFunction, GridFunction
from santalo_lab.measures import (
    LogConcaveMeasure,
    Profile,
    QuantileMeasure,
    entropy,
    essential_continuity_check,
    measure_from_profile,
    moment_measure,
    normalize,
    profile,
)

TENT = Profile(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 0.0]))


@pytest.fixture(scope="module")
def gaussian_m():
    return normalize(ConvexGridFunction.from_callable(lambda x: 0.5 * x * x, -10.0, 10.0, 8193))


@pytest.fixture(scope="module")
def laplace_m():
    return normalize(ConvexGridFunction.from_callable(lambda x: np.abs(x) + math.log(2.0), -40.0, 40.0, 2**15 + 1))


@pytest.fixture(scope="module")
def shifted_m():
    return normalize(fam.shifted_exponential())


@pytest.fixture(scope="module")
def uniform_m():
    return normalize(fam.uniform_indicator())


# -- normalization and entropy ------------------------------------------------------


def test_gaussian_normalizer(gaussian_m):
    assert math.exp(gaussian_m.log_normalizer) == pytest.approx(math.sqrt(2 * math.pi), abs=1e-8)


def test_laplace_normalizer(laplace_m):
    assert math.exp(laplace_m.log_normalizer) == pytest.approx(1.0, abs=1e-8)


def test_shifted_exponential_normalizer(shifted_m):
    assert math.exp(shifted_m.log_normalizer) == pytest.approx(1.0, abs=1e-6)
    assert shifted_m.support[0] == pytest.approx(-1.0)


def test_density_integrates_to_one(gaussian_m, laplace_m, shifted_m, uniform_m):
    for m in (gaussian_m, laplace_m, shifted_m, uniform_m):
        assert m.expect(lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-8)
        assert m.cdf[0] == 0.0
        assert m.cdf[-1] == pytest.approx(1.0, abs=1e-10)
        assert np.all(np.diff(m.cdf) >= 0)


def test_no_mass_error():
    v = np.full(101, np.inf)
    v[50] = 0.0
    with pytest.raises(ValueError, match="no mass"):
        normalize(GridFunction(-1.0, 1.0, v))


def test_support_truncation():
    m = normalize(ConvexGridFunction.from_callable(lambda x: 0.5 * x * x, -20.0, 20.0, 4001))
    a, b = m.support
    # e^{-x^2/2} < 1e-16 once |x| > sqrt(2 log 1e16) = 8.58
    assert -9.0 < a < -8.4 and 8.4 < b < 9.0
    assert m.truncated


def test_entropy_closed_forms(gaussian_m, laplace_m, shifted_m, uniform_m):
    assert entropy(uniform_m) == pytest.approx(-math.log(2.0), abs=1e-8)
    assert entropy(laplace_m) == pytest.approx(-1.0 - math.log(2.0), abs=1e-6)
    assert entropy(shifted_m) == pytest.approx(-1.0, abs=1e-6)
    assert entropy(gaussian_m) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, abs=1e-8)


def test_entropy_matches_direct_quadrature(gaussian_m):
    # independent route: scipy adaptive quadrature of rho log rho for the closed-form density
    def integrand(x):
        r = stats.norm.pdf(x)
        return r * math.log(r)

    direct, _ = integrate.quad(integrand, -12, 12, epsabs=1e-13, limit=200)
    assert entropy(gaussian_m) == pytest.approx(direct, abs=1e-7)
    rho = gaussian_m.density
    inside = rho > 0
    grid_direct = np.trapezoid(np.where(inside, rho * np.log(np.where(inside, rho, 1.0)), 0.0), gaussian_m.x)
    assert entropy(gaussian_m) == pytest.approx(grid_direct, abs=1e-7)


# -- quantiles and moment measures ------------------------------------------------


def test_cdf_quantile_inversion(gaussian_m, laplace_m, shifted_m):
    t = np.linspace(1e-3, 1 - 1e-3, 997)
    for m in (gaussian_m, laplace_m, shifted_m):
        np.testing.assert_allclose(m.cdf_at(m.quantile(t)), t, atol=1e-8)


def test_gaussian_quantile_against_scipy(gaussian_m):
    t = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(gaussian_m.quantile(t), stats.norm.ppf(t), atol=5e-6)


def test_gaussian_moment_measure_is_itself(gaussian_m):
    nu = moment_measure(gaussian_m)
    assert nu.monotone
    t = np.linspace(1e-3, 1 - 1e-3, 501)
    np.testing.assert_allclose(nu.quantile(t), gaussian_m.quantile(t), atol=2 * gaussian_m.step)


def test_laplace_moment_measure_is_two_atoms(laplace_m):
    nu = moment_measure(laplace_m)
    t = np.array([0.01, 0.3, 0.49, 0.51, 0.7, 0.99])
    np.testing.assert_array_equal(nu.quantile(t), [-1, -1, -1, 1, 1, 1])
    left = nu.widths[nu.values < 0].sum()
    assert left == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize(
    "make", [fam.gaussian, fam.laplace, lambda: fam.power(1.5), lambda: fam.power(3.0)], ids=["gauss", "laplace", "p1.5", "p3"]
)
def test_moment_measure_is_centered(make):
    m = normalize(make())
    assert essential_continuity_check(m)
    assert moment_measure(m).integral() == pytest.approx(0.0, abs=1e-6)


def test_moment_measure_of_shifted_exponential_is_a_point_mass(shifted_m):
    nu = moment_measure(shifted_m)
    np.testing.assert_allclose(nu.values, 1.0)


def test_quantile_measure_validation():
    with pytest.raises(ValueError):
        QuantileMeasure(np.array([0.0, 0.6, 0.5, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        QuantileMeasure(np.array([0.0, 1.0]), np.array([np.inf]))
    q = QuantileMeasure.from_atoms([3.0, -1.0, 2.0], [0.5, 0.25, 0.25])
    np.testing.assert_allclose(q.edges, [0, 0.25, 0.5, 1.0])
    np.testing.assert_allclose(q.values, [-1.0, 2.0, 3.0])
    assert q.quantile(0.25) == -1.0  # inf{x : F(x) >= t}
    assert q.quantile(0.2500001) == 2.0


# -- essential continuity -------------------------------------------------------------


def test_essential_continuity_examples(uniform_m, shifted_m):
    lap = normalize(ConvexGridFunction.from_callable(np.abs, -12.0, 12.0, 4097))
    assert essential_continuity_check(lap)
    assert not essential_continuity_check(uniform_m)
    assert not essential_continuity_check(shifted_m)


# -- profiles ----------------------------------------------------------------------


def test_laplace_profile_is_tent(laplace_m):
    f = profile(laplace_m)
    np.testing.assert_allclose(f.values, np.minimum(f.knots, 1 - f.knots), atol=1e-6)
    assert f.concave and f.vanishing and not f.boundary_violation


def test_gaussian_profile(gaussian_m):
    f = profile(gaussian_m)
    t = f.knots[1:-1]
    np.testing.assert_allclose(f.values[1:-1], stats.norm.pdf(stats.norm.ppf(t)), atol=1e-6)
    assert f.values.max() == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-6)
    assert f.is_symmetric(1e-8)
    assert f.concave


def test_shifted_exponential_profile_flags_boundary(shifted_m):
    f = profile(shifted_m)
    np.testing.assert_allclose(f.values[:-1], 1 - f.knots[:-1], atol=1e-6)
    assert f.boundary_violation
    assert f.values[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("make", [fam.gaussian, fam.laplace, lambda: fam.power(3.0)], ids=["gauss", "laplace", "p3"])
def test_even_potential_gives_symmetric_profile(make):
    assert profile(normalize(make())).is_symmetric(1e-8)


def test_profile_validation():
    with pytest.raises(ValueError, match="knots"):
        Profile(np.array([0.0, 0.7, 0.5, 1.0]), np.zeros(4))
    with pytest.raises(ValueError, match="nonnegative"):
        Profile(np.array([0.0, 0.5, 1.0]), np.array([0.0, -0.1, 0.0]))
    f = Profile(np.array([0.0, 0.25, 0.5, 1.0]), np.array([0.0, 0.25, 0.0, 0.0]))
    with pytest.raises(ValueError, match="concave"):
        f.require_admissible()
    flat = Profile(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ValueError, match="degenerate profile"):
        flat.require_admissible()


def test_integral_log_exact():
    # ∫ log min(t, 1-t) = log(1/2) - 1
    assert TENT.integral_log() == pytest.approx(math.log(0.5) - 1.0, abs=1e-14)
    f = Profile(np.array([0.0, 1.0]), np.array([1.0, 3.0]))
    direct, _ = integrate.quad(lambda t: math.log(1 + 2 * t), 0, 1)
    assert f.integral_log() == pytest.approx(direct, abs=1e-13)


# -- measure_from_profile ------------------------------------------------------------------


def _density_error(m, pdf, lo=-5.0, hi=5.0):
    x = np.linspace(lo, hi, 2001)
    return float(np.max(np.abs(m.density_at(x) - pdf(x))))


def test_tent_rebuilds_laplace():
    m = measure_from_profile(TENT)
    assert _density_error(m, lambda x: 0.5 * np.exp(-np.abs(x))) <= 1e-4


def test_gaussian_profile_rebuilds_gaussian():
    f = Profile.from_function(lambda t: stats.norm.pdf(stats.norm.ppf(t)))
    m = measure_from_profile(f)
    assert _density_error(m, stats.norm.pdf) <= 1e-4


def test_logistic_profile_rebuilds_logistic():
    m = measure_from_profile(Profile.from_function(lambda t: t * (1 - t)))
    assert _density_error(m, lambda x: np.exp(-x) / (1 + np.exp(-x)) ** 2) <= 1e-4


@pytest.mark.parametrize(
    "fn",
    [lambda t: t * (1 - t), lambda t: np.sin(np.pi * t) / np.pi, lambda t: t * (1 - t) * (2 - t) / 2],
    ids=["logistic", "sine", "skewed"],
)
def test_profile_round_trip(fn):
    f = Profile.from_function(fn, 2048)
    back = profile(measure_from_profile(f))
    t = np.linspace(0, 1, 1001)
    assert np.max(np.abs(back(t) - f(t))) <= 1e-4


def test_kinked_profile_round_trip_needs_a_finer_grid():
    # a kink off the x-grid costs O(step) in the rebuilt density
    f = Profile.from_function(lambda t: np.minimum(t, 2 * (1 - t)) / 2, 2048, [2 / 3])
    t = np.linspace(0, 1, 10001)
    coarse = np.max(np.abs(profile(measure_from_profile(f))(t) - f(t)))
    fine = np.max(np.abs(profile(measure_from_profile(f, samples=2**18 + 1))(t) - f(t)))
    assert fine <= 1e-4 < coarse


def test_degenerate_profile_rejected():
    f = Profile(np.array([0.0, 0.25, 0.5, 0.75, 1.0]), np.array([0.0, 0.25, 0.0, 0.25, 0.0]))
    with pytest.raises(ValueError):
        measure_from_profile(f)


def test_measure_save_load_round_trip(tmp_path, laplace_m):
    m = normalize(fam.shifted_exponential((-2.0, 8.0, 1001)))
    csv_path, json_path = m.save(tmp_path / "shifted")
    back = LogConcaveMeasure.load(tmp_path / "shifted")
    assert back.log_normalizer == m.log_normalizer
    np.testing.assert_array_equal(back.V, m.V)
    assert back.support == m.support
    assert json_path.read_text().count("essentially_continuous") == 1
