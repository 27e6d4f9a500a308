import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussext.domains import Disc, Polygon, Rhomb
from gaussext.gauss_core import (
    LOG_2PI,
    Direction,
    GaussianProductSpace,
    LogWeight,
    beta,
    conditional_density,
    density_ratio_bounds_many,
    density_ratio_in_bounds,
    log_density,
    log_density_ratio_from_offset,
    mc_integrate,
    quad_integrate_2d,
)
from gaussext.norms import HatFunction

PLANE = GaussianProductSpace(1)


def test_log_density_at_mode():
    assert log_density(PLANE, [0.0, 0.0]) == pytest.approx(-1.8378770664093453, abs=1e-15)


def test_log_density_far_point():
    assert log_density(PLANE, [9.0, 0.0]) == pytest.approx(-40.5 - LOG_2PI, rel=1e-15)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_log_density_is_even(a, b):
    assert log_density(PLANE, [a, b]) == log_density(PLANE, [-a, -b])


def test_log_density_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        log_density(PLANE, [1.0, 2.0, 3.0])


def test_offset_ratio_is_stable_at_large_anchor():
    a = np.array([1024.0 ** 2, 0.0])
    d = np.array([1e-7, 2e-7])
    exact = -(a @ d) - 0.5 * (d @ d)
    assert log_density_ratio_from_offset(a, d) == pytest.approx(exact, rel=1e-14)


def test_beta_examples():
    assert beta(PLANE, [1.0, 0.0], [2.0, 5.0]) == -2.0
    assert beta(PLANE, [0.0, 0.0], [2.0, 5.0]) == 0.0
    h = np.array([1.0, 1.0]) / math.sqrt(2)
    assert beta(PLANE, h, [1.0, 1.0]) == pytest.approx(-math.sqrt(2), rel=1e-15)


def test_direction_norm_and_unit():
    d = Direction([3.0, 4.0])
    assert d.h_norm == 5.0
    assert d.unit().h_norm == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Direction([0.0, 0.0]).unit()


def test_conditional_density_mode_and_mass():
    from scipy import integrate

    x = np.array([0.0, 1.3])
    h = np.array([1.0, 0.0])
    assert conditional_density(PLANE, x, h, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    mass, _ = integrate.quad(lambda t: conditional_density(PLANE, x, h, t), -np.inf, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-10)
    # shifted base point moves the mean to -<x,h>
    assert conditional_density(PLANE, [1.0, 0.0], h, -1.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_density_ratio_examples():
    assert density_ratio_in_bounds([1.0, 2.0], [1.0, 2.0])
    assert density_ratio_in_bounds([10.0, 0.0], [10.05, 0.0])
    # log ratio of that pair in closed form
    assert 0.5 * (10.05 ** 2 - 10.0 ** 2) == pytest.approx(0.50125)


@settings(max_examples=300)
@given(st.floats(0.0, 50.0), st.floats(0, 2 * math.pi), st.floats(0.0, 1.0), st.floats(0, 2 * math.pi))
def test_density_ratio_property(r, phi, frac, psi):
    x = r * np.array([math.cos(phi), math.sin(phi)])
    lim = min(1.0, 1.0 / r) if r > 0 else 1.0
    y = x + frac * lim * np.array([math.cos(psi), math.sin(psi)])
    assert density_ratio_in_bounds(x, y)


def test_density_ratio_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    x = rng.uniform(-5, 5, (500, 2))
    y = x + rng.uniform(-0.5, 0.5, (500, 2))
    many = density_ratio_bounds_many(x, y)
    assert list(many) == [density_ratio_in_bounds(a, b) for a, b in zip(x, y)]


def test_mc_total_mass_and_half_plane():
    est = mc_integrate(PLANE, lambda p: np.ones(len(p)), None, 20000, seed=1)
    assert est.mean == 1.0 and est.std_error == 0.0
    half = mc_integrate(PLANE, lambda p: np.ones(len(p)), lambda p: p[:, 0] > 0, 20000, seed=1)
    assert abs(half.mean - 0.5) < 3 * half.std_error


def test_mc_second_moment_and_reproducibility():
    a = mc_integrate(PLANE, lambda p: p[:, 0] ** 2, None, 40000, seed=11)
    b = mc_integrate(PLANE, lambda p: p[:, 0] ** 2, None, 40000, seed=11)
    assert a == b
    assert abs(a.mean - 1.0) < 3 * a.std_error


def test_quadrature_areas():
    square = Polygon(((0, 0), (1, 0), (1, 1), (0, 1)))
    assert quad_integrate_2d("lebesgue", square, lambda x: 1.0, 1e-10) == pytest.approx(1.0, abs=1e-10)
    assert quad_integrate_2d("lebesgue", Disc((0, 0), 1), lambda x: 1.0, 1e-10) == pytest.approx(math.pi, rel=1e-9)


def test_quadrature_hat_gradient_on_rhomb():
    f = HatFunction(2)
    region = Rhomb(2).intersect(f.support())
    val = quad_integrate_2d("lebesgue", region, lambda x: float(np.linalg.norm(f.gradient(x[None])[0])), 1e-10)
    assert val == pytest.approx(math.atan(0.5) / 4, rel=1e-8)
    assert val == pytest.approx(0.1159119, abs=1e-7)


def test_gaussian_mode_anchor_keeps_far_mass():
    # the disc around (30, 0) has Gaussian mass ~ e^-450, far below double range
    d = Disc((30.0, 0.0), 0.01)
    w = quad_integrate_2d("gaussian-log-relative", d, lambda x: 1.0, 1e-10, anchor=(30.0, 0.0))
    assert isinstance(w, LogWeight)
    # relative mass: integral of exp(-30 d1 - |d|^2/2) over the disc ~ area * I0 expansion
    assert w.relative == pytest.approx(math.pi * 1e-4 * (1 + 900 * 1e-4 / 8), rel=1e-4)
    assert w.total_log == pytest.approx(math.log(w.relative) - 450 - LOG_2PI, rel=1e-12)
