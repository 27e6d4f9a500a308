import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussext.domains import Disc, Rhomb
from gaussext.norms import (
    NORM_CSV_COLUMNS,
    HatFunction,
    eval_hat,
    fit_slope,
    grad_hat,
    hat_norm,
    scaling_exponent,
    sector_gradient_l1,
    sobolev_norm,
    write_scaling_csv,
)

# (m, p) -> (Lp part, gradient part), both relative to rho(apex)**(1/p).
# Frozen from an independent polar scipy.dblquad over the sector at rtol 1e-12.
GAUSSIAN_PARTS = {
    (4, 2): (0.015545003137590272, 0.6970924397433126),
    (8, 1): (1.708107695691634e-05, 0.003878651269479706),
    (4, 4): (0.09622423952640843, 3.339682475310041),
    (16, 2): (0.0004915348291242629, 0.35324056284197564),
}


def test_hat_values():
    f = HatFunction(2)
    assert eval_hat(f, f.apex) == 1.0
    assert eval_hat(f, [4.125, 0.0]) == pytest.approx(0.5)
    assert eval_hat(f, f.apex + [0.25, 0.0]) == 0.0
    with pytest.raises(ValueError):
        HatFunction(1)


def test_hat_gradient_examples():
    f = HatFunction(2)
    assert grad_hat(f, [4.125, 0.0]) == pytest.approx([-4.0, 0.0])
    assert np.all(grad_hat(f, [[0.0, 0.0], [4.0, 1.0]]) == 0.0)
    g, flag = grad_hat(f, f.apex[None], return_flag=True)
    assert flag[0] and np.all(g == 0)


@pytest.mark.parametrize("m", [2, 3, 5])
def test_gradient_magnitudes_take_two_values(m):
    f = HatFunction(m)
    rng = np.random.default_rng(m)
    x = f.apex + rng.uniform(-2, 2, (100000, 2)) * f.support_radius
    n = np.linalg.norm(grad_hat(f, x), axis=1)
    assert np.all(np.isclose(n, 0.0) | np.isclose(n, m * m))
    assert np.all(n >= eval_hat(f, x) - 1e-15)


def test_zero_function_norm():
    v = sobolev_norm(lambda x: 0.0, Disc((0, 0), 1), 2, "lebesgue", gradient=lambda x: np.zeros(2))
    assert v.relative == 0.0 and v.log_norm == -math.inf


@pytest.mark.parametrize("m", [2, 4, 8])
def test_lebesgue_hat_norm_closed_form(m):
    th = math.atan(1.0 / m)
    v = hat_norm(m, 1.0, "lebesgue", tol=1e-11)
    assert v.grad_part.relative == pytest.approx(sector_gradient_l1(m), rel=1e-9)
    assert v.lp_part.relative == pytest.approx(th / (3 * m ** 4), rel=1e-9)


@pytest.mark.parametrize("key", sorted(GAUSSIAN_PARTS))
def test_gaussian_hat_norm_frozen(key):
    m, p = key
    v = hat_norm(m, p, tol=1e-10)
    lp, gp = GAUSSIAN_PARTS[key]
    assert v.lp_part.relative == pytest.approx(lp, rel=1e-8)
    assert v.grad_part.relative == pytest.approx(gp, rel=1e-8)
    assert v.reference_log == pytest.approx(HatFunction(m).apex_log_density / p)


@pytest.mark.parametrize("m", [2, 4, 8])
def test_gaussian_lebesgue_sandwich(m):
    gauss = hat_norm(m, 1.0).grad_part.relative
    leb = sector_gradient_l1(m)
    assert math.exp(-1) * leb <= gauss <= math.exp(1.5) * leb


def test_gaussian_norm_does_not_underflow_at_large_m():
    v = hat_norm(32, 2.0)
    assert math.isfinite(v.log_norm) and v.log_norm < -2.6e5
    assert v.relative > 0


def test_fit_slope_recovers_power():
    xs = [2, 4, 8, 16]
    assert fit_slope(xs, [3 * x ** -1.5 for x in xs]) == pytest.approx(-1.5)


@settings(max_examples=20, deadline=None)
@given(st.floats(-4, 4), st.floats(0.1, 10))
def test_fit_slope_property(k, c):
    xs = [3, 5, 9, 20]
    assert fit_slope(xs, [c * x ** k for x in xs]) == pytest.approx(k, abs=1e-9)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_scaling_exponent(p):
    fit = scaling_exponent(p, [4, 8, 16, 32])
    assert abs(fit.slope - (2 - 5 / p)) <= 0.15


def test_scaling_exponent_p5():
    fit = scaling_exponent(5.0, [4, 8, 16, 32])
    assert fit.expected == 1.0
    assert abs(fit.slope - 1.0) <= 0.15


def test_scaling_needs_three_points():
    with pytest.raises(ValueError):
        scaling_exponent(2.0, [4, 8])


def test_scaling_csv(tmp_path):
    fit = scaling_exponent(2.0, [4, 8, 16])
    out = tmp_path / "n.csv"
    write_scaling_csv([fit], out)
    raw = out.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert tuple(rows[0]) == NORM_CSV_COLUMNS
    assert len(rows) == 4
    assert float(rows[1][4]) == pytest.approx(fit.norms[0].relative)
