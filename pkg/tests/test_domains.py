import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaussext.domains import (
    Disc,
    HalfPlane,
    Polygon,
    ProductDomain,
    Rhomb,
    domain_from_json,
    ellipsoid_contains,
    h_open_witness,
    remark_point,
    z_statistic,
)


def test_rhomb_membership():
    assert Rhomb(3).contains(np.array([0.0, 0.0]))
    assert not Rhomb(3).contains(np.array([9.0, 0.0]))
    assert Rhomb(2).contains(np.array([2.0, 0.9]))
    assert not Rhomb(2).contains(np.array([2.0, 1.1]))


@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_rhomb_section_through_centre(m):
    sec = Rhomb(m).section(np.zeros(2), np.array([1.0, 0.0]))
    assert (sec.t_lower, sec.t_upper) == pytest.approx((-m * m, m * m))


def test_half_plane_parallel_section_is_whole_line():
    sec = HalfPlane((1.0, 0.0), 0.0).section(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert sec.t_lower == -math.inf and sec.t_upper == math.inf


def test_half_plane_section_misses():
    sec = HalfPlane((1.0, 0.0), 0.0).section(np.array([-1.0, 0.0]), np.array([0.0, 1.0]))
    assert not sec.nonempty


@given(st.floats(0, 2 * math.pi))
def test_disc_section_symmetric(phi):
    h = np.array([math.cos(phi), math.sin(phi)])
    sec = Disc((1.5, -0.5), 0.7).section(np.array([1.5, -0.5]), h)
    assert (sec.t_lower, sec.t_upper) == pytest.approx((-0.7, 0.7))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_section_endpoints_match_membership(a, b, phi):
    dom = Rhomb(2).intersect(Disc((0.5, 0.0), 1.5))
    x = np.array([a, b])
    h = np.array([math.cos(phi), math.sin(phi)])
    sec = dom.section(x, h)
    if not sec.nonempty:
        return
    for t in np.linspace(sec.t_lower, sec.t_upper, 9)[1:-1]:
        assert dom.contains(x + t * h)
    eps = 1e-7
    assert not dom.contains(x + (sec.t_lower - eps) * h)
    assert not dom.contains(x + (sec.t_upper + eps) * h)


def test_json_round_trip():
    for dom in (Rhomb(3), Disc((0.0, 1.0), 2.0), HalfPlane((0.6, 0.8), 0.1),
                Polygon(((0, 0), (1, 0), (0, 1))), Rhomb(2).intersect(Disc((4.0, 0.0), 0.25))):
        back = domain_from_json(dom.to_json())
        pts = np.random.default_rng(0).uniform(-5, 5, (200, 2))
        assert np.array_equal(dom.contains(pts), back.contains(pts))
        assert json.loads(back.to_json()) == json.loads(dom.to_json())


def test_product_domain_membership_and_witness():
    dom = ProductDomain(10)
    x = np.zeros((dom.block_count, 2))
    assert dom.contains(x)
    assert h_open_witness(dom, x, 1.0)
    assert h_open_witness(dom, x, 0.0)


def test_remark_point_defeats_every_ball():
    dom = ProductDomain(40)
    x = remark_point(40)
    assert dom.contains(x)
    for r in (1e-1, 1e-3, 1e-6):
        assert not h_open_witness(dom, x, r)


def test_ellipsoid_examples():
    assert ellipsoid_contains(np.zeros(5), 5)
    assert not ellipsoid_contains(np.array([1.1, 0, 0]), 3)
    for M in (1, 5, 50, 500):
        assert ellipsoid_contains(np.full(M, 0.5), M)


def test_rhomb_mass_increases():
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((200000, 2))
    mass = [Rhomb(m).contains(pts).mean() for m in (2, 4, 8)]
    assert mass[0] < mass[1] < mass[2]


def test_z_statistic_tends_to_one():
    x = np.random.default_rng(2).standard_normal(100000)
    assert abs(z_statistic(x) - 1.0) < 0.02
