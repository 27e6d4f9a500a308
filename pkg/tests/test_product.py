import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaussext.norms import HatFunction
from gaussext.product import (
    BASEL,
    TABLE_CSV_COLUMNS,
    choose_coefficients,
    damping_tail,
    damping_weight,
    divergence_table,
    product_mass_mc,
    product_membership_and_f,
    product_table,
    write_table_csv,
)


@pytest.mark.parametrize("damping", ["geometric", "inverse-square"])
@pytest.mark.parametrize("p", [1.0, 2.0, 4.0])
def test_damping_weights_sum_to_basel(damping, p):
    head = sum(damping_weight(k, p, damping) for k in range(1, 41))
    assert head + damping_tail(40, p, damping) == pytest.approx(BASEL, rel=1e-12)


@given(st.integers(1, 60), st.sampled_from([1.0, 2.0, 3.0]))
def test_damping_tail_is_remaining_sum(kmax, p):
    direct = sum(damping_weight(k, p) for k in range(kmax + 1, 4000))
    assert damping_tail(kmax, p) == pytest.approx(direct, rel=1e-9, abs=1e-300)


def test_unknown_damping():
    with pytest.raises(ValueError):
        damping_weight(1, 2.0, "harmonic")


@pytest.mark.parametrize("damping", ["geometric", "inverse-square"])
def test_bounded_column_is_partial_basel(damping):
    s = choose_coefficients(2.0, 4, damping)
    expected = np.cumsum([damping_weight(k, 2.0, damping) for k in s.ks])
    assert np.allclose(s.bounded_partial_sums(), expected, rtol=1e-8)
    assert s.bounded_invariant()


def test_inverse_square_partial_sums_approach_basel():
    s = choose_coefficients(1.0, 6, "inverse-square")
    assert s.bounded_partial_sums()[-1] == pytest.approx(sum(1 / k ** 2 for k in range(1, 7)), rel=1e-8)


def test_schedule_validation():
    with pytest.raises(ValueError):
        choose_coefficients(2.0, 2)
    with pytest.raises(ValueError):
        choose_coefficients(0.5, 4)


def test_coefficients_are_huge_but_finite():
    s = choose_coefficients(2.0, 5)
    assert s.log_C[5] > 1e5 and math.isfinite(s.log_C[5])
    assert s.coefficient_log(32) == s.log_C[5]
    assert s.coefficient_log(12) == -math.inf


def test_membership_at_origin():
    s = choose_coefficients(2.0, 3)
    ev = product_membership_and_f(s, np.zeros((7, 2)))
    assert ev.in_K and ev.f_value == 0.0 and ev.log_f_value == -math.inf


def test_value_at_an_apex():
    s = choose_coefficients(2.0, 3)
    x = np.zeros((7, 2))
    x[4 - 2] = HatFunction(4).apex - [1e-9, 0.0]
    ev = product_membership_and_f(s, x)
    assert ev.in_K
    assert ev.log_f_value >= s.log_C[2] + math.log(1 - 16e-9)
    assert ev.log_f_value > 60


def test_truncation_must_cover_support():
    s = choose_coefficients(2.0, 3)
    with pytest.raises(ValueError):
        product_membership_and_f(s, np.zeros((3, 2)), truncation=4)


def test_mass_mc_increases_and_is_reproducible():
    est = [product_mass_mc(first, 16, 40000, seed=3) for first in (2, 3, 4)]
    assert est[0].mean < est[1].mean < est[2].mean
    assert est[2].mean > 0.9
    assert product_mass_mc(2, 16, 40000, seed=3) == est[0]


def test_divergence_table_needs_every_certificate():
    s = choose_coefficients(1.0, 3)
    with pytest.raises(KeyError):
        divergence_table(s, {2: SimpleNamespace(ratio=1.0)})


def test_p1_table_invariants():
    t = product_table(1.0, 5)
    assert t.bounded_ok() and t.schedule.bounded_invariant()
    d = [r.divergence_term_log for r in t.rows]
    assert all(b > a for a, b in zip(d, d[1:]))
    assert t.divergence_increasing()


def test_p2_table_low_resolution(tmp_path):
    t = product_table(2.0, 4, resolution=96)
    assert t.bounded_ok() and t.divergence_increasing() and t.schedule.unbounded_invariant()
    out = tmp_path / "t.csv"
    write_table_csv(t, out)
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(TABLE_CSV_COLUMNS) and len(lines) == 5


def test_inverse_square_damping_loses_early_growth_at_p2():
    # with 1/k^2 weights the divergence column only grows from k ~ 2p/ln2 on
    t = product_table(2.0, 4, resolution=96, damping="inverse-square")
    assert t.bounded_ok()
    assert not t.divergence_increasing()
