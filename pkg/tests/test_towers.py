from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.iet_core import Permutation, make_iet
from ietlab.renorm import Suspension, random_lengths, suspension_violations
from ietlab.towers import (
    Tower, brute_force_spacings, check_conditions, gaps_outside_tower, levels_disjoint,
    partition_defect, rotation_gap_check, slim, spacing_return_levels, spacing_sign_pattern,
    three_distance_gaps, tower_for_symbol, track_midpoints,
)


def fib_numbers(n):
    out, a, b = set(), 1, 1
    for _ in range(n):
        out.add(a)
        a, b = b, a + b
    return out


def test_golden_heights_are_fibonacci(golden_orbit):
    fibs = fib_numbers(80)
    for n in range(1, 40):
        assert set(golden_orbit.heights(n)) <= fibs


def test_partition_and_disjointness(golden_orbit):
    for n in (5, 12, 20):
        assert partition_defect(golden_orbit, n) == 0
        for a in range(2):
            tw = tower_for_symbol(golden_orbit, n, a)
            assert tw.height == golden_orbit.heights(n)[a]
            assert levels_disjoint(tw)


def test_rotation_gaps_match_three_distance_oracle(golden_orbit):
    for n in range(2, 24):
        for a in range(2):
            tw = tower_for_symbol(golden_orbit, n, a)
            assert rotation_gap_check(tw)
            g = gaps_outside_tower(tw, orbit=golden_orbit)
            assert len(set(g.length_nums)) <= 3
            assert g.count <= tw.height + 1
            assert sum(g.length_nums) + tw.measure_num() == tw.T.total_num


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10 ** 6 - 1), st.integers(1, 300))
def test_three_distance_oracle_against_brute_force(num, n_points):
    alpha = Fraction(num, 10 ** 6)
    if n_points > alpha.denominator:  # points repeat, so there is no gap multiset
        with pytest.raises(ValueError):
            three_distance_gaps(alpha, n_points)
        return
    assert three_distance_gaps(alpha, n_points) == brute_force_spacings(alpha, n_points)


def test_d4_fixture_gap_ratio(d4_orbit):
    for n in range(1, 11):
        for a in range(4):
            g = gaps_outside_tower(tower_for_symbol(d4_orbit, n, a), orbit=d4_orbit)
            assert g.max_ratio <= 2 * 4 - 2 + 1


def _synthetic(T, n, q, width, shift, gap_at_end=0):
    return Tower(T, n, 0, 0, width, tuple(i * width for i in range(q)), shift)


def test_qn2_5_boundary_and_qn4_violation(golden):
    C = 1.5
    W = golden.total_num // 2000
    t1 = _synthetic(golden, 1, 1, W, W // 10)
    t2 = _synthetic(golden, 2, int(320 * C * C), W // 2, W // 20)
    rep = check_conditions([t1, t2], C)
    assert rep.records[0].qn2_5 is True
    q = 10
    C = 2.0
    width = (golden.total_num - int(golden.total_num * 2 * C / q)) // q
    holey = _synthetic(golden, 3, q, width, width // 10)
    rep = check_conditions([holey, holey], C)
    assert rep.records[0].qn4 is False


def test_golden_qn3_holds_at_c2(golden_orbit):
    towers = [tower_for_symbol(golden_orbit, n, 0) for n in range(2, 30, 2)]  # the taller tower
    rep = check_conditions(towers, 2.0)
    assert all(r.qn3 for r in rep.records)
    assert rep.qn1_statistic > 1


def test_slim_examples():
    assert slim((0.0, 1.0), 0.25) == (0.25, 0.75)
    assert slim((0.2, 0.4), 0.0) == (0.2, 0.4)
    with pytest.raises(ValueError):
        slim((0.0, 1.0), 0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(0.001, 10), st.floats(0, 0.49), st.floats(0, 0.49))
def test_slim_monotone_and_nested(a, length, d1, d2):
    J = (a, a + length)
    lo, hi = sorted((d1, d2))
    A, B = slim(J, lo), slim(J, hi)
    assert A[0] <= B[0] + 1e-12 and B[1] <= A[1] + 1e-12
    inner = slim(A, d2)
    assert A[0] <= inner[0] + 1e-12 and inner[1] <= A[1] + 1e-12


def test_rotation_midpoints_hit(golden_orbit):
    for n in range(1, 13):
        hits = track_midpoints(golden_orbit, n)
        assert any(h.found for h in hits.values())


def test_symmetric_d4_midpoints_hit(d4_orbit):
    for n in range(1, 12):
        hits = track_midpoints(d4_orbit, n)
        assert any(h.found for h in hits.values())


def test_spacing_sampler_bound():
    rng = np.random.default_rng(3)
    p = Permutation.reversal(4)
    tau = (Fraction(5, 2), Fraction(-1, 3), Fraction(-1, 2), Fraction(-2))
    assert spacing_sign_pattern(p, tau) and not suspension_violations(p, tau)
    tested = 0
    for _ in range(10):
        T = make_iet(p, random_lengths(4, 512, rng), prec=512)
        orbit, levels = spacing_return_levels(Suspension(T, tau), 2000)
        for n in levels:
            g = gaps_outside_tower(tower_for_symbol(orbit, n, p.top[0]), orbit=orbit)
            assert max(g.max_ratio, g.boundary_ratio) <= 6
            tested += 1
    assert tested > 0
