from fractions import Fraction

import numpy as np
import pytest

from ietlab.cocycles import FunctionCocycle, birkhoff_sum, constant_cocycle, phi_a
from ietlab.ergodicity import (
    BCPreconditionError, bc_construct, centered_windows, criterion_harness, equidistribution_test,
    essential_value_scan, harness_towers, rigidity_times, skew_orbit,
)
from ietlab.iet_core import DomainError
from ietlab.specflow import coboundary
from ietlab.towers import tower_for_symbol


# skew products ------------------------------------------------------------------

def test_zero_cocycle_keeps_fiber(golden):
    tr = skew_orbit(constant_cocycle(golden, 0.0), 0.3, 0.7, 10_000, windows=[(0.5, 1.0)])
    assert tr.fiber_min == tr.fiber_max == 0.7
    assert tr.counts[0] == 10_000 and tr.final[1] == 0.7


def test_constant_cocycle_drifts_linearly(golden):
    tr = skew_orbit(constant_cocycle(golden, 0.25), 0.3, 1.0, 4000)
    assert tr.final[1] == pytest.approx(1.0 + 4000 * 0.25)
    assert tr.fiber_max == pytest.approx(1.0 + 3999 * 0.25)


def test_coboundary_fiber_is_bounded(golden):
    f = coboundary(golden, h=np.cos)
    tr = skew_orbit(f, 0.123, 0.0, 200_000)
    assert -2 <= tr.fiber_min and tr.fiber_max <= 2


def test_checkpoints_match_recomputed_sums(d4):
    tr = skew_orbit(phi_a(d4), 0.3137, 0.0, 200_000, checkpoints=100, seed=3)
    assert tr.status == "ok" and len(tr.checkpoints) == 100
    assert tr.max_checkpoint_error < 1e-9
    # the last fiber value is the full Birkhoff sum
    assert tr.final[1] == pytest.approx(birkhoff_sum(phi_a(d4), 0.3137, 200_000), abs=1e-8)


def test_equidistribution_identity_and_starvation(golden):
    tr = skew_orbit(phi_a(golden), 0.41, 0.0, 100_000, windows=[(-1, 1)])
    res = equidistribution_test(tr, (-1, 1), (-1, 1))
    assert res.status == "ok" and res.ratio == 1.0 and res.consistent
    c = constant_cocycle(golden, 1.0)
    tr = skew_orbit(c, 0.41, 0.0, 10_000, windows=[(0.2, 0.8), (1.2, 1.8)])
    assert equidistribution_test(tr, (0.2, 0.8), (1.2, 1.8)).status == "starved"


# essential values ---------------------------------------------------------------

R_GRID = np.linspace(-1.0, 1.0, 81)


def test_zero_cocycle_only_zero_survives(golden):
    ns = rigidity_times(_orbit(golden), q_max=400)
    scan = essential_value_scan(constant_cocycle(golden, 0.0), n_range=ns, eps=0.01, r_grid=R_GRID)
    assert list(scan.candidates) == [0.0]


def test_coboundary_candidates_near_zero(golden):
    eps = 0.05
    f = coboundary(golden, h=np.cos)
    ns = rigidity_times(_orbit(golden), q_max=400)
    scan = essential_value_scan(f, n_range=ns, eps=eps, r_grid=R_GRID)
    assert scan.candidates.size and np.all(np.abs(scan.candidates) < eps + 0.05)


def test_scan_is_monotone_in_eps(golden):
    f = phi_a(golden)
    ns = rigidity_times(_orbit(golden), q_max=200)
    small = essential_value_scan(f, n_range=ns, eps=0.02, r_grid=R_GRID)
    large = essential_value_scan(f, n_range=ns, eps=0.05, r_grid=R_GRID)
    assert set(small.candidates) <= set(large.candidates)
    assert np.all(small.evidence <= large.evidence + 1e-15)


def test_phi_a_scan_is_dense(d4, d4_orbit):
    ns = rigidity_times(d4_orbit, q_max=300)
    scan = essential_value_scan(phi_a(d4), n_range=ns, eps=0.05, r_grid=np.linspace(-0.5, 0.5, 21))
    assert scan.candidates.size == 21


def _orbit(T):
    from ietlab.renorm import rv_orbit
    return rv_orbit(T, 40)


# hole filling ---------------------------------------------------------------------

def golden_bc_inputs(golden_orbit, C=2.0):
    seen, towers = set(), []
    for n in range(1, golden_orbit.n_steps + 1):
        q = golden_orbit.heights(n)[0]
        if q not in seen and 2 <= q <= 20_000:
            seen.add(q)
            towers.append(tower_for_symbol(golden_orbit, n, 0))
    D = 1 / (16 * C)
    return towers, [centered_windows(tw, D) for tw in towers]


def test_bc_exact_ledger(golden_orbit):
    towers, fams = golden_bc_inputs(golden_orbit)
    k = next(i for i, tw in enumerate(towers) if 10 * 2.0 / tw.height <= 0.5)
    bc = bc_construct(towers, fams, (Fraction(1, 4), Fraction(3, 4)), k=k)
    assert bc.pairwise_disjoint()
    assert bc.ledger_identity_error() < 1e-12
    assert all(lv.lower_bound_ok for lv in bc.levels)
    assert all(lv.shift_escapes == 0 for lv in bc.levels)
    for lv in bc.levels:
        assert lv.measure_hat == sum(bc.T.exact(b - a) for a, b in lv.A_tilde + lv.A_shifted)


def test_bc_rejects_short_interval(golden_orbit):
    towers, fams = golden_bc_inputs(golden_orbit)
    with pytest.raises(BCPreconditionError, match="10C/q_k"):
        bc_construct(towers, fams, (Fraction(1, 4), Fraction(3, 4)), k=0)


# criterion harness -----------------------------------------------------------------

def test_harness_small_scales(d4, d4_orbit):
    towers = harness_towers(d4_orbit, 0, count=2)
    rep = criterion_harness(d4, phi_a(d4), towers)
    for sc in rep.scales:
        assert sc.in_window and sc.inside_quarter
        assert sc.max_residual < 1e-9
        assert not sc.bracket_failures
        if sc.alpha == "I":
            assert sc.target == 0.0
    assert rep.to_dict()["scales"][0]["q"] == towers[0].height


def test_harness_refuses_non_monotone(d4, d4_orbit):
    wiggly = FunctionCocycle(d4, lambda x: np.sin(40 * np.pi * x), lambda x: 40 * np.pi * np.cos(40 * np.pi * x))
    with pytest.raises(DomainError, match="monotonic"):
        criterion_harness(d4, wiggly, harness_towers(d4_orbit, 0, count=1))
