import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.cocycles import (
    GuardError, FunctionCocycle, LogSingularCocycle, StructuralError, anti_symmetry_defect,
    antisym_decompose, birkhoff_sum, cocycle_from_json, constant_cocycle, derivative_sum_bounds,
    induced_cocycle, induced_means, mean_value, phi_a, scalar_invariants, special_birkhoff,
    symmetric_inducing_interval, theta_model, zeta_singular_model,
)
from ietlab.iet_core import Permutation, make_iet
from ietlab.towers import slim, tower_for_symbol

REV4 = make_iet(Permutation.reversal(4), [0.1, 0.2, 0.3, 0.4])


def rotation(alpha):
    return make_iet(Permutation.reversal(2), [1 - alpha, alpha])


def identity_cocycle(T):
    return FunctionCocycle(T, lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x))


# theta models -------------------------------------------------------------------

@pytest.mark.parametrize("name", ["const1", "log_e_plus_x"])
def test_theta_tau_formulas_agree(name):
    m = theta_model(name)
    s = np.geomspace(1e-12, 0.5, 200)
    assert np.max(np.abs(m.tau(s) - m.tau_from_theta(s)) / m.tau(s)) < 1e-12


@pytest.mark.parametrize("name", ["const1", "log_e_plus_x"])
def test_theta_divergence_grows(name):
    m = theta_model(name)
    parts = [m.divergence_partial(X) for X in (1e4, 1e16, 1e64, 1e256)]
    assert all(b > a + 0.2 for a, b in zip(parts, parts[1:]))


def test_theta_generator_shape():
    m = theta_model("log_e_plus_x")
    t = np.linspace(0, 50, 101)
    g = m.g(t)
    assert g[0] == pytest.approx(1.0)
    assert np.all(np.diff(g) > 0) and np.all(np.diff(g, 2) < 0)
    lo, hi = m.slow_variation_ratio(2.0, np.geomspace(10, 1e12, 50))
    assert 1.0 < lo <= hi < 2.0


# Birkhoff sums --------------------------------------------------------------------

def test_birkhoff_hand_orbit():
    T = rotation(0.6)
    f = identity_cocycle(T)
    assert birkhoff_sum(f, 0.1, 0) == 0.0
    assert birkhoff_sum(f, 0.1, 1) == pytest.approx(0.1, abs=1e-15)
    assert birkhoff_sum(f, 0.1, 3) == pytest.approx(1.1, abs=1e-12)


def test_birkhoff_negative_count():
    T = rotation(0.6)
    f = identity_cocycle(T)
    # T^-1(0.1) = 0.5, T^-2(0.1) = 0.9
    assert birkhoff_sum(f, 0.1, -2) == pytest.approx(-1.4, abs=1e-12)


def test_guard_error_carries_index():
    T = rotation(0.5)
    f = phi_a(T)
    with pytest.raises(GuardError) as err:
        birkhoff_sum(f, 0.25 + 0.25, 3)
    assert err.value.index == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 400), st.integers(0, 400), st.floats(0.01, 0.99))
def test_cocycle_identity(golden, m, n, x):
    f = phi_a(golden)
    x_m = x
    for _ in range(m):
        x_m = float(f.T.apply(x_m))
    lhs = birkhoff_sum(f, x, m + n)
    rhs = birkhoff_sum(f, x, m) + birkhoff_sum(f, x_m, n)
    assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.floats(0.01, 0.99))
def test_antisymmetric_sums_flip_under_reflection(golden, q, x):
    # S_q f(I(T^q x)) = -S_q f(x) for anti-symmetric f
    f = phi_a(golden)
    y = x
    for _ in range(q):
        y = float(f.T.apply(y))
    z = f.total - y
    try:
        a, b = birkhoff_sum(f, x, q), birkhoff_sum(f, z, q)
    except GuardError:
        return
    assert abs(a + b) < 1e-9 * max(1.0, abs(a))


# special Birkhoff sums ----------------------------------------------------------------

def test_special_birkhoff_of_one_is_height(golden_orbit):
    one = constant_cocycle(golden_orbit.levels[0], 1.0)
    sb = special_birkhoff(one, golden_orbit, 8)
    for a in range(2):
        lo, hi = float(sb.Tn.lefts[a]), float(sb.Tn.rights[a])
        assert sb((lo + hi) / 2) == pytest.approx(sb.heights[a])
    total, pieces = sb.l1_norm(16)
    assert total == pytest.approx(math.fsum(pieces))
    expect = sum(h * float(sb.Tn.lengths[a]) for a, h in enumerate(sb.heights))
    assert total == pytest.approx(expect, rel=1e-10)


def test_special_birkhoff_growth_is_subexponential(d4, d4_orbit):
    f = phi_a(d4)
    rows = []
    for n in (10, 20, 30, 40):
        sb = special_birkhoff(f, d4_orbit, n)
        total, _ = sb.l1_norm(12)
        qn = max(d4_orbit.heights(n))
        rows.append((total / float(sb.Tn.total), math.log(qn)))
    # normalized norms stay within a fixed multiple of log ||Q(n)||
    assert all(v <= 4 * lq for v, lq in rows)


# scalar invariants and decomposition --------------------------------------------------

def test_phi_a_invariants_on_reversal():
    inv = scalar_invariants(phi_a(REV4))
    (delta,) = inv.delta.values()
    # direct sum over the explicit constants: 2(d-1) nonzero weights of size 1
    assert delta == 6 and inv.AS == 6 and inv.L == 6


def test_zero_and_negated_invariants():
    zero = LogSingularCocycle(REV4, [0] * 4, [0] * 4)
    inv = scalar_invariants(zero)
    assert inv.L == 0 and inv.AS == 0
    p = LogSingularCocycle(REV4, [0, 1, Fraction(1, 3), 0], [2, 0, -1, 0])
    a, b = scalar_invariants(p), scalar_invariants(p.negated())
    assert a.L == b.L
    assert all(b.delta[k] == -v for k, v in a.delta.items())


def test_boundary_vanishing_is_enforced():
    top, bot = REV4.perm.top, REV4.perm.bottom
    cm = [0] * 4
    cm[top[-1]] = cm[bot[-1]] = 1
    with pytest.raises(StructuralError):
        LogSingularCocycle(REV4, [0] * 4, cm)


def test_decompose_random_constants():
    rng = np.random.default_rng(0)
    for _ in range(10):
        cp = [Fraction(int(v), 7) for v in rng.integers(-5, 6, 4)]
        cm = [Fraction(int(v), 7) for v in rng.integers(-5, 6, 4)]
        phi = LogSingularCocycle(REV4, cp, cm, strict=False)
        pa, ps = antisym_decompose(phi)
        assert scalar_invariants(ps).AS == 0
        assert anti_symmetry_defect(pa) < 1e-10
        xs = rng.uniform(0, 1, 200)
        xs = xs[~phi.in_guard(xs)]
        assert np.max(np.abs(phi(xs) - pa(xs) - ps(xs))) < 1e-10


def test_decompose_is_idempotent_on_phi_a():
    p = phi_a(REV4)
    pa, ps = antisym_decompose(p)
    assert pa.cplus == p.cplus and pa.cminus == p.cminus
    assert all(c == 0 for c in ps.cplus + ps.cminus)


def test_decompose_needs_symmetric_permutation():
    perm = Permutation(("A", "B", "C", "D"), (1, 2, 3, 4), (3, 4, 2, 1))
    T = make_iet(perm, [0.1, 0.2, 0.3, 0.4])
    with pytest.raises(StructuralError):
        antisym_decompose(LogSingularCocycle(T, [0] * 4, [0] * 4, strict=False))


def test_anti_symmetry_defect_examples():
    lefts = [0.0, 0.1, 0.3, 0.6]
    rights = [0.1, 0.3, 0.6, 1.0]
    centered = FunctionCocycle(REV4, lambda x: x - np.select(
        [x < r for r in rights], [(l + r) / 2 for l, r in zip(lefts, rights)]))
    assert anti_symmetry_defect(centered) < 1e-12
    assert anti_symmetry_defect(constant_cocycle(REV4, 1.0)) == pytest.approx(2.0)
    assert anti_symmetry_defect(phi_a(REV4)) < 1e-10


# induced cocycles and means -------------------------------------------------------------

def test_induced_on_whole_interval_is_identity(golden):
    f = phi_a(golden)
    ind = induced_cocycle(golden, f, (0, golden.total_num))
    assert ind.T_J is golden and ind.return_times == (1, 1)
    assert ind(0.3) == pytest.approx(float(f(0.3)))


def test_kac_formula(golden, d4):
    for T, J in ((golden, (0.2, 0.7)), (d4, (0.1, 0.35))):
        ind = induced_cocycle(T, constant_cocycle(T, 1.0), J)
        assert abs(float(ind.kac_sum()) - float(T.total)) < 1e-8


def test_symmetric_induced_cocycle_stays_antisymmetric(d4):
    J = symmetric_inducing_interval(d4)
    ind = induced_cocycle(d4, phi_a(d4), J)
    assert ind.T_J.d == d4.d
    means = induced_means(ind, 0.1)
    assert max(abs(m) for m in means) < 1e-9


def test_mean_value_examples(d4):
    assert mean_value(lambda x: 3.5, (0.2, 0.9)) == pytest.approx(3.5)
    assert mean_value(lambda x: -math.log(x), (0.0, 1.0)) == pytest.approx(1.0, abs=1e-10)
    f = phi_a(d4)
    for a in range(4):
        J = slim((f.lefts[a], f.rights[a]), 0.1)
        assert abs(mean_value(f, J)) < 1e-9


# singular models ----------------------------------------------------------------------

def test_zeta_model_plug_in():
    m = zeta_singular_model(REV4, 2, 0, "odd", 0)
    assert m.is_log and m.coef == pytest.approx(-0.25)
    m = zeta_singular_model(REV4, 3, 0, "odd", "A")
    assert not m.is_log and m.coef == pytest.approx(1 / 9) and m.exponent == pytest.approx(-1 / 3)
    assert float(m(0.001)) == pytest.approx(0.001 ** (-1 / 3) / 9)
    for mm in range(2, 7):
        assert zeta_singular_model(REV4, mm, mm - 2, "even", 1).is_log
    with pytest.raises(ValueError):
        zeta_singular_model(REV4, 3, 2, "odd", 0)


def test_smooth_derivative_sum_bound(golden_orbit):
    T = golden_orbit.levels[0]
    f = FunctionCocycle(T, lambda x: np.sin(2 * np.pi * x), lambda x: 2 * np.pi * np.cos(2 * np.pi * x))
    tw = tower_for_symbol(golden_orbit, 12, 0)
    b = derivative_sum_bounds(f, tw)
    assert b.max_abs <= tw.height * 2 * np.pi


def test_derivative_bounds_refinement_stable(golden_orbit):
    f = phi_a(golden_orbit.levels[0])
    # 16 base points undersample the tall tower's maximum; 32 is the smallest stable grid
    for sym in (0, 1):
        tw = tower_for_symbol(golden_orbit, 14, sym)
        a = derivative_sum_bounds(f, tw, grid=32)
        b = derivative_sum_bounds(f, tw, grid=64)
        assert abs(b.max_abs - a.max_abs) < 0.05 * a.max_abs
        assert abs(b.min_abs - a.min_abs) < 0.05 * a.min_abs


# spec files ---------------------------------------------------------------------------

def test_cocycle_from_json_kinds(golden):
    assert float(cocycle_from_json(golden, {"kind": "constant", "value": 2})(0.3)) == 2.0
    pa = cocycle_from_json(golden, {"kind": "phi_a", "a": "1/2"})
    assert pa.cplus == phi_a(golden, Fraction(1, 2)).cplus
    lg = cocycle_from_json(golden, {"kind": "log", "Cplus": [0, 1], "Cminus": ["1/3", 0]})
    assert lg.cminus[0] == Fraction(1, 3)
    th = cocycle_from_json(golden, {"kind": "theta", "g": "log_e_plus_x",
                                    "pieces": [{"left": 1.0}, {"right": 0.5}]})
    assert th.Z_theta() > 0
    with pytest.raises(StructuralError):
        cocycle_from_json(golden, {"kind": "nope"})
