from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.fixtures import silver_rotation
from ietlab.iet_core import Permutation, make_iet
from ietlab.renorm import (
    PrimitivityError, Suspension, TieError, determinant, eigen_residual,
    lyapunov_estimate, matmul, periodic_drift, random_lengths, rauzy_class, rv_backward, rv_orbit,
    rv_step, rv_step_2d, self_similar_from_loop, zorich_orbit,
)


def fibonacci(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def test_golden_first_step(golden):
    _, step = rv_step(golden)
    assert step.matrix(2) in ([[1, 0], [1, 1]], [[1, 1], [0, 1]])


def test_golden_types_alternate(golden_orbit):
    kinds = [s.kind for s in golden_orbit.steps]
    assert all(a != b for a, b in zip(kinds, kinds[1:]))
    assert set(golden_orbit.block_lengths()) == {1}


def test_silver_blocks_have_length_two():
    orbit = zorich_orbit(silver_rotation(), 40)
    assert set(orbit.block_lengths()[1:]) == {2}


def test_tie_is_an_error():
    with pytest.raises(TieError):
        rv_step(make_iet(Permutation.reversal(2), [0.5, 0.5]))


def test_suspension_heights_and_round_trip():
    S = Suspension(make_iet(Permutation.reversal(2), [Fraction(2, 5), Fraction(3, 5)]),
                   (Fraction(3, 10), Fraction(-1, 2)))
    assert S.heights == (Fraction(1, 2), Fraction(3, 10))
    S1, step = rv_step_2d(S)
    assert S1.area == S.area
    S0, back = rv_backward(S1)
    assert (back.kind, back.winner, back.loser) == (step.kind, step.winner, step.loser)
    assert S0.tau == S.tau and S0.iet.nums == S.iet.nums


def test_rauzy_class_sizes():
    rc2 = rauzy_class(Permutation.reversal(2))
    assert len(rc2["vertices"]) == 1 and len(rc2["edges"]) == 2
    assert len(rauzy_class(Permutation.reversal(3))["vertices"]) == 3


def test_self_similar_golden_loop():
    T, rho = self_similar_from_loop(Permutation.reversal(2), "tb", prec=256)
    phi = (1 + mpmath.sqrt(5)) / 2
    a, b = sorted(T.lengths)
    assert abs(float(b / a) - float(phi)) < 1e-14
    assert abs(float(rho) - float(phi) ** 2) < 1e-12  # one loop is two golden steps


def test_self_similar_d4_periodic(d4):
    from ietlab.fixtures import SYMMETRIC_D4_LOOP
    from ietlab.fixtures import symmetric_d4_fixture
    _, rho = symmetric_d4_fixture()
    assert eigen_residual(d4, SYMMETRIC_D4_LOOP, rho) < 1e-14
    assert max(periodic_drift(d4, SYMMETRIC_D4_LOOP, 3)) < 1e-9


def test_imprimitive_loop_rejected():
    with pytest.raises(PrimitivityError):
        self_similar_from_loop(Permutation.reversal(2), "t")


def test_lyapunov_symmetric_spectrum():
    rng = np.random.default_rng(4)
    T = make_iet(Permutation.reversal(4), random_lengths(4, 4096, rng), prec=4096)
    est = lyapunov_estimate(zorich_orbit(T, 1000))
    e = est.exponents
    assert e[0] == 1.0
    assert abs(e[0] + e[3]) <= 0.05 and abs(e[1] + e[2]) <= 0.05


def test_q_reproduced_by_block_products():
    rng = np.random.default_rng(5)
    T = make_iet(Permutation.reversal(4), random_lengths(4, 1024, rng), prec=1024)
    orbit = zorich_orbit(T, 30)
    Q = [[int(i == j) for j in range(4)] for i in range(4)]
    for k in range(1, 31):
        Q = matmul(orbit.Z(k), Q)
        assert tuple(map(tuple, Q)) == orbit.Q(k)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([3, 4, 5]))
def test_unimodular_steps_and_partition_identity(seed, d):
    rng = np.random.default_rng(seed)
    T = make_iet(Permutation.reversal(d), random_lengths(d, 512, rng), prec=512)
    orbit = rv_orbit(T, 150)
    for st_ in orbit.steps:
        assert determinant(st_.matrix(d)) in (1, -1)
    for n in range(0, orbit.n_steps + 1, 10):
        Tn = orbit.levels[n]
        qs = orbit.heights(n)
        assert sum(q * x for q, x in zip(qs, Tn.nums)) == T.total_num
        # lambda^(n) B(n) = lambda, exactly
        B = orbit.B[n]
        assert tuple(sum(Tn.nums[a] * B[a][b] for a in range(d)) for b in range(d)) == T.nums


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_block_ends_exactly_where_kind_changes(seed):
    rng = np.random.default_rng(seed)
    T = make_iet(Permutation.reversal(4), random_lengths(4, 512, rng), prec=512)
    orbit = rv_orbit(T, 120)
    kinds = [s.kind for s in orbit.steps]
    changes = [i for i in range(1, len(kinds)) if kinds[i] != kinds[i - 1]]
    assert orbit.zorich_marks == changes
