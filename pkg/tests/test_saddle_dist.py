import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.iet_core import DomainError
from ietlab.saddle_dist import (
    SaddleJet, SectorClass, frak_B, frak_C, frak_C_class, frak_C_table, parity_balance,
    reflection_defect, vanishing_defect,
)


def test_frak_B_hand_values():
    assert frak_B("1/2", "1/2") == pytest.approx(2.0, abs=1e-15)
    assert frak_B(1, 1) == pytest.approx(math.pi, abs=1e-15)
    assert complex(frak_B("1/2", "1/2", prec=256)) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(DomainError):
        frak_B(0, 1)


@settings(max_examples=50, deadline=None)
@given(st.fractions(min_value="1/20", max_value=3, max_denominator=20),
       st.fractions(min_value="1/20", max_value=3, max_denominator=20))
def test_frak_B_conjugate_symmetry(x, y):
    a, b = frak_B(x, y), frak_B(y, x)
    assert abs(a - b.conjugate()) <= 1e-12 * max(1.0, abs(a))


def test_frak_B_high_precision_agrees():
    for x, y in (("1/3", "2/3"), ("3/4", "1/4"), ("5/6", "1/2")):
        lo = frak_B(x, y)
        hi = complex(frak_B(x, y, prec=200))
        assert abs(lo - hi) < 1e-14


def test_zero_order_constant_is_twice_value():
    f = 1.7
    jet = SaddleJet(2, [[f]])
    for l in range(4):
        assert frak_C(jet, l, 0) == pytest.approx(2 * f, abs=1e-14)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_reflection_and_vanishing_random_jets(m):
    rng = np.random.default_rng(100 + m)
    for _ in range(5):
        jet = SaddleJet.random(m, rng)
        assert reflection_defect(jet) < 1e-10
        assert vanishing_defect(jet) < 1e-10


def test_identities_at_high_precision():
    rng = np.random.default_rng(7)
    for m in (3, 4):
        jet = SaddleJet.random(m, rng)
        assert reflection_defect(jet, prec=256) < 1e-60
        assert vanishing_defect(jet, prec=256) < 1e-60


@pytest.mark.parametrize("m", [2, 4, 6])
def test_parity_balance_vanishes_for_real_jets(m):
    rng = np.random.default_rng(m)
    for _ in range(5):
        jet = SaddleJet.random(m, rng, real=True)
        assert jet.reality_defect() == 0.0
        assert abs(parity_balance(jet)) < 1e-10


def test_parity_balance_single_middle_entry():
    m = 4
    rows = [[0j] * (k + 1) for k in range(m - 1)]
    rows[m - 2][(m - 2) // 2] = 1.0
    assert abs(parity_balance(SaddleJet(m, rows))) < 1e-12


def test_linearity_in_jet():
    rng = np.random.default_rng(3)
    a, b = SaddleJet.random(4, rng), SaddleJet.random(4, rng)
    t = 0.37 - 1.1j
    ab = SaddleJet(4, [[x + t * y for x, y in zip(ra, rb)] for ra, rb in zip(a.jet, b.jet)])
    for l, k, v in frak_C_table(ab):
        assert abs(v - frak_C(a, l, k) - t * frak_C(b, l, k)) < 1e-12


def test_sector_classes():
    jet = SaddleJet.random(3, np.random.default_rng(0))
    assert frak_C_class(jet, SectorClass(3, [2]), 1) == frak_C(jet, 2, 1)
    assert frak_C_class(jet, SectorClass(3, []), 0) == 0
    assert SectorClass(3, [1, 3, 5]).parity == 1
    with pytest.raises(ValueError, match="parit"):
        SectorClass(3, [0, 1])
    with pytest.raises(IndexError):
        SectorClass(3, [6])


def test_jet_shape_and_ranges():
    with pytest.raises(ValueError):
        SaddleJet(3, [[1]])
    jet = SaddleJet(2, [[1]])
    with pytest.raises(IndexError):
        frak_C(jet, 0, 1)
    with pytest.raises(IndexError):
        frak_C(jet, 4, 0)
    assert SaddleJet.from_json({"m": 2, "jet": [[[1, 2]]]}).jet[0][0] == 1 + 2j
    assert isinstance(frak_C(jet, 1, 0, prec=128), mpmath.mpc)
