import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.iet_core import (
    DomainError, Permutation, StructuralError, iet_apply, iet_from_json, iet_inverse_apply,
    is_irreducible, make_iet, omega_kernel_dim, omega_matrix, reflect, reflection_defect,
    sigma_and_genus, validate_permutation,
)


def perm_from_images(pi1_images):
    """Top row in alphabet order, bottom positions given by ``pi1_images``."""
    d = len(pi1_images)
    alphabet = tuple("ABCDEFGH"[:d])
    return Permutation(alphabet, tuple(range(1, d + 1)), tuple(pi1_images))


def all_perms(d):
    return [perm_from_images(p) for p in itertools.permutations(range(1, d + 1))]


def test_flags_on_small_examples():
    f = validate_permutation(Permutation.reversal(2))
    assert f.irreducible and f.symmetric
    assert not validate_permutation(perm_from_images((1, 2, 3))).irreducible
    f4 = validate_permutation(Permutation.reversal(4))
    assert f4.irreducible and f4.symmetric and not f4.degenerate


def test_malformed_bijection_is_structural_error():
    with pytest.raises(StructuralError):
        Permutation(("A", "B"), (1, 1), (2, 1))


def test_omega_hand_values():
    assert omega_matrix(Permutation.reversal(2)) == [[0, 1], [-1, 0]]
    assert omega_matrix(Permutation.reversal(3)) == [[0, 1, 1], [-1, 0, 1], [-1, -1, 0]]


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_omega_antisymmetric_exhaustive(d):
    for p in all_perms(d):
        om = omega_matrix(p)
        for a in range(d):
            for b in range(d):
                assert om[a][b] == -om[b][a]
                assert om[a][b] in (-1, 0, 1)


def test_apply_hand_values():
    T = make_iet(Permutation.reversal(2), [0.4, 0.6])
    assert iet_apply(T, 0.1) == pytest.approx(0.7, abs=1e-15)
    assert iet_apply(T, 0.5) == pytest.approx(0.1, abs=1e-15)


def test_apply_outside_domain():
    T = make_iet(Permutation.reversal(2), [0.4, 0.6])
    with pytest.raises(DomainError):
        iet_apply(T, 1.0)


def test_inverse_is_left_inverse_on_random_points():
    T = make_iet(Permutation.reversal(4), [0.1, 0.2, 0.3, 0.4])
    xs = np.random.default_rng(0).uniform(0, 1, 10_000)
    back = np.array([iet_inverse_apply(T, iet_apply(T, x)) for x in xs])
    assert np.max(np.abs(back - xs)) < 1e-15


@pytest.mark.parametrize("d,expected", [(2, (1, 1)), (4, (1, 2)), (5, (2, 2))])
def test_sigma_and_genus_reversals(d, expected):
    ss = sigma_and_genus(Permutation.reversal(d))
    assert (len(ss.orbits), ss.genus) == expected


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_genus_matches_kernel_rank(d):
    for p in all_perms(d):
        if not is_irreducible(p):
            continue
        ss = sigma_and_genus(p)
        assert len(ss.orbits) == omega_kernel_dim(p) + 1
        assert 2 * ss.genus == d + 1 - len(ss.orbits)


def test_reflection_defect_symmetric_and_not():
    rng = np.random.default_rng(1)
    lam = rng.uniform(0.1, 1, 4)
    T = make_iet(Permutation.reversal(4), list(lam / lam.sum()))
    assert reflection_defect(T) < 1e-12
    N = make_iet(perm_from_images((3, 1, 4, 2)), [0.1, 0.2, 0.3, 0.4])
    assert reflection_defect(N) > 0
    mid = float(T.total) / 2
    assert reflect(T, mid) == mid


def test_json_round_trip():
    obj = {"alphabet": ["A", "B"], "pi0": [1, 2], "pi1": [2, 1], "lambda": [0.25, 0.75],
           "total_length": 1.0}
    T = iet_from_json(obj)
    assert T.lengths_exact == (Fraction(1, 4), Fraction(3, 4))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=4),
       st.floats(0.0, 0.999999))
def test_translation_is_bijection_and_stays_in_interval(lam, x):
    T = make_iet(Permutation.reversal(4), lam)
    x = x * float(T.total)
    y = iet_apply(T, x)
    assert 0 <= y < float(T.total)
    assert math.isclose(iet_inverse_apply(T, y), x, abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=4))
def test_symmetric_interval_maps_to_mirror(lam):
    T = make_iet(Permutation.reversal(4), lam)
    tot = float(T.total)
    for a in range(4):
        lo, hi = float(T.lefts[a]), float(T.rights[a])
        img = (iet_apply(T, lo), iet_apply(T, lo) + (hi - lo))
        assert math.isclose(img[0], tot - hi, abs_tol=1e-12)


def test_long_orbit_stays_in_interval():
    T = make_iet(Permutation.reversal(5), [0.11, 0.23, 0.17, 0.29, 0.2])
    x = 0.123456789
    for _ in range(100_000):
        x = iet_apply(T, x)
        assert 0 <= x < 1.0 + 1e-12
