"""Interval exchange transformations: permutations, the Omega matrix,
evaluation, singularity orbits and genus, and the reflection symmetry."""

from __future__ import annotations

import bisect
import functools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from ._prec import DOUBLE_BITS, dyadic_to_float, dyadic_value, to_dyadic


class StructuralError(ValueError):
    """Malformed combinatorial input."""


class DomainError(ValueError):
    """A point or parameter outside the domain of an operation."""


class ConsistencyError(RuntimeError):
    """Two independent computations of the same quantity disagree."""


@dataclass(frozen=True)
class Permutation:
    """A pair of bijections ``pi0, pi1 : alphabet -> {1..d}``.

    ``pi0[i]`` and ``pi1[i]`` are the positions of ``alphabet[i]`` in the top
    and bottom rows.
    """

    alphabet: tuple[str, ...]
    pi0: tuple[int, ...]
    pi1: tuple[int, ...]

    def __post_init__(self):
        d = len(self.alphabet)
        if d == 0:
            raise StructuralError("empty alphabet")
        if len(set(self.alphabet)) != d:
            raise StructuralError("alphabet labels are not distinct")
        for name, row in (("pi0", self.pi0), ("pi1", self.pi1)):
            if len(row) != d or sorted(row) != list(range(1, d + 1)):
                raise StructuralError(f"{name} is not a bijection onto 1..{d}")

    @classmethod
    def from_rows(cls, top: Sequence[str], bottom: Sequence[str],
                  alphabet: Sequence[str] | None = None) -> "Permutation":
        top, bottom = [str(a) for a in top], [str(a) for a in bottom]
        if sorted(top) != sorted(bottom) or len(set(top)) != len(top):
            raise StructuralError("top and bottom rows use different labels")
        alphabet = tuple(str(a) for a in alphabet) if alphabet is not None else tuple(sorted(top))
        if sorted(alphabet) != sorted(top):
            raise StructuralError("alphabet does not match the rows")
        pos0 = {a: j + 1 for j, a in enumerate(top)}
        pos1 = {a: j + 1 for j, a in enumerate(bottom)}
        return cls(alphabet, tuple(pos0[a] for a in alphabet), tuple(pos1[a] for a in alphabet))

    @classmethod
    def reversal(cls, d: int) -> "Permutation":
        labels = [chr(ord("A") + i) for i in range(d)]
        return cls.from_rows(labels, labels[::-1], labels)

    @property
    def d(self) -> int:
        return len(self.alphabet)

    @functools.cached_property
    def top(self) -> tuple[int, ...]:
        """Alphabet indices in top-row order."""
        row = [0] * self.d
        for i, p in enumerate(self.pi0):
            row[p - 1] = i
        return tuple(row)

    @functools.cached_property
    def bottom(self) -> tuple[int, ...]:
        row = [0] * self.d
        for i, p in enumerate(self.pi1):
            row[p - 1] = i
        return tuple(row)

    def index(self, label: str) -> int:
        return self.alphabet.index(label)

    def rows(self) -> tuple[list[str], list[str]]:
        return [self.alphabet[i] for i in self.top], [self.alphabet[i] for i in self.bottom]

    @functools.cached_property
    def monodromy(self) -> tuple[int, ...]:
        """Extended ``p = pi1 o pi0^-1`` on ``0..d+1`` with fixed ends."""
        d = self.d
        p = [0] * (d + 2)
        p[d + 1] = d + 1
        for j in range(1, d + 1):
            p[j] = self.pi1[self.top[j - 1]]
        return tuple(p)

    def reduced(self) -> tuple[int, ...]:
        """Label-free form ``(p(1), ..., p(d))``."""
        return self.monodromy[1:-1]

    def __str__(self):
        t, b = self.rows()
        return " ".join(t) + " / " + " ".join(b)


@dataclass(frozen=True)
class PermutationFlags:
    irreducible: bool
    symmetric: bool
    degenerate: bool


def is_irreducible(perm: Permutation) -> bool:
    p = perm.monodromy
    d = perm.d
    top_max = 0
    for k in range(1, d):
        top_max = max(top_max, p[k])
        if top_max == k:
            return False
    return True


def is_symmetric(perm: Permutation) -> bool:
    d = perm.d
    return all(a + b == d + 1 for a, b in zip(perm.pi0, perm.pi1))


def is_degenerate(perm: Permutation) -> bool:
    """Two top-adjacent intervals that stay adjacent, in order, in the bottom
    row are translated by the same vector for every length vector."""
    p = perm.monodromy
    return any(p[j + 1] == p[j] + 1 for j in range(1, perm.d))


def validate_permutation(perm: Permutation) -> PermutationFlags:
    return PermutationFlags(is_irreducible(perm), is_symmetric(perm), is_degenerate(perm))


def omega_matrix(perm: Permutation) -> list[list[int]]:
    d = perm.d
    om = [[0] * d for _ in range(d)]
    for a in range(d):
        for b in range(d):
            if perm.pi0[a] < perm.pi0[b] and perm.pi1[a] > perm.pi1[b]:
                om[a][b] = 1
            elif perm.pi0[a] > perm.pi0[b] and perm.pi1[a] < perm.pi1[b]:
                om[a][b] = -1
    return om


@dataclass(frozen=True)
class IET:
    """``T(x) = x + w_alpha`` on ``I_alpha = [l_alpha, r_alpha)``.

    Lengths are the exact dyadic rationals ``nums[i] * 2**-scale`` (alphabet
    order); ``prec`` is the working precision of the derived values.
    """

    perm: Permutation
    nums: tuple[int, ...]
    scale: int
    prec: int = DOUBLE_BITS

    def __post_init__(self):
        if len(self.nums) != self.perm.d:
            raise StructuralError("length vector does not match the alphabet")
        if any(n <= 0 for n in self.nums):
            raise StructuralError("lengths must be positive")

    # exact data -----------------------------------------------------------
    @functools.cached_property
    def total_num(self) -> int:
        return sum(self.nums)

    @functools.cached_property
    def left_nums(self) -> tuple[int, ...]:
        """Exact left endpoints (alphabet order), as numerators."""
        out = [0] * self.perm.d
        acc = 0
        for i in self.perm.top:
            out[i] = acc
            acc += self.nums[i]
        return tuple(out)

    @functools.cached_property
    def image_left_nums(self) -> tuple[int, ...]:
        out = [0] * self.perm.d
        acc = 0
        for i in self.perm.bottom:
            out[i] = acc
            acc += self.nums[i]
        return tuple(out)

    @functools.cached_property
    def shift_nums(self) -> tuple[int, ...]:
        """Exact translation vector ``w = Omega lambda``."""
        return tuple(b - a for a, b in zip(self.left_nums, self.image_left_nums))

    def exact(self, num: int) -> Fraction:
        return Fraction(num, 1 << self.scale) if self.scale >= 0 else Fraction(num << -self.scale)

    @property
    def lengths_exact(self) -> tuple[Fraction, ...]:
        return tuple(self.exact(n) for n in self.nums)

    # working-precision views ----------------------------------------------
    def _val(self, num: int):
        return dyadic_value(num, self.scale, self.prec)

    @property
    def d(self) -> int:
        return self.perm.d

    @functools.cached_property
    def lengths(self) -> tuple:
        return tuple(self._val(n) for n in self.nums)

    @functools.cached_property
    def total(self):
        return self._val(self.total_num)

    @functools.cached_property
    def lefts(self) -> tuple:
        return tuple(self._val(n) for n in self.left_nums)

    @functools.cached_property
    def rights(self) -> tuple:
        return tuple(self._val(a + n) for a, n in zip(self.left_nums, self.nums))

    @functools.cached_property
    def midpoints(self) -> tuple:
        # 2*l + lambda over 2**(scale+1) is exact before rounding
        return tuple(dyadic_value(2 * a + n, self.scale + 1, self.prec)
                     for a, n in zip(self.left_nums, self.nums))

    @functools.cached_property
    def translation(self) -> tuple:
        return tuple(self._val(w) for w in self.shift_nums)

    @functools.cached_property
    def _top_lefts(self) -> list:
        return [self.lefts[i] for i in self.perm.top]

    @functools.cached_property
    def _bottom_lefts(self) -> list:
        return [self._val(self.image_left_nums[i]) for i in self.perm.bottom]

    def locate(self, x) -> int:
        """Alphabet index of the interval ``[l, r)`` containing ``x``."""
        if not (0 <= x < self.total):
            raise DomainError(f"x={x} outside [0, {self.total})")
        j = bisect.bisect_right(self._top_lefts, x) - 1
        return self.perm.top[j]

    def apply(self, x):
        return x + self.translation[self.locate(x)]

    def inverse_apply(self, y):
        if not (0 <= y < self.total):
            raise DomainError(f"y={y} outside [0, {self.total})")
        j = bisect.bisect_right(self._bottom_lefts, y) - 1
        return y - self.translation[self.perm.bottom[j]]

    # exact evaluation on numerators ----------------------------------------
    @functools.cached_property
    def _top_left_nums(self) -> list[int]:
        return [self.left_nums[i] for i in self.perm.top]

    def locate_exact(self, xnum: int) -> int:
        if not (0 <= xnum < self.total_num):
            raise DomainError("point outside the interval")
        j = bisect.bisect_right(self._top_left_nums, xnum) - 1
        return self.perm.top[j]

    def apply_exact(self, xnum: int) -> int:
        return xnum + self.shift_nums[self.locate_exact(xnum)]

    # float arrays for vectorized and compiled kernels ----------------------
    @functools.cached_property
    def float_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(top_lefts, top_shifts, top_labels)`` as arrays in top order."""
        top = self.perm.top
        lefts = np.array([dyadic_to_float(self.left_nums[i], self.scale) for i in top])
        shifts = np.array([dyadic_to_float(self.shift_nums[i], self.scale) for i in top])
        return lefts, shifts, np.array(top, dtype=np.int64)

    def with_prec(self, prec: int) -> "IET":
        return IET(self.perm, self.nums, self.scale, prec)

    def to_float(self) -> "IET":
        return self.with_prec(DOUBLE_BITS)

    def __str__(self):
        lens = ", ".join(f"{float(v):.6g}" for v in self.lengths)
        return f"IET({self.perm}; {lens})"


def make_iet(perm: Permutation, lengths: Sequence, prec: int = DOUBLE_BITS,
             total_length=None) -> IET:
    """Build an IET from working-precision lengths (floats, strings, mpf,
    ints or Fractions), each rounded to ``prec`` bits."""
    if len(lengths) != perm.d:
        raise StructuralError("length vector does not match the alphabet")
    pairs = [to_dyadic(v, prec) for v in lengths]
    if any(n <= 0 for n, _ in pairs):
        raise StructuralError("lengths must be positive")
    scale = max(s for _, s in pairs)
    nums = tuple(n << (scale - s) for n, s in pairs)
    T = IET(perm, nums, scale, prec)
    if total_length is not None:
        tot = float(total_length)
        if abs(float(T.total) - tot) > 2.0 ** -(max(prec, DOUBLE_BITS) - 7) * tot:
            raise StructuralError(f"lengths sum to {float(T.total)}, not total_length={tot}")
    return T


def iet_apply(T: IET, x):
    return T.apply(x)


def iet_inverse_apply(T: IET, y):
    return T.inverse_apply(y)


@dataclass(frozen=True)
class SingularityStructure:
    sigma: tuple[int, ...]
    orbits: tuple[tuple[int, ...], ...]
    orbits_without_zero: tuple[tuple[int, ...], ...]
    genus: int
    marked_minus: tuple[tuple[int, ...], ...] = field(default=())  # alphabet indices
    marked_plus: tuple[tuple[int, ...], ...] = field(default=())


def veech_sigma(perm: Permutation) -> tuple[int, ...]:
    p = perm.monodromy
    d = perm.d
    pinv = [0] * (d + 2)
    for j, v in enumerate(p):
        pinv[v] = j
    return tuple(pinv[p[j] + 1] - 1 for j in range(d + 1))


def _cycles(perm_map: Sequence[int]) -> list[tuple[int, ...]]:
    seen = set()
    out = []
    for start in range(len(perm_map)):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        j = perm_map[start]
        while j != start:
            cyc.append(j)
            seen.add(j)
            j = perm_map[j]
        out.append(tuple(cyc))
    return out


def omega_kernel_dim(perm: Permutation) -> int:
    om = sympy.Matrix(omega_matrix(perm))
    return perm.d - om.rank()


def sigma_and_genus(perm: Permutation) -> SingularityStructure:
    if not is_irreducible(perm):
        raise StructuralError("permutation is reducible")
    sigma = veech_sigma(perm)
    orbits = _cycles(sigma)
    n_orb = len(orbits)
    kernel_count = omega_kernel_dim(perm) + 1
    if kernel_count != n_orb:
        raise ConsistencyError(f"{n_orb} sigma orbits but dim Ker(Omega)+1 = {kernel_count}")
    twice_genus = perm.d + 1 - n_orb
    if twice_genus % 2 or twice_genus < 0:
        raise ConsistencyError(f"non-integral genus from {n_orb} orbits")
    minus, plus = [], []
    for orb in orbits:
        s = set(orb)
        minus.append(tuple(a for a in range(perm.d) if perm.pi0[a] in s))
        plus.append(tuple(a for a in range(perm.d) if perm.pi0[a] - 1 in s))
    return SingularityStructure(
        sigma=sigma,
        orbits=tuple(orbits),
        orbits_without_zero=tuple(o for o in orbits if 0 not in o),
        genus=twice_genus // 2,
        marked_minus=tuple(minus),
        marked_plus=tuple(plus),
    )


def reflection_defect(T: IET, samples: int = 4096, guard: float = 1e-9) -> float:
    """Grid supremum of ``|R(T x) - T^-1(R x)|`` with ``R x = |I| - x``,
    skipping points near discontinuities of either side."""
    Tf = T.to_float()
    total = float(Tf.total)
    cuts = [float(v) for v in Tf.lefts] + [total - float(v) for v in Tf._bottom_lefts] + [total]
    worst = 0.0
    for k in range(samples):
        x = (k + 0.5) / samples * total
        if min(abs(x - c) for c in cuts) < guard * total:
            continue
        lhs = total - Tf.apply(x)
        rhs = Tf.inverse_apply(total - x)
        worst = max(worst, abs(lhs - rhs))
    return worst


def reflect(T: IET, x):
    return T.total - x


# JSON input -----------------------------------------------------------------

def permutation_from_json(obj: dict) -> Permutation:
    try:
        alphabet = [str(a) for a in obj["alphabet"]]
        pi0, pi1 = obj["pi0"], obj["pi1"]
    except KeyError as exc:
        raise StructuralError(f"missing field {exc.args[0]}") from None
    if all(isinstance(v, int) for v in list(pi0) + list(pi1)):
        return Permutation(tuple(alphabet), tuple(pi0), tuple(pi1))
    return Permutation.from_rows(pi0, pi1, alphabet)


def iet_from_json(obj: dict, prec: int = DOUBLE_BITS) -> IET:
    perm = permutation_from_json(obj)
    if "lambda" not in obj:
        raise StructuralError("missing field lambda")
    lengths = [v if isinstance(v, str) else float(v) for v in obj["lambda"]]
    return make_iet(perm, lengths, prec, obj.get("total_length"))


def load_iet(path: str, prec: int = DOUBLE_BITS) -> IET:
    with open(path) as fh:
        return iet_from_json(json.load(fh), prec)
