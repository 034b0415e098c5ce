"""Invariant saddle distributions built from the jet of ``f V`` at a perfect saddle."""

from __future__ import annotations

import contextlib
import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import mpmath
import numpy as np
import scipy.special

from .iet_core import DomainError


def _gamma_or_one(z: Fraction, prec: int | None):
    """``Gamma(z)`` with ``Gamma(0) = 1`` taken as a convention, not a limit."""
    if z == 0:
        return mpmath.mpf(1) if prec else 1.0
    if prec:
        return mpmath.gamma(mpmath.mpf(z.numerator) / z.denominator)
    return float(scipy.special.gamma(float(z)))


def frak_B(x, y, prec: int | None = None):
    """``pi e^{i pi (y-x)/2} / 2^{x+y-2} * Gamma(x+y-1) / (Gamma(x) Gamma(y))``.

    Arguments are converted to ``Fraction`` so the ``x + y = 1`` test is exact.
    With ``prec`` (bits) the result is an ``mpc``, otherwise a Python complex.
    """
    x, y = Fraction(x), Fraction(y)
    if x <= 0 or y <= 0:
        raise DomainError("frak_B needs x, y > 0")
    if prec:
        with mpmath.workprec(prec):
            xm = mpmath.mpf(x.numerator) / x.denominator
            ym = mpmath.mpf(y.numerator) / y.denominator
            phase = mpmath.expjpi((ym - xm) / 2)
            return (mpmath.pi * phase / mpmath.power(2, xm + ym - 2)
                    * _gamma_or_one(x + y - 1, prec) / (_gamma_or_one(x, prec) * _gamma_or_one(y, prec)))
    xf, yf = float(x), float(y)
    phase = complex(np.exp(1j * math.pi * (yf - xf) / 2))
    return (math.pi * phase / 2.0 ** (xf + yf - 2)
            * _gamma_or_one(x + y - 1, None) / (_gamma_or_one(x, None) * _gamma_or_one(y, None)))


@functools.lru_cache(maxsize=None)
def _theta_powers(m: int, prec: int | None) -> tuple:
    """``theta^n`` for ``0 <= n < 2m``, ``theta = exp(i pi / m)``."""
    if prec:
        with mpmath.workprec(prec):
            return tuple(mpmath.expjpi(mpmath.mpf(n) / m) for n in range(2 * m))
    return tuple(complex(np.exp(1j * math.pi * n / m)) for n in range(2 * m))


def theta_power(m: int, n: int, prec: int | None = None):
    return _theta_powers(m, prec)[n % (2 * m)]


@dataclass
class SaddleJet:
    """``jet[k][i] = d^k (f V) / dz^i dzbar^(k-i)`` at the saddle, ``0 <= i <= k <= m-2``."""

    m: int
    jet: list
    V0: float = 1.0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("saddle multiplicity must be >= 2")
        if len(self.jet) != self.m - 1 or any(len(self.jet[k]) != k + 1 for k in range(self.m - 1)):
            raise ValueError("jet needs rows of length k+1 for k = 0..m-2")

    def reality_defect(self) -> float:
        """``max |jet(i, k-i) - conj jet(k-i, i)|``; zero when ``f`` and ``V`` are real."""
        out = 0.0
        for row in self.jet:
            k = len(row) - 1
            for i in range(k + 1):
                out = max(out, abs(complex(row[i]) - complex(row[k - i]).conjugate()))
        return out

    @classmethod
    def random(cls, m: int, rng: np.random.Generator, real: bool = False) -> "SaddleJet":
        rows = []
        for k in range(m - 1):
            z = rng.normal(size=k + 1) + 1j * rng.normal(size=k + 1)
            if real:
                z = (z + np.conj(z[::-1])) / 2
            rows.append([complex(v) for v in z])
        return cls(m, rows)

    @classmethod
    def from_json(cls, obj: dict) -> "SaddleJet":
        rows = [[complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in row]
                for row in obj["jet"]]
        return cls(int(obj["m"]), rows, float(obj.get("V0", 1.0)))


def frak_C(sigma: SaddleJet, l: int, k: int, prec: int | None = None):
    """``C^k_{sigma,l}(f) = sum_i theta^{l(2i-k)} binom(k,i) B(((m-1)-i)/m, ((m-1)-k+i)/m) jet(i, k-i)``."""
    m = sigma.m
    if not (0 <= k <= m - 2):
        raise IndexError(f"order k={k} outside 0..{m - 2}")
    if not (0 <= l < 2 * m):
        raise IndexError(f"sector l={l} outside 0..{2 * m - 1}")
    with _precision(prec):
        total = mpmath.mpc(0) if prec else 0j
        for i in range(k + 1):
            b = frak_B(Fraction(m - 1 - i, m), Fraction(m - 1 - k + i, m), prec)
            c = sigma.jet[k][i]
            c = mpmath.mpc(c) if prec else complex(c)
            total += theta_power(m, l * (2 * i - k), prec) * math.comb(k, i) * b * c
        return total


def _precision(prec: int | None):
    return mpmath.workprec(prec) if prec else contextlib.nullcontext()


@dataclass(frozen=True)
class SectorClass:
    """Angular sectors joined by chains of adjacent saddle loops; all share a parity."""

    m: int
    members: frozenset

    def __init__(self, m: int, members: Iterable[int]):
        members = frozenset(int(l) for l in members)
        if any(not (0 <= l < 2 * m) for l in members):
            raise IndexError("sector index out of range")
        if len({l % 2 for l in members}) > 1:
            raise ValueError("sector class mixes parities")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "members", members)

    @property
    def parity(self) -> int | None:
        return min(self.members) % 2 if self.members else None


def frak_C_class(sigma: SaddleJet, cls: SectorClass, k: int, prec: int | None = None):
    if cls.m != sigma.m:
        raise ValueError("sector class and jet have different multiplicities")
    with _precision(prec):
        total = mpmath.mpc(0) if prec else 0j
        for l in sorted(cls.members):
            total += frak_C(sigma, l, k, prec)
        return total


def frak_C_table(sigma: SaddleJet, prec: int | None = None) -> list[tuple[int, int, complex]]:
    """Rows ``(l, k, value)`` over all sectors and orders, in a fixed order."""
    return [(l, k, frak_C(sigma, l, k, prec)) for l in range(2 * sigma.m) for k in range(sigma.m - 1)]


def reflection_defect(sigma: SaddleJet, prec: int | None = None) -> float:
    """``max |C^k_{l+m} - (-1)^k C^k_l|``."""
    m = sigma.m
    with _precision(prec):
        return max(float(abs(frak_C(sigma, l + m, k, prec) - (-1) ** k * frak_C(sigma, l, k, prec)))
                   for l in range(m) for k in range(m - 1))


def vanishing_defect(sigma: SaddleJet, prec: int | None = None) -> float:
    """``max |sum_{l<m} theta^{(k-2j)l} C^k_l|`` over ``k < j < m``."""
    m = sigma.m
    out = 0.0
    with _precision(prec):
        for k in range(m - 1):
            vals = [frak_C(sigma, l, k, prec) for l in range(m)]
            for j in range(k + 1, m):
                s = sum(theta_power(m, (k - 2 * j) * l, prec) * vals[l] for l in range(m))
                out = max(out, float(abs(s)))
    return out


def parity_balance(sigma: SaddleJet, k: int | None = None, prec: int | None = None):
    """``sum_{even l} C^k_l - sum_{odd l} C^k_l`` (default ``k = m - 2``)."""
    m = sigma.m
    k = m - 2 if k is None else k
    with _precision(prec):
        even = frak_C_class(sigma, SectorClass(m, range(0, 2 * m, 2)), k, prec)
        odd = frak_C_class(sigma, SectorClass(m, range(1, 2 * m, 2)), k, prec)
        return even - odd
