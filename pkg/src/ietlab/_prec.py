"""Working-precision helpers.

Lengths are exact dyadic rationals ``num * 2**-scale`` internally; a working
precision only decides how those rationals are rounded for display and for
floating-point evaluation.  Precisions up to 53 bits use Python floats; higher
precisions use an mpmath context private to that precision.
"""

from __future__ import annotations

import functools
import math
from fractions import Fraction
from numbers import Rational

import mpmath

DOUBLE_BITS = 53


@functools.lru_cache(maxsize=None)
def mp_context(prec: int) -> mpmath.MPContext:
    ctx = mpmath.MPContext()
    ctx.prec = prec
    return ctx


def to_dyadic(value, prec: int) -> tuple[int, int]:
    """Round ``value`` to ``prec`` significant bits and return ``(num, scale)``
    with ``value ~= num * 2**-scale``.  ``scale`` may be negative."""
    if isinstance(value, mpmath.ctx_mp_python._mpf):
        man, exp = value.man_exp
        return _round_dyadic(int(man), -int(exp), prec)
    if isinstance(value, float):
        fr = Fraction(value)
        return _round_fraction(fr, prec)
    if isinstance(value, (int, Rational)):
        return _round_fraction(Fraction(value), prec)
    if isinstance(value, str):
        ctx = mp_context(prec + 8)
        return to_dyadic(ctx.mpf(value), prec)
    raise TypeError(f"cannot convert {type(value).__name__} to a length")


def _round_dyadic(num: int, scale: int, prec: int) -> tuple[int, int]:
    if num == 0:
        return 0, 0
    excess = abs(num).bit_length() - prec
    if excess > 0:
        num = _round_shift(num, excess)
        scale -= excess
    while num and num % 2 == 0:
        num //= 2
        scale -= 1
    return num, scale


def _round_shift(num: int, k: int) -> int:
    """Round ``num / 2**k`` to nearest, ties to even."""
    q, r = divmod(num, 1 << k)
    half = 1 << (k - 1)
    if r > half or (r == half and q % 2 == 1):
        q += 1
    return q


def _round_fraction(fr: Fraction, prec: int) -> tuple[int, int]:
    if fr == 0:
        return 0, 0
    p, q = fr.numerator, fr.denominator
    # choose scale so that p * 2**scale / q has prec + 2 bits before rounding
    shift = prec + 2 - (abs(p).bit_length() - q.bit_length())
    if shift >= 0:
        num, rem = divmod(p << shift, q)
    else:
        num, rem = divmod(p, q << -shift)
    num = 2 * num + (1 if rem else 0)  # sticky bit
    return _round_dyadic(num, shift + 1, prec)


def dyadic_to_float(num: int, scale: int) -> float:
    if scale >= 0:
        return num / (1 << scale)
    return float(num << -scale)


def dyadic_to_mpf(num: int, scale: int, prec: int):
    ctx = mp_context(prec)
    return ctx.ldexp(ctx.mpf(num), -scale)


def dyadic_value(num: int, scale: int, prec: int):
    if prec <= DOUBLE_BITS:
        return dyadic_to_float(num, scale)
    return dyadic_to_mpf(num, scale, prec)


def tie_tolerance_bits(prec: int) -> int:
    """Exponent ``e`` of the tie tolerance ``2**-e * |I|`` (46 at double)."""
    return max(prec, DOUBLE_BITS) - 7


def log2_int(n: int) -> float:
    """log2 of a positive big integer without overflow."""
    b = n.bit_length()
    if b <= 1000:
        return math.log2(n)
    return math.log2(n >> (b - 64)) + (b - 64)
