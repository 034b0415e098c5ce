"""Reference transformations used by tests, the CLI and the acceptance suite."""

from __future__ import annotations

import functools

import mpmath

from .iet_core import IET, Permutation, make_iet
from .renorm import self_similar_from_loop

# Rauzy-Veech loop at the d=4 reversal; Perron root ~30.91.  Its self-similar
# IET has, in every period, two levels whose towers return with a shift in
# (1/16, 1/8) of the base and whose base midpoints reach a global midpoint.
SYMMETRIC_D4_LOOP = "t" * 4 + "b" * 3 + "t" * 10 + "b" + "t" * 2 + "b" * 24
SYMMETRIC_D4_PREC = 768

# plain d=4 reversal loop used for spacing tests (Perron root ~4.39)
REVERSAL_D4_LOOP = "ttbtbbtb"


def _quadratic_rotation(root_expr, prec: int) -> IET:
    with mpmath.workprec(prec + 32):
        s = root_expr()
        return make_iet(Permutation.reversal(2), [1 - s, s], prec)


@functools.lru_cache(maxsize=None)
def golden_rotation(prec: int = 256) -> IET:
    """Rotation by ``1/phi^2`` on ``[0, 1)``: lengths ``(1/phi, 1/phi^2)``."""
    return _quadratic_rotation(lambda: (3 - mpmath.sqrt(5)) / 2, prec)


@functools.lru_cache(maxsize=None)
def silver_rotation(prec: int = 256) -> IET:
    """Rotation with continued fraction ``[0; 2, 2, 2, ...]``: lengths ``(2 - sqrt 2, sqrt 2 - 1)``."""
    return _quadratic_rotation(lambda: mpmath.sqrt(2) - 1, prec)


@functools.lru_cache(maxsize=None)
def symmetric_d4_fixture() -> tuple[IET, object]:
    """Self-similar symmetric 4-IET with its Perron root."""
    return self_similar_from_loop(Permutation.reversal(4), SYMMETRIC_D4_LOOP, SYMMETRIC_D4_PREC)


@functools.lru_cache(maxsize=None)
def reversal_d4_fixture(prec: int = 512) -> tuple[IET, object]:
    return self_similar_from_loop(Permutation.reversal(4), REVERSAL_D4_LOOP, prec)
