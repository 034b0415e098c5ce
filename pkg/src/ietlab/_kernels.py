"""Compiled inner loops for long float orbits of an IET."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def orbit_chunk(lefts, shifts, x0, n, guard_pts, guard):
    """Positions ``T^j x0`` for ``0 <= j < n`` and the index of the first point
    within ``guard`` of a point in ``guard_pts`` (``-1`` if none).

    ``lefts``/``shifts`` are in top-row order; ``guard_pts`` is sorted.
    """
    out = np.empty(n)
    x = x0
    k = lefts.shape[0]
    g = guard_pts.shape[0]
    bad = -1
    for j in range(n):
        out[j] = x
        # distance to the nearest guard point
        lo, hi = 0, g
        while lo < hi:
            mid = (lo + hi) // 2
            if guard_pts[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        if (lo > 0 and x - guard_pts[lo - 1] < guard) or (lo < g and guard_pts[lo] - x < guard):
            bad = j
            return out[: j + 1], bad
        lo, hi = 0, k
        while lo < hi:
            mid = (lo + hi) // 2
            if lefts[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        x = x + shifts[lo - 1]
    return out, bad


@njit(cache=True)
def end_point(lefts, shifts, x0, n):
    x = x0
    k = lefts.shape[0]
    for _ in range(n):
        lo, hi = 0, k
        while lo < hi:
            mid = (lo + hi) // 2
            if lefts[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        x = x + shifts[lo - 1]
    return x
