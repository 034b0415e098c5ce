"""Rokhlin towers over Rauzy-Veech intervals, their gaps and tower conditions.

All tower geometry is exact: level endpoints are integer numerators on the
common dyadic scale of the renormalization orbit.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .iet_core import IET, DomainError, StructuralError, ConsistencyError
from .renorm import RenormOrbit, Suspension, rv_orbit, rv_step_2d

DEFAULT_MAX_HEIGHT = 2_000_000
MIDPOINT_TOL = 1e-10


@dataclass(frozen=True)
class Tower:
    """Levels ``T^i(base)`` for ``0 <= i < height``, as exact numerators."""

    T: IET
    n: int
    symbol: int
    base_num: int  # left endpoint of the base
    width_num: int  # common length of all levels
    level_nums: tuple[int, ...]  # left endpoints, in iteration order
    return_shift_num: int  # T^height on the base is translation by this

    @property
    def height(self) -> int:
        return len(self.level_nums)

    @property
    def label(self) -> str:
        return self.T.perm.alphabet[self.symbol]

    def value(self, num: int) -> float:
        return float(self.T.exact(num))

    @property
    def base_length(self) -> float:
        return self.value(self.width_num)

    @property
    def base(self) -> tuple[float, float]:
        return self.value(self.base_num), self.value(self.base_num + self.width_num)

    @property
    def return_shift(self) -> float:
        return self.value(self.return_shift_num)

    def levels(self) -> list[tuple[float, float]]:
        w = self.width_num
        return [(self.value(a), self.value(a + w)) for a in self.level_nums]

    def measure_num(self) -> int:
        return self.height * self.width_num


def _orbit_for(T_or_orbit, n: int) -> RenormOrbit:
    if isinstance(T_or_orbit, RenormOrbit):
        orbit = T_or_orbit
    else:
        orbit = rv_orbit(T_or_orbit, n)
    if orbit.n_steps < n:
        raise DomainError(f"renormalization orbit stops at step {orbit.n_steps} < {n} ({orbit.status})")
    return orbit


def _check_scale(T: IET, Tn: IET) -> None:
    if T.scale != Tn.scale:
        raise ConsistencyError("orbit levels do not share the dyadic scale of T")


def tower_for_symbol(T_or_orbit, n: int, alpha, max_height: int = DEFAULT_MAX_HEIGHT) -> Tower:
    """Tower over ``I_alpha^(n)`` up to its first return to ``I^(n)``.

    The height is read off the row sum of ``B(n)`` and then confirmed by
    iterating ``T`` exactly on the base.
    """
    orbit = _orbit_for(T_or_orbit, n)
    T = orbit.levels[0]
    Tn = orbit.levels[n]
    _check_scale(T, Tn)
    a = T.perm.index(alpha) if isinstance(alpha, str) else int(alpha)
    q = orbit.heights(n)[a]
    if q > max_height:
        raise DomainError(f"tower height {q} exceeds max_height={max_height}")
    base = Tn.left_nums[a]
    width = Tn.nums[a]
    top = Tn.total_num
    lefts = []
    x = base
    for i in range(q):
        if i > 0 and x < top:
            raise ConsistencyError(f"early return to I^(n) at iterate {i}")
        # the whole level must sit inside one exchanged interval of T
        if T.locate_exact(x) != T.locate_exact(x + width - 1):
            raise ConsistencyError(f"level {i} straddles a discontinuity of T")
        lefts.append(x)
        x = T.apply_exact(x)
    if not (0 <= x and x + width <= top):
        raise ConsistencyError("T^q of the base is not back in I^(n)")
    return Tower(T=T, n=n, symbol=a, base_num=base, width_num=width,
                 level_nums=tuple(lefts), return_shift_num=x - base)


def partition_defect(T_or_orbit, n: int) -> Fraction:
    """``sum_alpha q_alpha |I_alpha^(n)| - |I|`` (exactly zero for a valid orbit)."""
    orbit = _orbit_for(T_or_orbit, n)
    T, Tn = orbit.levels[0], orbit.levels[n]
    qs = orbit.heights(n)
    return T.exact(sum(q * w for q, w in zip(qs, Tn.nums)) - T.total_num)


def levels_disjoint(tower: Tower) -> bool:
    lefts = sorted(tower.level_nums)
    return all(b - a >= tower.width_num for a, b in zip(lefts, lefts[1:]))


@dataclass
class GapReport:
    gap_nums: list[tuple[int, int]]  # maximal open gaps (left, right) as numerators
    scale_T: IET
    reference_num: int  # max_{beta != alpha} |I_beta^(n)|
    boundary_nums: tuple[int, int]  # dist(0, tower), dist(|I|, tower)

    @property
    def gaps(self) -> list[tuple[float, float]]:
        v = self.scale_T.exact
        return [(float(v(a)), float(v(b))) for a, b in self.gap_nums]

    @property
    def length_nums(self) -> list[int]:
        return [b - a for a, b in self.gap_nums]

    @property
    def lengths(self) -> list[float]:
        return [float(self.scale_T.exact(n)) for n in self.length_nums]

    @property
    def count(self) -> int:
        return len(self.gap_nums)

    @property
    def max_ratio(self) -> float:
        if not self.gap_nums:
            return 0.0
        return max(self.length_nums) / self.reference_num

    @property
    def boundary_ratio(self) -> float:
        return max(self.boundary_nums) / self.reference_num

    @property
    def boundary_distances(self) -> tuple[float, float]:
        v = self.scale_T.exact
        return float(v(self.boundary_nums[0])), float(v(self.boundary_nums[1]))


def gaps_outside_tower(tower: Tower, reference_num: int | None = None,
                       orbit: RenormOrbit | None = None) -> GapReport:
    """Maximal open intervals of ``I`` not covered by the tower levels."""
    T = tower.T
    if reference_num is None:
        if orbit is None:
            orbit = rv_orbit(T, tower.n)
        Tn = orbit.levels[tower.n]
        reference_num = max(w for b, w in enumerate(Tn.nums) if b != tower.symbol)
    w = tower.width_num
    lefts = sorted(tower.level_nums)
    gaps = []
    cursor = 0
    for a in lefts:
        if a > cursor:
            gaps.append((cursor, a))
        cursor = max(cursor, a + w)
    if cursor < T.total_num:
        gaps.append((cursor, T.total_num))
    boundary = (lefts[0], T.total_num - (lefts[-1] + w))
    return GapReport(gap_nums=gaps, scale_T=T, reference_num=reference_num, boundary_nums=boundary)


def spacing_sign_pattern(perm, tau: Sequence) -> bool:
    """``tau_a > 0 > tau_b`` for ``b != a`` and ``sum(tau) < 0``, with ``a`` first on top.

    On suspensions with this pattern a horizontal first return to the ``a``
    rectangle crosses at most ``2d - 2`` edges of the other rectangles, so
    every gap of the ``a`` tower holds at most ``2d - 2`` other levels.
    """
    a = perm.top[0]
    return tau[a] > 0 and all(tau[b] < 0 for b in range(perm.d) if b != a) and sum(tau) < 0


def spacing_return_levels(S: Suspension, n_steps: int, q_max: int = 200_000
                          ) -> tuple[RenormOrbit, list[int]]:
    """Levels ``n >= 1`` where the induced suspension is back at the starting
    permutation with the spacing sign pattern and the first-top tower is at
    most ``q_max`` tall."""
    perm = S.iet.perm
    orbit = rv_orbit(S.iet, n_steps)
    a = perm.top[0]
    levels = []
    for n in range(1, orbit.n_steps + 1):
        S, _ = rv_step_2d(S)
        if S.iet.perm == perm and spacing_sign_pattern(perm, S.tau) and orbit.heights(n)[a] <= q_max:
            levels.append(n)
    return orbit, levels


def circular_spacings(tower: Tower) -> list[int]:
    """Consecutive spacings of the level left endpoints on the circle ``R/|I|Z``."""
    lefts = sorted(tower.level_nums)
    out = [b - a for a, b in zip(lefts, lefts[1:])]
    out.append(lefts[0] + tower.T.total_num - lefts[-1])
    return out


def three_distance_gaps(alpha: Fraction, n_points: int) -> dict[Fraction, int]:
    """Multiset of spacings of ``{i*alpha mod 1 : 0 <= i < n_points}`` on the circle.

    Continued-fraction form of the three-distance theorem: with
    ``N = n_points - 1 = m q_k + q_{k-1} + r`` (``1 <= m <= a_{k+1}``, ``0 <= r < q_k``)
    there are ``N+1-q_k`` gaps ``eta_k``, ``r+1`` gaps ``eta_{k-1} - m eta_k`` and
    ``q_k-r-1`` gaps ``eta_{k-1} - (m-1) eta_k`` where ``eta_k = |q_k alpha - p_k|``.
    """
    alpha = Fraction(alpha) % 1
    if alpha == 0 or n_points < 1:
        raise ValueError("alpha must be non-integer and n_points >= 1")
    N = n_points - 1
    if N == 0:
        return {Fraction(1): 1}
    # convergents p_k/q_k with p_{-1}/q_{-1} = 1/0
    a_list = []
    x = alpha
    while True:
        a = math.floor(x)
        a_list.append(a)
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    p_prev, q_prev = 1, 0
    p, q = a_list[0], 1
    k = 0
    while True:
        if k + 1 >= len(a_list):
            raise ValueError("n_points exceeds the denominator of alpha")
        a_next = a_list[k + 1]
        lo = q + q_prev
        hi = a_next * q + q_prev + q - 1
        if lo <= N <= hi:
            m = (N - q_prev) // q
            r = N - q_prev - m * q
            if m > a_next:
                m, r = a_next, N - q_prev - a_next * q
            eta_k = abs(q * alpha - p)
            eta_prev = abs(q_prev * alpha - p_prev)
            out: dict[Fraction, int] = {}
            for length, count in ((eta_k, N + 1 - q), (eta_prev - m * eta_k, r + 1),
                                  (eta_prev - (m - 1) * eta_k, q - r - 1)):
                if count > 0:
                    out[length] = out.get(length, 0) + count
            return out
        p_prev, q_prev, p, q = p, q, a_next * p + p_prev, a_next * q + q_prev
        k += 1


def brute_force_spacings(alpha: Fraction, n_points: int) -> dict[Fraction, int]:
    pts = sorted((i * Fraction(alpha)) % 1 for i in range(n_points))
    gaps = [b - a for a, b in zip(pts, pts[1:])] + [pts[0] + 1 - pts[-1]]
    out: dict[Fraction, int] = {}
    for g in gaps:
        out[g] = out.get(g, 0) + 1
    return out


def rotation_gap_check(tower: Tower) -> bool:
    """Compare the tower's circular spacings with the three-distance oracle (d=2 only)."""
    T = tower.T
    if T.d != 2:
        raise StructuralError("three-distance check needs a two-interval exchange")
    total = T.total_num
    shift = T.shift_nums[T.perm.top[0]] % total
    oracle = three_distance_gaps(Fraction(shift, total), tower.height)
    got: dict[Fraction, int] = {}
    for s in circular_spacings(tower):
        key = Fraction(s, total)
        got[key] = got.get(key, 0) + 1
    return got == oracle


@dataclass
class TowerRecord:
    n: int
    symbol: str
    q: int
    base_len: float
    q_times_len: float
    growth: float | None  # q_{n+1}/q_n
    holes: int
    max_hole_times_q: float
    offset_ratio: float  # (T^q shift)/|Delta^n|
    qn2_5: bool | None
    qn3: bool
    qn3_5: bool
    qn4: bool
    qn5: bool
    max_gap_ratio: float = float("nan")


@dataclass
class TowerConditionsReport:
    C: float
    records: list[TowerRecord]
    qn1_statistic: float  # max_n q_n**(1/n): finite-range proxy, no verdict
    notes: list[str] = field(default_factory=list)

    def all_hold(self, names: Sequence[str] = ("qn2_5", "qn3", "qn3_5", "qn4", "qn5")) -> bool:
        for r in self.records:
            for nm in names:
                v = getattr(r, nm)
                if v is False:
                    return False
        return True


def qn5_holds(shift_num: int, width_num: int) -> bool:
    """``|shift| / |Delta| in (1/16, 1/8)``, tested on exact integers."""
    s = abs(shift_num)
    return 16 * s > width_num and 8 * s < width_num


def check_conditions(towers: Sequence[Tower], C: float) -> TowerConditionsReport:
    """Evaluate the tower conditions literally, scale by scale."""
    if len(towers) < 2:
        raise ValueError("need at least two towers")
    if C <= 1:
        raise ValueError("C must exceed 1")
    records = []
    for k, tw in enumerate(towers):
        q = tw.height
        gaps = gaps_outside_tower(tw, reference_num=tw.width_num)
        L = tw.base_length
        nxt = towers[k + 1].height if k + 1 < len(towers) else None
        growth = nxt / q if nxt is not None else None
        qn2_5 = (nxt >= 320 * C * C * q) if nxt is not None else None
        qL = q * L
        hole_lengths = gaps.lengths
        max_hole_q = max(hole_lengths) * q if hole_lengths else 0.0
        records.append(TowerRecord(
            n=tw.n, symbol=tw.label, q=q, base_len=L, q_times_len=qL, growth=growth,
            holes=gaps.count, max_hole_times_q=max_hole_q,
            offset_ratio=tw.return_shift_num / tw.width_num,
            qn2_5=qn2_5,
            qn3=(1 / C <= qL <= C),
            qn3_5=True,  # enforced exactly when the tower is built
            qn4=(gaps.count <= q + 1 and max_hole_q < C),
            qn5=qn5_holds(tw.return_shift_num, tw.width_num),
        ))
    stat = max(r.q ** (1.0 / (i + 1)) for i, r in enumerate(records))
    return TowerConditionsReport(C=C, records=records, qn1_statistic=stat,
                                 notes=["qn1 is asymptotic; qn1_statistic is max_n q_n^(1/n) over the computed range"])


def slim(J: tuple, delta) -> tuple:
    """``J(delta) = [a + delta|J|, b - delta|J|]``."""
    a, b = J
    if not (0 <= delta < 0.5):
        raise ValueError("delta must lie in [0, 1/2)")
    if b < a:
        raise ValueError("interval endpoints out of order")
    h = delta * (b - a)
    return (a + h, b - h)


@dataclass
class MidpointHit:
    key: str  # label of the level-n interval, or "I" for I^(n) itself
    start_num2: int  # midpoint numerator on scale (T.scale + 1)
    steps: int | None  # first s with T^s(midpoint) a global midpoint, None if not found
    target: str | None  # label of the hit midpoint, or "1/2"
    residual: float | None

    @property
    def found(self) -> bool:
        return self.steps is not None


def _global_midpoints(T: IET) -> dict[int, str]:
    out = {2 * T.left_nums[a] + T.nums[a]: T.perm.alphabet[a] for a in range(T.d)}
    out.setdefault(T.total_num, "1/2")
    return out


def midpoint_orbit_hit(T: IET, x2: int, cap: int, tol: float = MIDPOINT_TOL) -> tuple[int, str, float] | None:
    """First ``s < cap`` with ``T^s(x)`` within ``tol*|I|`` of ``|I|/2`` or some ``m_beta``.

    ``x2`` is twice the numerator of the start point, so midpoints stay exact.
    """
    targets = _global_midpoints(T)
    keys = sorted(targets)
    tol2 = tol * 2 * T.total_num
    x = x2
    total2 = 2 * T.total_num
    for s in range(cap):
        j = bisect.bisect_left(keys, x)
        for c in (j - 1, j):
            if 0 <= c < len(keys) and abs(keys[c] - x) <= tol2:
                return s, targets[keys[c]], abs(keys[c] - x) / total2
        if not 0 <= x < total2:
            raise DomainError("orbit left the interval")
        a = T.locate_exact(x // 2)
        x += 2 * T.shift_nums[a]
    return None


def track_midpoints(T_or_orbit, n: int, tol: float = MIDPOINT_TOL) -> dict[str, MidpointHit]:
    """For each ``I_alpha^(n)`` and for ``I^(n)``, find the first iterate of its
    midpoint landing on ``1/2`` or a global midpoint ``m_beta``."""
    orbit = _orbit_for(T_or_orbit, n)
    T, Tn = orbit.levels[0], orbit.levels[n]
    _check_scale(T, Tn)
    qs = orbit.heights(n)
    out = {}
    for a in range(T.d):
        x2 = 2 * Tn.left_nums[a] + Tn.nums[a]
        hit = midpoint_orbit_hit(T, x2, qs[a], tol)
        lab = T.perm.alphabet[a]
        out[lab] = MidpointHit(lab, x2, *(hit if hit else (None, None, None)))
    x2 = Tn.total_num
    hit = midpoint_orbit_hit(T, x2, max(qs), tol)
    out["I"] = MidpointHit("I", x2, *(hit if hit else (None, None, None)))
    return out

