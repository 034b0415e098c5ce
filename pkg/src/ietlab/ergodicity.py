"""Skew products ``T_f(x, r) = (Tx, r + f(x))``: simulation, essential-value
scanning, the Borel-Cantelli hole-filling construction and the ergodicity
criterion harness for anti-symmetric cocycles over symmetric IETs.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ._kernels import orbit_chunk
from ._prec import dyadic_to_float
from .cocycles import (
    THETA_LOG, GuardError, PiecewiseCocycle, ThetaModel, anti_symmetry_defect, birkhoff_sum,
    derivative_sum_bounds,
)
from .iet_core import IET, DomainError, is_symmetric
from .renorm import RenormOrbit
from .towers import Tower, check_conditions, midpoint_orbit_hit, qn5_holds, tower_for_symbol

BISECT_TOL = 1e-12  # argument tolerance, relative to |I|
BISECT_MAXITER = 50
RESIDUAL_TOL = 1e-9
MIN_VISITS = 100


# skew-product orbits ------------------------------------------------------------

@dataclass
class SkewTrajectory:
    x0: float
    r0: float
    n_steps: int  # completed steps (points r_0 .. r_{n_steps-1} were counted)
    status: str  # "ok" or "guard"
    windows: list[tuple[float, float]]
    counts: np.ndarray  # occupation times per window
    block_counts: np.ndarray  # (blocks, windows), for the bootstrap
    fiber_min: float
    fiber_max: float
    recurrence_radius: float
    recurrences: int  # n >= 1 with |r_n - r0| < recurrence_radius
    final: tuple[float, float]  # T_f^{n_steps}(x0, r0)
    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)
    max_checkpoint_error: float | None = None

    def window_index(self, win: tuple[float, float]) -> int:
        win = (float(win[0]), float(win[1]))
        for i, w in enumerate(self.windows):
            if w == win:
                return i
        raise KeyError(f"window {win} was not tracked")


def skew_orbit(f: PiecewiseCocycle, x0: float, r0: float, N: int,
               windows: Sequence[tuple[float, float]] = (), blocks: int = 200,
               checkpoints: int = 100, seed: int = 0, recurrence_radius: float = 1.0,
               verify: bool = True) -> SkewTrajectory:
    """Run ``T_f`` for ``N`` steps from ``(x0, r0)``.

    Occupation counts use the half-open windows ``[a, b)``.  With ``verify``
    the fiber at ``checkpoints`` random times is compared with a fresh
    compensated Birkhoff sum from the previous checkpoint.
    """
    if N <= 0:
        raise ValueError("N must be positive")
    wins = [(float(a), float(b)) for a, b in windows]
    nb = max(1, min(blocks, N))
    chunk = -(-N // nb)
    guard_pts = f.singular_points()
    rng = np.random.default_rng(seed)
    cps = set(rng.choice(np.arange(1, N + 1), size=min(checkpoints, N), replace=False).tolist()) if verify else set()
    cp_sorted = sorted(cps)
    saved: list[tuple[int, float, float]] = [(0, float(x0), float(r0))]

    counts = np.zeros(len(wins), dtype=np.int64)
    block_counts = np.zeros((nb, len(wins)), dtype=np.int64)
    fmin, fmax = float(r0), float(r0)
    rec = 0
    x, r = float(x0), float(r0)
    done = 0
    status = "ok"
    for b in range(nb):
        m = min(chunk, N - done)
        if m <= 0:
            block_counts = block_counts[:b]
            break
        # one extra point gives the start of the next block
        pts, bad = orbit_chunk(f._lefts_top, f._shifts_top, x, m + 1, guard_pts, f.guard)
        if bad >= 0 and bad < m:
            m = int(bad)
            status = "guard"
        if m == 0:
            block_counts = block_counts[:b]
            break
        vals = f(pts[:m])
        fib = np.empty(m)
        fib[0] = r
        if m > 1:
            fib[1:] = r + np.cumsum(vals[:-1])
        for k, (lo, hi) in enumerate(wins):
            c = int(np.count_nonzero((fib >= lo) & (fib < hi)))
            counts[k] += c
            block_counts[b, k] = c
        fmin = min(fmin, float(fib.min()))
        fmax = max(fmax, float(fib.max()))
        near = np.abs(fib - r0) < recurrence_radius
        rec += int(np.count_nonzero(near)) - (1 if done == 0 and near[0] else 0)
        lo_i = bisect.bisect_left(cp_sorted, done + 1)
        hi_i = bisect.bisect_right(cp_sorted, done + m - 1)
        for n_cp in cp_sorted[lo_i:hi_i]:
            saved.append((n_cp, float(pts[n_cp - done]), float(fib[n_cp - done])))
        r = r + math.fsum(vals)
        done += m
        if status == "guard":
            block_counts = block_counts[: b + 1]
            break
        x = float(pts[m])
        if done in cps:
            saved.append((done, x, r))
    final = (x if status == "ok" else float("nan"), r)
    err = None
    if verify and len(saved) > 1:
        err = 0.0
        for (n0, x_a, r_a), (n1, _, r_b) in zip(saved, saved[1:]):
            seg = birkhoff_sum(f, x_a, n1 - n0)
            err = max(err, abs((r_b - r_a) - seg))
    return SkewTrajectory(x0=float(x0), r0=float(r0), n_steps=done, status=status, windows=wins,
                          counts=counts, block_counts=block_counts, fiber_min=fmin, fiber_max=fmax,
                          recurrence_radius=recurrence_radius, recurrences=rec, final=final,
                          checkpoints=saved[1:], max_checkpoint_error=err)


@dataclass
class EquidistributionResult:
    status: str  # "ok" or "starved"
    visits: tuple[int, int]
    ratio: float | None
    expected: float
    deviation: float | None
    half_width: float | None  # bootstrap 95% half-width of the ratio
    tolerance: float
    consistent: bool | None  # |deviation| <= tolerance; None without a verdict


def equidistribution_test(traj: SkewTrajectory, I_win, J_win, tolerance: float = 0.15,
                          n_boot: int = 1000, seed: int = 0) -> EquidistributionResult:
    """Occupation-time ratio of two fiber windows against ``|I_win| / |J_win|``."""
    i, j = traj.window_index(I_win), traj.window_index(J_win)
    ci, cj = int(traj.counts[i]), int(traj.counts[j])
    expected = (I_win[1] - I_win[0]) / (J_win[1] - J_win[0])
    if min(ci, cj) < MIN_VISITS:
        return EquidistributionResult("starved", (ci, cj), None, expected, None, None, tolerance, None)
    ratio = ci / cj
    bc = traj.block_counts
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, bc.shape[0], size=(n_boot, bc.shape[0]))
    num = bc[idx, i].sum(axis=1).astype(float)
    den = bc[idx, j].sum(axis=1).astype(float)
    ok = den > 0
    boots = num[ok] / den[ok]
    half = float((np.quantile(boots, 0.975) - np.quantile(boots, 0.025)) / 2) if boots.size else None
    dev = ratio - expected
    return EquidistributionResult("ok", (ci, cj), ratio, expected, dev, half, tolerance, abs(dev) <= tolerance)


# essential values ---------------------------------------------------------------

def default_omega_family(total: float = 1.0, depths: Sequence[int] = (2, 4, 7)) -> list[list[tuple[float, float]]]:
    """Dyadic intervals of ``[0, total)`` at the given depths, plus for each
    depth the unions of an interval with its mirror image about the center."""
    fam = []
    for D in depths:
        m = 1 << D
        cells = [(total * k / m, total * (k + 1) / m) for k in range(m)]
        fam.extend([[c] for c in cells])
        for k in range(m // 2):
            fam.append([cells[k], cells[m - 1 - k]])
    return fam


def _inverse_exact(T: IET, y: int) -> int:
    bl = T._bottom_left_nums_cached if hasattr(T, "_bottom_left_nums_cached") else None
    if bl is None:
        bl = [T.image_left_nums[i] for i in T.perm.bottom]
        object.__setattr__(T, "_bottom_left_nums_cached", bl)
    j = bisect.bisect_right(bl, y) - 1
    return y - T.shift_nums[T.perm.bottom[j]]


def continuity_pieces(T: IET, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Maximal intervals on which ``T^n`` is a translation: left ends and the
    translation amounts, computed exactly and returned as floats."""
    cuts = {0}
    seeds = [T.left_nums[i] for i in T.perm.top[1:]]
    for c in seeds:
        y = c
        for _ in range(n):
            cuts.add(y)
            y = _inverse_exact(T, y)
    lefts = sorted(cuts)
    shifts = []
    for a in lefts:
        x = a
        for _ in range(n):
            x = T.apply_exact(x)
        shifts.append(x - a)
    conv = lambda v: dyadic_to_float(v, T.scale)
    return np.array([conv(v) for v in lefts + [T.total_num]]), np.array([conv(v) for v in shifts])


@dataclass
class EssentialValueScan:
    r_grid: np.ndarray
    eps: float
    n_values: list[int]
    evidence: np.ndarray  # min over Omega of max over n of the estimated measure
    candidates: np.ndarray
    heuristic: bool = True
    note: str = ("necessary-condition scan over a finite Omega family and finite n range; "
                 "positive evidence does not certify an essential value")


EDGE_NUDGE = 1e-9  # relative offset of the outer cell edges from the singular piece ends


def _cell_values(f: PiecewiseCocycle, n: int, cells_per_piece: int):
    """Cells ``[cl, cr)`` of the continuity pieces of ``T^n``, their shifts, and
    ``S_n f`` at both cell edges (outer edges nudged inside the piece)."""
    edges, shifts = continuity_pieces(f._exact_T, n)
    lo, hi = edges[:-1], edges[1:]
    k = cells_per_piece
    t = np.arange(k + 1) / k
    t[0], t[-1] = EDGE_NUDGE, 1 - EDGE_NUDGE
    pts = (lo[:, None] + (hi - lo)[:, None] * t[None, :]).ravel()
    lefts, tshift = f._lefts_top, f._shifts_top
    S = np.zeros_like(pts)
    y = pts.copy()
    for _ in range(n):
        S += f(y)
        j = np.searchsorted(lefts, y, side="right") - 1
        y = y + tshift[j]
    S = S.reshape(lo.size, k + 1)
    cl = (lo[:, None] + (hi - lo)[:, None] * (np.arange(k) / k)[None, :]).ravel()
    cr = (lo[:, None] + (hi - lo)[:, None] * (np.arange(1, k + 1) / k)[None, :]).ravel()
    return cl, cr, np.repeat(shifts, k), S[:, :-1].ravel(), S[:, 1:].ravel()


def _omega_weights(omega, cl, cr, s):
    w = np.zeros_like(cl)
    for a1, b1 in omega:
        for a2, b2 in omega:
            lo = np.maximum(np.maximum(cl, a1), a2 - s)
            hi = np.minimum(np.minimum(cr, b1), b2 - s)
            w += np.clip(hi - lo, 0.0, None)
    return w


def _window_fractions(Sa: np.ndarray, Sb: np.ndarray, r: np.ndarray, eps: float) -> np.ndarray:
    """Fraction of each cell where the linear interpolant of ``S`` lies in ``(r-eps, r+eps)``;
    shape ``(cells, len(r))``."""
    lo, hi = np.minimum(Sa, Sb)[:, None], np.maximum(Sa, Sb)[:, None]
    a, b = (r - eps)[None, :], (r + eps)[None, :]
    span = hi - lo
    flat = span == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None) / np.where(flat, 1.0, span)
    return np.where(flat, ((lo > a) & (lo < b)).astype(float), frac)


def essential_value_scan(f: PiecewiseCocycle, omega_family=None, n_range: Sequence[int] = (),
                         eps: float = 0.05, r_grid: Sequence[float] = (), cells_per_piece: int = 8
                         ) -> EssentialValueScan:
    """Scan ``Leb(Omega ∩ T^-n Omega ∩ {S_n f in (r-eps, r+eps)})``.

    ``Omega ∩ T^-n Omega`` is intersected exactly on each continuity piece of
    ``T^n``; inside a piece ``S_n f`` is replaced by its linear interpolant on
    ``cells_per_piece`` cells, so a cell contributes its overlap weight times
    the fraction of the cell where the interpolant lies in the window.
    Negative ``n`` enter through ``S_{-n} f = -S_n f ∘ T^{-n}``, i.e. the
    value ``-r`` at ``+n``.
    """
    fam = omega_family if omega_family is not None else default_omega_family(f.total)
    r = np.asarray(r_grid, dtype=float)
    ns = sorted({abs(int(n)) for n in n_range if int(n) != 0})
    if not ns or r.size == 0:
        raise ValueError("n_range and r_grid must be non-empty")
    best = np.zeros((len(fam), r.size))
    for n in ns:
        cl, cr, s, Sa, Sb = _cell_values(f, n, cells_per_piece)
        Fs = [_window_fractions(Sa, Sb, sign * r, eps) for sign in (1.0, -1.0)]
        for k, om in enumerate(fam):
            w = _omega_weights(om, cl, cr, s)
            for F in Fs:
                best[k] = np.maximum(best[k], w @ F)
    evidence = best.min(axis=0)
    return EssentialValueScan(r_grid=r, eps=eps, n_values=ns, evidence=evidence,
                              candidates=r[evidence > 0])


def rigidity_times(orbit: RenormOrbit, n_max: int | None = None, q_max: int = 5000) -> list[int]:
    """Distinct tower heights along a renormalization orbit, up to ``q_max``."""
    out = set()
    top = orbit.n_steps if n_max is None else min(n_max, orbit.n_steps)
    for n in range(top + 1):
        out.update(q for q in orbit.heights(n) if q <= q_max)
    return sorted(out)


# Borel-Cantelli construction ----------------------------------------------------

class BCPreconditionError(ValueError):
    pass


@dataclass
class BCLevel:
    n: int
    q: int
    selected: list[int]  # level indices i of the chosen J_i^n
    A_tilde: list[tuple[int, int]]  # exact numerators
    A_shifted: list[tuple[int, int]]  # T^{q_n} of the chosen intervals
    holes_processed: int
    holes_skipped: int  # shorter than 10C/q_n
    shift_escapes: int  # chosen J with T^q J not inside its hole (excluded)
    holes_after: list[tuple[int, int]]
    hole_threshold_next: float | None  # 10C/q_{n+1}
    short_holes_after: int  # holes below hole_threshold_next
    measure_hat: Fraction  # Leb(hat A_n)
    covered: Fraction  # Leb(union of hat A_j, j <= n)
    uncovered: Fraction  # Leb((r,s) minus that union)
    product_bound: float  # prod_{k<=j<=n} (1 - 2c/theta(q_j))
    lower_bound_ok: bool  # covered >= (s-r)(1 - product_bound)


@dataclass
class BCConstruction:
    T: IET
    interval: tuple[int, int]
    C: float
    D1: float
    D2: float
    c: float
    levels: list[BCLevel]

    def _x(self, num) -> Fraction:
        return self.T.exact(num)

    @property
    def length(self) -> Fraction:
        return self._x(self.interval[1] - self.interval[0])

    def all_sets(self) -> list[tuple[int, int]]:
        return [J for lv in self.levels for J in lv.A_tilde + lv.A_shifted]

    def pairwise_disjoint(self) -> bool:
        """Exact: sorted endpoints never overlap and all sets lie in ``(r, s)``."""
        sets = sorted(self.all_sets())
        r, s = self.interval
        if sets and (sets[0][0] < r or max(b for _, b in sets) > s):
            return False
        return all(a[1] <= b[0] for a, b in zip(sets, sets[1:]))

    def ledger_identity_error(self) -> float:
        lv = self.levels[-1]
        return float(abs(lv.covered + lv.uncovered - self.length))

    def coverage(self) -> float:
        return float(self.levels[-1].covered / self.length) if self.levels else 0.0

    def hole_invariant_holds(self) -> bool:
        return all(lv.short_holes_after == 0 for lv in self.levels)


def _subtract(hole: tuple[int, int], pieces: list[tuple[int, int]]) -> list[tuple[int, int]]:
    a, b = hole
    out = []
    cur = a
    for lo, hi in sorted(pieces):
        if lo > cur:
            out.append((cur, lo))
        cur = max(cur, hi)
    if cur < b:
        out.append((cur, b))
    return out


def centered_windows(tower: Tower, D: float, theta: ThetaModel = THETA_LOG) -> list[tuple[int, int]]:
    """``J_i`` centred in level ``i`` with ``|J_i| = D / (q theta(q))`` (times ``|I|``)."""
    q = tower.height
    T = tower.T
    length = int(round(D / (q * float(theta.theta(q))) * T.total_num))
    if length <= 0:
        raise ValueError("window length rounds to zero at this precision")
    off = (tower.width_num - length) // 2
    return [(L + off, L + off + length) for L in tower.level_nums]


def bc_construct(towers: Sequence[Tower], J_families: Sequence[Sequence[tuple[int, int]]],
                 interval: tuple, k: int = 0, theta: ThetaModel = THETA_LOG, C: float = 2.0,
                 D1: float | None = None, D2: float | None = None) -> BCConstruction:
    """Hole-filling construction over towers ``k, k+1, ...``.

    Interval endpoints are exact numerators on the common scale of the
    towers.  At level ``n`` every current hole of length at least ``10C/q_n``
    receives the ``J_i^n`` inside it, minus the leftmost and rightmost ones
    meeting it; each chosen ``J`` contributes ``J`` and ``T^{q_n} J``.
    """
    if not towers:
        raise ValueError("no towers")
    T = towers[0].T
    tot = T.total_num
    if any(tw.T.scale != T.scale or tw.T.nums != T.nums for tw in towers):
        raise BCPreconditionError("towers must come from one IET")
    r_num, s_num = (int(v) if isinstance(v, int) else round(Fraction(v) * tot) for v in interval)
    if not (0 <= r_num < s_num <= tot):
        raise BCPreconditionError("(r, s) must be a subinterval of I")
    tws = list(towers[k:])
    fams = list(J_families[k:])
    if len(fams) != len(tws):
        raise ValueError("one J family per tower")
    # window size bounds in units of 1/(q theta(q)) relative to |I|
    ratios = []
    for tw, fam in zip(tws, fams):
        if len(fam) != tw.height:
            raise BCPreconditionError(f"level n={tw.n}: need {tw.height} windows, got {len(fam)}")
        qt = tw.height * float(theta.theta(tw.height))
        W = tw.width_num
        for i, ((a, b), L) in enumerate(zip(fam, tw.level_nums)):
            if not (4 * a >= 4 * L + W and 4 * b <= 4 * L + 3 * W and a < b):
                raise BCPreconditionError(f"J_{i}^{tw.n} is not inside T^i Delta^n(1/4)")
            ratios.append((b - a) / tot * qt)
    d_lo, d_hi = min(ratios), max(ratios)
    D1 = d_lo * (1 - 1e-9) if D1 is None else D1
    D2 = d_hi * (1 + 1e-9) if D2 is None else D2
    if not (0 < D1 < D2):
        raise BCPreconditionError("need 0 < D1 < D2")
    if not (D1 < d_lo and d_hi < D2):
        raise BCPreconditionError(f"window sizes violate D1/(q theta) < |J| < D2/(q theta): "
                                  f"observed [{d_lo:.6g}, {d_hi:.6g}] vs ({D1:.6g}, {D2:.6g})")
    q_k = tws[0].height
    if (s_num - r_num) / tot < 10 * C / q_k:
        raise BCPreconditionError(f"(s - r) = {(s_num - r_num) / tot:.6g} < 10C/q_k = {10 * C / q_k:.6g}")
    if float(theta.theta(q_k)) < 32 * C * D2:
        raise BCPreconditionError(f"theta(q_k) = {float(theta.theta(q_k)):.6g} < 32 C D2 = {32 * C * D2:.6g}")
    c = D1 / (3 * C + 2 * D2)

    holes = [(r_num, s_num)]
    covered = 0
    prod = 1.0
    levels = []
    length = s_num - r_num
    for idx, (tw, fam) in enumerate(zip(tws, fams)):
        q = tw.height
        w = tw.return_shift_num
        thresh = 10 * C / q * tot
        order = sorted(range(q), key=lambda i: fam[i][0])
        starts = [fam[i][0] for i in order]
        chosen, A, A_sh, new_holes = [], [], [], []
        processed = skipped = escapes = 0
        for a, b in holes:
            if b - a < thresh:
                skipped += 1
                new_holes.append((a, b))
                continue
            processed += 1
            # windows meeting (a, b), in left-to-right order
            lo_i = bisect.bisect_left(starts, a)
            if lo_i > 0 and fam[order[lo_i - 1]][1] > a:
                lo_i -= 1
            hi_i = bisect.bisect_left(starts, b)
            meet = order[lo_i:hi_i]
            inner = meet[1:-1] if len(meet) >= 2 else []
            pieces = []
            for i in inner:
                ja, jb = fam[i]
                sa, sb = ja + w, jb + w
                if not (a <= sa and sb <= b and a <= ja and jb <= b):
                    escapes += 1
                    continue
                chosen.append(i)
                A.append((ja, jb))
                A_sh.append((sa, sb))
                pieces.extend([(ja, jb), (sa, sb)])
            new_holes.extend(_subtract((a, b), pieces))
        hat = sum(b - a for a, b in A) + sum(b - a for a, b in A_sh)
        covered += hat
        prod *= 1 - 2 * c / float(theta.theta(q))
        nxt = tws[idx + 1].height if idx + 1 < len(tws) else None
        nthr = 10 * C / nxt if nxt else None
        short = sum(1 for a, b in new_holes if (b - a) / tot < nthr) if nthr else 0
        holes = new_holes
        unc = sum(b - a for a, b in holes)
        levels.append(BCLevel(
            n=tw.n, q=q, selected=sorted(chosen), A_tilde=sorted(A), A_shifted=sorted(A_sh),
            holes_processed=processed, holes_skipped=skipped, shift_escapes=escapes,
            holes_after=list(holes), hole_threshold_next=nthr, short_holes_after=short,
            measure_hat=T.exact(hat), covered=T.exact(covered), uncovered=T.exact(unc),
            product_bound=prod, lower_bound_ok=covered >= length * (1 - prod) * (1 - 1e-12),
        ))
    return BCConstruction(T=T, interval=(r_num, s_num), C=C, D1=D1, D2=D2, c=c, levels=levels)


# ergodicity-criterion harness ---------------------------------------------------

@dataclass
class HarnessScale:
    n: int
    symbol: str
    q: int
    s: int  # T^s(m_n) is the global midpoint m_alpha
    alpha: str  # label of m_alpha, or "I" for 1/2
    delta: float  # T^q m_n = m_n + delta
    width: float  # |Delta^n|
    eps: float  # 3/8 |Delta^n|
    qn5: bool
    target: float  # v_n
    window: float  # |Delta_i^n| = D / (q theta(q))
    brackets_checked: int
    bracket_failures: list[int]
    levels: np.ndarray  # levels i where xi_i was refined
    xi: np.ndarray  # xi_i^n
    offsets: np.ndarray  # xi_i^n - T^i m_n
    residuals: np.ndarray  # |S_q f(xi_i^n) - v_n|
    in_window: bool  # every xi_i^n in T^i [m_n - eps/2, m_n + eps/2]
    inside_quarter: bool  # every Delta_i^n inside T^i Delta^n(1/4)
    deriv_min: float  # min |S_q f'| over the refined Delta_i^n, over q theta(q)
    deriv_max: float
    slimmed_min: float  # same over all of T^i Delta^n(1/4), all i
    slimmed_max: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else float("nan")


@dataclass
class CriterionReport:
    theta: str
    C: float  # tower constant used for the qn3/qn4 verdicts
    D: float  # D1 = D2 = D for the windows
    E: float  # fitted derivative constant
    scales: list[HarnessScale]
    tower_verdicts: list[dict]
    window_ok: list[bool]  # |v_n| + residual <= D/(4E), per scale
    verdict: str

    @property
    def D1(self) -> float:
        return self.D

    @property
    def D2(self) -> float:
        return self.D

    def to_dict(self) -> dict:
        return {
            "theta": self.theta, "tower_constant_C": self.C,
            "window_constant_D1": self.D, "window_constant_D2": self.D,
            "derivative_constant_E": self.E, "verdict": self.verdict,
            "tower_verdicts": self.tower_verdicts,
            "scales": [{
                "n": sc.n, "symbol": sc.symbol, "q": sc.q, "s": sc.s, "alpha": sc.alpha,
                "delta": sc.delta, "width": sc.width, "qn5": sc.qn5, "target_v": sc.target,
                "window": sc.window, "brackets_checked": sc.brackets_checked,
                "bracket_failures": sc.bracket_failures[:20], "levels_refined": int(sc.levels.size),
                "max_residual": sc.max_residual, "in_window": sc.in_window,
                "inside_quarter": sc.inside_quarter,
                "derivative_bracket": [sc.deriv_min, sc.deriv_max],
                "slimmed_derivative_bracket": [sc.slimmed_min, sc.slimmed_max],
                "window_ok": ok, "diagnostics": sc.diagnostics,
            } for sc, ok in zip(self.scales, self.window_ok)],
        }


def monotonicity_violations(f: PiecewiseCocycle, samples: int = 2001) -> list[str]:
    """Exchanged intervals on which ``f'`` takes both signs (sampled)."""
    out = []
    t = (1 - np.cos(np.pi * (np.arange(samples) + 0.5) / samples)) / 2
    for a in range(f.d):
        d = f.piece_derivatives(a, t * f.lengths[a])
        d = d[np.isfinite(d)]
        scale = np.max(np.abs(d)) if d.size else 0.0
        tol = 1e-12 * scale
        if np.any(d > tol) and np.any(d < -tol):
            out.append(f.T.perm.alphabet[a])
    return out


def harness_scales(orbit: RenormOrbit, q_min: int = 2, q_max: int = 50_000,
                   tol: float = 1e-10) -> list[tuple[int, int]]:
    """Levels ``(n, symbol)`` usable by the harness: the tower returns with an
    offset in ``(1/16, 1/8)`` of its base and the base midpoint reaches a
    global midpoint within the tower.  One entry per distinct height; the
    last symbol of the top row is preferred when several qualify."""
    T = orbit.levels[0]
    seen: dict[int, tuple[int, int, bool]] = {}
    for n in range(orbit.n_steps + 1):
        Tn = orbit.levels[n]
        qs = orbit.heights(n)
        last_top = Tn.perm.top[-1]
        for a in range(T.d):
            q = qs[a]
            if not (q_min <= q <= q_max) or not qn5_holds(Tn.shift_nums[a], Tn.nums[a]):
                continue
            prev = seen.get(q)
            if prev is not None and (prev[2] or a != last_top):
                continue
            if midpoint_orbit_hit(T, 2 * Tn.left_nums[a] + Tn.nums[a], q, tol) is None:
                continue
            seen[q] = (n, a, a == last_top)
    return [(n, a) for q, (n, a, _) in sorted(seen.items())]


def _fitted_tower_constant(towers: Sequence[Tower]) -> float:
    rep = check_conditions(list(towers) if len(towers) > 1 else [towers[0], towers[0]], 1.0 + 1e-9)
    vals = []
    for rec in rep.records:
        vals += [rec.q_times_len, 1 / rec.q_times_len, rec.max_hole_times_q]
    return max(vals) * 1.01


def criterion_harness(T: IET, f: PiecewiseCocycle, towers: Sequence[Tower],
                      theta: ThetaModel = THETA_LOG, C: float | None = None, D: float | None = None,
                      full_levels_up_to: int = 2048, sample_levels: int = 48,
                      residual_tol: float = RESIDUAL_TOL) -> CriterionReport:
    """Witness the hypotheses of the ergodicity criterion along ``towers``.

    For each tower, ``xi_i`` solves ``S_q f(xi_i) = v`` on level ``i`` with
    ``v = f(m_alpha - delta/2)`` (``0`` when the midpoint reached is ``1/2``).
    Brackets are checked on every level; roots are refined on all levels when
    ``q <= full_levels_up_to`` and on ``sample_levels`` spread levels otherwise.
    """
    if not is_symmetric(T.perm):
        raise DomainError("the harness needs a symmetric permutation")
    bad = monotonicity_violations(f)
    if bad:
        raise DomainError(f"f is not piecewise monotonic on {', '.join(bad)}: "
                          "the bracketing argument needs monotone pieces")
    asym = anti_symmetry_defect(f)
    if asym > 1e-8:
        raise DomainError(f"f is not anti-symmetric (defect {asym:.3g})")
    if not towers:
        raise ValueError("no towers")
    C = _fitted_tower_constant(towers) if C is None else C
    D = 1 / (16 * C) if D is None else D
    if not (0 < D < 1 / (8 * C)):
        raise ValueError("need 0 < D < 1/(8C)")
    rep = check_conditions(list(towers) if len(towers) > 1 else [towers[0], towers[0]], C)
    verdicts = [{"n": r.n, "q": r.q, "qn3": r.qn3, "qn4": r.qn4, "qn5": r.qn5} for r in rep.records[:len(towers)]]

    scales = []
    for tw in towers:
        scales.append(_harness_one(T, f, tw, theta, D, full_levels_up_to, sample_levels, residual_tol))
    # derivative constant: one E for all scales
    E = 1.0
    for sc in scales:
        for v in (sc.deriv_min, sc.deriv_max, sc.slimmed_min, sc.slimmed_max):
            if v > 0:
                E = max(E, v, 1 / v)
    window_ok = [abs(sc.target) + sc.max_residual <= D / (4 * E) for sc in scales]
    good = [sc.n for sc in scales
            if not sc.bracket_failures and sc.in_window and sc.inside_quarter
            and sc.max_residual < residual_tol]
    pre_ok = all(v["qn3"] and v["qn4"] and v["qn5"] for v in verdicts)
    verdict = (f"criterion hypotheses witnessed at scales n in {good}"
               + ("" if pre_ok else "; tower conditions qn3-qn5 not all met"))
    return CriterionReport(theta=theta.name, C=C, D=D, E=E, scales=scales, tower_verdicts=verdicts,
                           window_ok=window_ok, verdict=verdict)


def _harness_one(T: IET, f: PiecewiseCocycle, tw: Tower, theta: ThetaModel, D: float,
                 full_levels_up_to: int, sample_levels: int, residual_tol: float) -> HarnessScale:
    q = tw.height
    sc = T.scale
    m2 = 2 * tw.base_num + tw.width_num
    hit = midpoint_orbit_hit(T, m2, q)
    if hit is None:
        raise DomainError(f"base midpoint of tower n={tw.n} reaches no global midpoint within {q} steps")
    s, target_label, _ = hit
    w = tw.return_shift_num
    m = dyadic_to_float(m2, sc + 1)
    delta = dyadic_to_float(w, sc)
    width = dyadic_to_float(tw.width_num, sc)
    eps = 0.375 * width
    alpha = "I" if target_label == "1/2" else target_label
    if alpha == "I":
        v = 0.0
    else:
        ia = T.perm.index(alpha)
        m_alpha = dyadic_to_float(2 * T.left_nums[ia] + T.nums[ia], sc + 1)
        v = float(f(m_alpha - delta / 2))
    # exact level offsets; T^{q+j} x = T^j x + w on the windows used here
    offs = [L - tw.base_num for L in tw.level_nums]
    c = np.array([dyadic_to_float(o, sc) for o in offs] + [dyadic_to_float(o + w, sc) for o in offs])

    def sums(x: float, which: int = 0) -> np.ndarray:
        pts = x + c
        vals = f(pts) if which == 0 else f.derivative(pts)
        if np.any(f.in_guard(pts)):
            raise GuardError(int(np.argmax(f.in_guard(pts))), x)
        cs = np.concatenate([[0.0], np.cumsum(vals)])
        return cs[q:2 * q] - cs[:q]

    def level_sum(x: float, i: int, which: int = 0) -> float:
        pts = x + c[i:i + q]
        return math.fsum(f(pts) if which == 0 else f.derivative(pts))

    b_lo, b_mid, b_hi = m - 1.5 * delta, m - 0.5 * delta, m + 0.5 * delta
    G = {x: sums(x) - v for x in (b_lo, b_mid, b_hi)}
    idx = np.arange(q)
    upper = idx >= s
    ga = np.where(upper, G[b_lo], G[b_mid])
    gb = np.where(upper, G[b_mid], G[b_hi])
    # the root may sit on a bracket end (level s, where S_q f = v exactly)
    end_tol = residual_tol / 10
    failures = [int(i) for i in np.nonzero((ga * gb > 0) & (np.minimum(np.abs(ga), np.abs(gb)) > end_tol))[0]]

    if q <= full_levels_up_to:
        levels = idx
    else:
        extra = [0, max(s - 1, 0), s % q, q - 1]
        levels = np.unique(np.concatenate([np.linspace(0, q - 1, sample_levels).round().astype(int), extra]))
    diags = []
    xs, offsets, res = [], [], []
    qt = q * float(theta.theta(q))
    half = D / qt * float(T.total) / 2
    dmin, dmax = np.inf, 0.0
    for i in levels:
        i = int(i)
        a, b = (b_lo, b_mid) if i >= s else (b_mid, b_hi)
        a, b = min(a, b), max(a, b)
        g = lambda x: level_sum(x, i) - v
        fa, fb = g(a), g(b)
        if min(abs(fa), abs(fb)) <= end_tol:
            x = a if abs(fa) <= abs(fb) else b
        elif fa * fb > 0:
            diags.append(f"level {i}: no sign change on the bracket (monotonicity violation suspected)")
            continue
        else:
            # argument tolerance at machine resolution: |S_q f'| ~ q theta(q)
            # turns a 1e-12 argument error into residuals well above 1e-9
            x = brentq(g, a, b, xtol=BISECT_TOL * float(T.total) * 1e-4, rtol=4 * np.finfo(float).eps,
                       maxiter=BISECT_MAXITER)
        xs.append(x + c[i])
        offsets.append(x - m)
        res.append(abs(g(x)))
        for y in (x - half, x, x + half):
            dv = abs(level_sum(y, i, 1)) / qt
            dmin, dmax = min(dmin, dv), max(dmax, dv)
    offsets = np.array(offsets)
    bounds = derivative_sum_bounds(f, tw, theta, slim_delta=0.25, grid=8)
    return HarnessScale(
        n=tw.n, symbol=tw.label, q=q, s=s, alpha=alpha, delta=delta, width=width, eps=eps,
        qn5=qn5_holds(w, tw.width_num), target=v, window=D / qt, brackets_checked=q,
        bracket_failures=failures, levels=np.asarray(levels), xi=np.array(xs), offsets=offsets,
        residuals=np.array(res),
        in_window=bool(np.all(np.abs(offsets) <= eps / 2)) and len(xs) == len(levels),
        inside_quarter=bool(np.all(np.abs(offsets) + half <= width / 4)),
        deriv_min=float(dmin), deriv_max=float(dmax),
        slimmed_min=bounds.min_ratio, slimmed_max=bounds.max_ratio, diagnostics=diags,
    )


def harness_towers(T_or_orbit, n_steps: int, count: int | None = None, q_min: int = 2,
                   q_max: int = 50_000) -> list[Tower]:
    """Towers at the levels chosen by ``harness_scales``."""
    from .renorm import rv_orbit
    orbit = T_or_orbit if isinstance(T_or_orbit, RenormOrbit) else rv_orbit(T_or_orbit, n_steps)
    picks = harness_scales(orbit, q_min=q_min, q_max=q_max)
    if count is not None:
        picks = picks[:count]
    return [tower_for_symbol(orbit, n, a) for n, a in picks]
