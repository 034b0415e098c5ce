"""Piecewise smooth cocycles with endpoint singularities over an IET."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import sympy

from ._kernels import orbit_chunk
from .iet_core import (IET, DomainError, StructuralError, ConsistencyError, Permutation,
                       is_symmetric, sigma_and_genus)

GUARD = 1e-13  # guard zone around singular endpoints, relative to |I|


class GuardError(DomainError):
    def __init__(self, index: int, x: float):
        super().__init__(f"orbit enters the guard zone at index {index} (x={x!r})")
        self.index = index
        self.x = x


# slowly varying growth models -------------------------------------------------

@dataclass(frozen=True)
class ThetaModel:
    """``theta(x) = G(log x)`` with ``G' = g``, ``G(0) = 0``; ``tau(s) = s / g(-log s)``."""

    name: str
    g: Callable
    dg: Callable
    G: Callable

    def theta(self, x):
        return self.G(np.log(x))

    def dtheta(self, x):
        return self.g(np.log(x)) / x

    def tau(self, s):
        return s / self.g(-np.log(s))

    def tau_from_theta(self, s):
        return s * s / self.dtheta(1.0 / s)

    def theta_of_inverse(self, s):
        """``theta(1/s)``: the singularity profile at distance ``s``."""
        return self.G(-np.log(s))

    def divergence_partial(self, X: float) -> float:
        """``int_e^X dx / (x theta(x))`` (unbounded growth is required)."""
        val, _ = scipy.integrate.quad(lambda t: 1.0 / self.G(t), 1.0, math.log(X), limit=200)
        return val

    def slow_variation_ratio(self, eta: float, xs: Sequence[float]) -> tuple[float, float]:
        xs = np.asarray(xs, dtype=float)
        r = self.theta(eta * xs) / self.theta(xs)
        return float(r.min()), float(r.max())


def _log_e_plus(t):
    return np.log(np.e + t)


THETA_LOG = ThetaModel("const1", g=lambda t: np.ones_like(np.asarray(t, dtype=float)),
                       dg=lambda t: np.zeros_like(np.asarray(t, dtype=float)), G=lambda t: t)
THETA_LOG_E_PLUS_X = ThetaModel(
    "log_e_plus_x", g=_log_e_plus, dg=lambda t: 1.0 / (np.e + t),
    G=lambda t: (np.e + t) * np.log(np.e + t) - np.e - t)
THETA_MODELS = {m.name: m for m in (THETA_LOG, THETA_LOG_E_PLUS_X)}


def theta_model(name: str) -> ThetaModel:
    try:
        return THETA_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown theta model {name!r}; choose from {sorted(THETA_MODELS)}") from None


# piecewise cocycles -----------------------------------------------------------

class PiecewiseCocycle:
    """Function on ``[0, |I|)`` given piecewise on the exchanged intervals.

    Subclasses implement ``_piece(a, u, v)`` and ``_dpiece(a, u, v)`` where
    ``u = x - l_a`` and ``v = r_a - x``; evaluation is vectorized.
    """

    def __init__(self, T: IET):
        self.T = T.to_float() if T.prec > 53 else T
        self._exact_T = T
        lefts, shifts, labels = self.T.float_tables
        self._lefts_top = lefts
        self._shifts_top = shifts
        self._labels_top = labels
        self.total = float(self.T.total)
        self.lefts = np.array([float(v) for v in self.T.lefts])
        self.rights = np.array([float(v) for v in self.T.rights])
        self.lengths = self.rights - self.lefts
        self.guard = GUARD * self.total

    @property
    def d(self) -> int:
        return self.T.d

    def singular_points(self) -> np.ndarray:
        return np.unique(np.concatenate([self.lefts, self.rights]))

    def locate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self._lefts_top, x, side="right") - 1
        if np.any(j < 0) or np.any(x >= self.total):
            raise DomainError("point outside [0, |I|)")
        return self._labels_top[j]

    def _eval(self, x, which):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        a = self.locate(x)
        u = x - self.lefts[a]
        v = self.rights[a] - x
        out = np.empty_like(x)
        fn = self._piece if which == 0 else self._dpiece
        for b in np.unique(a):
            m = a == b
            out[m] = fn(int(b), u[m], v[m])
        return float(out[0]) if scalar else out

    def __call__(self, x):
        return self._eval(x, 0)

    def derivative(self, x):
        return self._eval(x, 1)

    def piece_values(self, a: int, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self._piece(a, u, self.lengths[a] - u)

    def piece_derivatives(self, a: int, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self._dpiece(a, u, self.lengths[a] - u)

    def _piece(self, a, u, v):  # pragma: no cover - abstract
        raise NotImplementedError

    def _dpiece(self, a, u, v):  # pragma: no cover - abstract
        raise NotImplementedError

    def in_guard(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pts = self.singular_points()
        j = np.searchsorted(pts, x)
        lo = np.abs(x - pts[np.clip(j - 1, 0, len(pts) - 1)])
        hi = np.abs(pts[np.clip(j, 0, len(pts) - 1)] - x)
        return np.minimum(lo, hi) < self.guard

    def __add__(self, other: "PiecewiseCocycle") -> "SumCocycle":
        return SumCocycle(self, other)

    def __neg__(self) -> "ScaledCocycle":
        return ScaledCocycle(self, -1.0)

    def __sub__(self, other):
        return SumCocycle(self, ScaledCocycle(other, -1.0))


class SumCocycle(PiecewiseCocycle):
    def __init__(self, *parts: PiecewiseCocycle):
        super().__init__(parts[0]._exact_T)
        self.parts = parts

    def _piece(self, a, u, v):
        return sum(p._piece(a, u, v) for p in self.parts)

    def _dpiece(self, a, u, v):
        return sum(p._dpiece(a, u, v) for p in self.parts)


class ScaledCocycle(PiecewiseCocycle):
    def __init__(self, base: PiecewiseCocycle, c: float):
        super().__init__(base._exact_T)
        self.base, self.c = base, c

    def _piece(self, a, u, v):
        return self.c * self.base._piece(a, u, v)

    def _dpiece(self, a, u, v):
        return self.c * self.base._dpiece(a, u, v)


class FunctionCocycle(PiecewiseCocycle):
    """Cocycle from global callables ``f(x)`` and ``f'(x)`` (vectorized)."""

    def __init__(self, T: IET, f: Callable, df: Callable | None = None):
        super().__init__(T)
        self.f, self.df = f, df

    def _piece(self, a, u, v):
        return np.asarray(self.f(self.lefts[a] + u), dtype=float) * np.ones_like(u)

    def _dpiece(self, a, u, v):
        if self.df is None:
            raise ValueError("no derivative supplied")
        return np.asarray(self.df(self.lefts[a] + u), dtype=float) * np.ones_like(u)


def constant_cocycle(T: IET, c: float) -> FunctionCocycle:
    return FunctionCocycle(T, lambda x: np.full_like(np.asarray(x, dtype=float), c),
                           lambda x: np.zeros_like(np.asarray(x, dtype=float)))


class SingularCocycle(PiecewiseCocycle):
    """On ``I_a``: ``left[a]*theta(1/(x-l_a)) + right[a]*theta(1/(r_a-x)) + p_a(x-l_a)``.

    ``smooth[a]`` holds polynomial coefficients in increasing powers (or None).
    """

    def __init__(self, T: IET, model: ThetaModel, left: Sequence, right: Sequence,
                 smooth: Sequence | None = None):
        super().__init__(T)
        if len(left) != T.d or len(right) != T.d:
            raise StructuralError("one left and one right coefficient per interval")
        self.model = model
        self.left_coef = tuple(left)
        self.right_coef = tuple(right)
        self._lc = np.array([float(c) for c in left])
        self._rc = np.array([float(c) for c in right])
        self.smooth = tuple(None if p is None else tuple(float(c) for c in p)
                            for p in (smooth or [None] * T.d))

    def _piece(self, a, u, v):
        th = self.model.theta_of_inverse
        out = np.zeros_like(u)
        if self._lc[a]:
            out = out + self._lc[a] * th(u)
        if self._rc[a]:
            out = out + self._rc[a] * th(v)
        p = self.smooth[a]
        if p:
            out = out + np.polynomial.polynomial.polyval(u, p)
        return out

    def _dpiece(self, a, u, v):
        tau = self.model.tau
        out = np.zeros_like(u)
        if self._lc[a]:
            out = out - self._lc[a] / tau(u)
        if self._rc[a]:
            out = out + self._rc[a] / tau(v)
        p = self.smooth[a]
        if p and len(p) > 1:
            out = out + np.polynomial.polynomial.polyval(u, np.polynomial.polynomial.polyder(p))
        return out

    def Z_theta(self, points: int = 60) -> float:
        return _z_stat(self, points, np.max)

    def z_theta(self, points: int = 60) -> float:
        return _z_stat(self, points, np.min)


def _z_stat(f: "SingularCocycle", points: int, reducer) -> float:
    """Grid estimate of ``Z_theta`` (reducer=max) or ``z_theta`` (reducer=min)
    on geometric grids with ratio 1/2 accumulating at each endpoint."""
    best = []
    tau = f.model.tau
    for a in range(f.d):
        half = f.lengths[a] / 2
        s = half * 0.5 ** np.arange(points)
        s = s[s > f.guard]
        left = np.abs(f.piece_derivatives(a, s) * tau(s))
        right = np.abs(f.piece_derivatives(a, f.lengths[a] - s) * tau(s))
        best.append(reducer(left))
        best.append(reducer(right))
    return float(np.max(best))


class LogSingularCocycle(SingularCocycle):
    """Logarithmic singularities of geometric type.

    ``C^+_a`` weights ``-log(x - l_a)`` and ``C^-_a`` weights ``-log(r_a - x)``.
    ``form="local"`` evaluates those logs on ``I_a`` only; ``form="global"``
    uses the fractional-part expression summed over all intervals.
    """

    def __init__(self, T: IET, cplus: Sequence, cminus: Sequence, smooth: Sequence | None = None,
                 form: str = "local", strict: bool = True):
        cp = tuple(Fraction(c) for c in cplus)
        cm = tuple(Fraction(c) for c in cminus)
        super().__init__(T, THETA_LOG, cp, cm, smooth)
        if form not in ("local", "global"):
            raise ValueError("form must be 'local' or 'global'")
        self.form = form
        self.cplus, self.cminus = cp, cm
        if strict:
            bad = self.boundary_violations()
            if bad:
                raise StructuralError("; ".join(bad))

    def boundary_violations(self) -> list[str]:
        p = self.T.perm
        top, bot = p.top, p.bottom
        out = []
        if self.cminus[top[-1]] * self.cminus[bot[-1]] != 0:
            out.append("C- at the last top and last bottom intervals must not both be nonzero")
        if self.cplus[top[0]] * self.cplus[bot[0]] != 0:
            out.append("C+ at the first top and first bottom intervals must not both be nonzero")
        return out

    def _piece(self, a, u, v):
        if self.form == "local":
            return super()._piece(a, u, v)
        x = self.lefts[a] + u
        tot = self.total
        out = np.zeros_like(u)
        for b in range(self.d):
            if self._lc[b]:
                out -= self._lc[b] * np.log(tot * np.mod((x - self.lefts[b]) / tot, 1.0))
            if self._rc[b]:
                out -= self._rc[b] * np.log(tot * np.mod((self.rights[b] - x) / tot, 1.0))
        p = self.smooth[a]
        if p:
            out = out + np.polynomial.polynomial.polyval(u, p)
        return out

    def _dpiece(self, a, u, v):
        if self.form == "local":
            return super()._dpiece(a, u, v)
        x = self.lefts[a] + u
        tot = self.total
        out = np.zeros_like(u)
        for b in range(self.d):
            if self._lc[b]:
                out -= self._lc[b] / (tot * np.mod((x - self.lefts[b]) / tot, 1.0))
            if self._rc[b]:
                out += self._rc[b] / (tot * np.mod((self.rights[b] - x) / tot, 1.0))
        p = self.smooth[a]
        if p and len(p) > 1:
            out = out + np.polynomial.polynomial.polyval(u, np.polynomial.polynomial.polyder(p))
        return out

    def negated(self) -> "LogSingularCocycle":
        sm = [None if p is None else [-c for c in p] for p in self.smooth]
        return LogSingularCocycle(self._exact_T, [-c for c in self.cplus], [-c for c in self.cminus],
                                  sm, self.form, strict=False)


def phi_a(T: IET, a=1) -> LogSingularCocycle:
    """``-a log(r-x) + a log(x-l)`` on every ``I_alpha`` except the last top one, where it is 0."""
    a = Fraction(a) if not isinstance(a, Fraction) else a
    last = T.perm.top[-1]
    cp = [Fraction(0) if b == last else -a for b in range(T.d)]
    cm = [Fraction(0) if b == last else a for b in range(T.d)]
    return LogSingularCocycle(T, cp, cm)


# scalar invariants ------------------------------------------------------------

def smooth_variation(phi: SingularCocycle, levels: int = 12) -> tuple[float, float]:
    """Total variation of the polynomial part on refining uniform grids;
    returns (estimate, change at the last refinement)."""
    prev = None
    est = 0.0
    for k in range(4, levels + 1):
        n = 2 ** k
        est = 0.0
        for a in range(phi.d):
            p = phi.smooth[a]
            if not p:
                continue
            u = np.linspace(0.0, phi.lengths[a], n + 1)
            est += float(np.abs(np.diff(np.polynomial.polynomial.polyval(u, p))).sum())
        if prev is not None and abs(est - prev) <= 1e-12 * max(1.0, abs(est)):
            return est, abs(est - prev)
        delta = None if prev is None else abs(est - prev)
        prev = est
    return est, (delta if delta is not None else 0.0)


@dataclass
class ScalarInvariants:
    L: Fraction
    LV: float
    var_tolerance: float
    delta: dict[tuple[int, ...], Fraction]  # per sigma orbit
    AS: Fraction


def delta_orbit(phi: LogSingularCocycle, orbit_index: int) -> Fraction:
    ss = sigma_and_genus(phi.T.perm)
    return (sum((phi.cminus[a] for a in ss.marked_minus[orbit_index]), Fraction(0))
            - sum((phi.cplus[a] for a in ss.marked_plus[orbit_index]), Fraction(0)))


def scalar_invariants(phi: LogSingularCocycle) -> ScalarInvariants:
    ss = sigma_and_genus(phi.T.perm)
    L = sum((abs(c) for c in phi.cplus + phi.cminus), Fraction(0))
    var, tol = smooth_variation(phi)
    deltas = {}
    for i, orb in enumerate(ss.orbits):
        deltas[orb] = (sum((phi.cminus[a] for a in ss.marked_minus[i]), Fraction(0))
                       - sum((phi.cplus[a] for a in ss.marked_plus[i]), Fraction(0)))
    AS = sum((abs(v) for v in deltas.values()), Fraction(0))
    return ScalarInvariants(L=L, LV=float(L) + var, var_tolerance=tol, delta=deltas, AS=AS)


def antisym_decompose(phi: LogSingularCocycle) -> tuple[LogSingularCocycle, LogSingularCocycle]:
    """Split ``phi = phi_a + phi_s`` with ``phi_a`` anti-symmetric and
    ``Delta_O(phi_s) = 0`` for every orbit ``O``.

    For even ``d`` (one orbit) ``phi_a`` uses the single weight
    ``a = Delta_O / (2(d-1))``; otherwise one weight per interval solves the
    per-orbit equations.
    """
    T = phi._exact_T
    if not is_symmetric(T.perm):
        raise StructuralError("anti-symmetric decomposition needs a symmetric permutation")
    inv = scalar_invariants(phi)
    ss = sigma_and_genus(T.perm)
    d = T.d
    last = T.perm.top[-1]
    free = [b for b in range(d) if b != last]
    if len(ss.orbits) == 1:
        (delta,) = inv.delta.values()
        weights = {b: delta / (2 * (d - 1)) for b in free}
    else:
        # weight w_b contributes to Delta of the orbit of pi0(b) and of pi0(b)-1
        rows, rhs = [], []
        for i, orb in enumerate(ss.orbits):
            row = [0] * len(free)
            for k, b in enumerate(free):
                if b in ss.marked_minus[i]:
                    row[k] += 1
                if b in ss.marked_plus[i]:
                    row[k] += 1
            rows.append(row)
            rhs.append(inv.delta[orb])
        A = sympy.Matrix(rows)
        y = sympy.Matrix([sympy.Rational(v.numerator, v.denominator) for v in rhs])
        try:
            sol, params = A.gauss_jordan_solve(y)
        except ValueError:
            raise StructuralError("orbit equations for the anti-symmetric part have no solution") from None
        sol = sol.subs({p: 0 for p in params})
        weights = {b: Fraction(int(sympy.fraction(sol[k])[0]), int(sympy.fraction(sol[k])[1]))
                   for k, b in enumerate(free)}
    cp = [Fraction(0) if b == last else -weights[b] for b in range(d)]
    cm = [Fraction(0) if b == last else weights[b] for b in range(d)]
    pa = LogSingularCocycle(T, cp, cm, form="local", strict=False)
    ps = LogSingularCocycle(T, [x - y for x, y in zip(phi.cplus, cp)],
                            [x - y for x, y in zip(phi.cminus, cm)], phi.smooth,
                            form=phi.form, strict=False)
    return pa, ps


def anti_symmetry_defect(f: PiecewiseCocycle, samples: int = 4096) -> float:
    """Grid supremum of ``|f(T^-1(|I| - x)) + f(x)|`` away from guard zones.

    For symmetric ``T`` the map ``T^-1 o R`` reflects each ``I_alpha`` about
    its midpoint, so the grid is taken symmetric on every interval.
    """
    T = f.T
    if not is_symmetric(T.perm):
        raise StructuralError("anti-symmetry is defined for symmetric permutations")
    worst = 0.0
    per = max(8, samples // f.d)
    for a in range(f.d):
        lam = f.lengths[a]
        u = (np.arange(per) + 0.5) / per * lam
        x = f.lefts[a] + u
        keep = ~f.in_guard(x)
        x = x[keep]
        y = np.array([T.inverse_apply(f.total - xi) for xi in x])
        keep = ~f.in_guard(y)
        if not keep.any():
            continue
        worst = max(worst, float(np.max(np.abs(f(y[keep]) + f(x[keep])))))
    return worst


# Birkhoff sums ------------------------------------------------------------------

def orbit_points(f: PiecewiseCocycle, x: float, n: int, check_guard: bool = True) -> np.ndarray:
    """``T^j x`` for ``0 <= j < n`` in double precision; guard violations raise."""
    pts = f.singular_points() if check_guard else np.empty(0)
    out, bad = orbit_chunk(f._lefts_top, f._shifts_top, float(x), int(n), pts, f.guard)
    if bad >= 0:
        raise GuardError(int(bad), float(out[bad]))
    return out


def backward_points(f: PiecewiseCocycle, x: float, n: int) -> np.ndarray:
    """``T^-j x`` for ``1 <= j <= n``."""
    T = f.T
    out = np.empty(n)
    y = float(x)
    for j in range(n):
        y = float(T.inverse_apply(y))
        out[j] = y
    bad = np.nonzero(f.in_guard(out))[0]
    if bad.size:
        raise GuardError(-int(bad[0]) - 1, float(out[bad[0]]))
    return out


def birkhoff_sum(f: PiecewiseCocycle, x: float, n: int) -> float:
    """``S_n f(x)`` for signed ``n``: ``sum_{0<=j<n} f(T^j x)`` or ``-sum_{n<=j<0} f(T^j x)``."""
    if n == 0:
        return 0.0
    if n > 0:
        return float(math.fsum(f(orbit_points(f, x, n))))
    return -float(math.fsum(f(backward_points(f, x, -n))))


def birkhoff_sums_many(f: PiecewiseCocycle, xs: Sequence[float], n: int, which: int = 0) -> np.ndarray:
    """``S_n f`` (``which=0``) or ``S_n f'`` (``which=1``) at many points, ``n >= 0``."""
    out = np.empty(len(xs))
    for i, x in enumerate(xs):
        pts = orbit_points(f, x, n)
        vals = f(pts) if which == 0 else f.derivative(pts)
        out[i] = math.fsum(vals)
    return out


@dataclass
class SpecialBirkhoff:
    """``S(n)f`` on ``I^(n)``: ``S_{q_alpha} f`` on ``I_alpha^(n)``."""

    f: PiecewiseCocycle
    Tn: IET
    heights: tuple[int, ...]

    def __call__(self, x: float) -> float:
        a = self.Tn.locate(x)
        return birkhoff_sum(self.f, float(x), self.heights[a])

    def l1_norm(self, points_per_piece: int = 64) -> tuple[float, list[float]]:
        """``||S(n)f||_{L^1(I^(n))}`` as a sum of per-interval Gauss-Legendre
        quadratures (the integrand has integrable log singularities only at
        interval ends, so an endpoint-clustering substitution is used)."""
        pieces = []
        t, w = np.polynomial.legendre.leggauss(points_per_piece)
        for a in range(self.Tn.d):
            lo, hi = float(self.Tn.lefts[a]), float(self.Tn.rights[a])
            # x = lo + (hi-lo) * s, s = (1 - cos(pi*(t+1)/2)) / 2 clusters at both ends
            th = np.pi * (t + 1) / 2
            s = (1 - np.cos(th)) / 2
            ds = np.pi / 4 * np.sin(th)
            xs = lo + (hi - lo) * s
            vals = np.abs(birkhoff_sums_many(self.f, xs, self.heights[a]))
            pieces.append(float(np.sum(w * vals * ds) * (hi - lo)))
        return math.fsum(pieces), pieces


def special_birkhoff(f: PiecewiseCocycle, orbit, n: int) -> SpecialBirkhoff:
    return SpecialBirkhoff(f=f, Tn=orbit.levels[n].to_float(), heights=orbit.heights(n))


# induced maps and means ---------------------------------------------------------

@dataclass
class InducedCocycle:
    T: IET  # the original map
    f: PiecewiseCocycle
    T_J: IET  # first return map, translated to [0, |J|)
    offset_num: int  # left end of J on the scale of T
    return_times: tuple[int, ...]  # alphabet order of T_J

    @property
    def offset(self) -> float:
        return float(self.T.exact(self.offset_num))

    def return_time(self, x: float) -> int:
        return self.return_times[self.T_J.locate(float(x) - self.offset)]

    def __call__(self, x: float) -> float:
        return birkhoff_sum(self.f, float(x), self.return_time(x))

    def intervals(self) -> list[tuple[float, float]]:
        off = self.offset
        return [(off + float(l), off + float(r)) for l, r in zip(self.T_J.lefts, self.T_J.rights)]

    def kac_sum(self) -> Fraction:
        """``sum_alpha r_alpha |J_alpha|`` (equals ``|I|`` for a minimal ``T``)."""
        return self.T.exact(sum(r * n for r, n in zip(self.return_times, self.T_J.nums)))


def _to_num(T: IET, x) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    fr = Fraction(x) * (1 << T.scale) if T.scale >= 0 else Fraction(x) / (1 << -T.scale)
    return round(fr)


def induced_map(T: IET, J: tuple, cap: int = 10 ** 6) -> tuple[IET, int, tuple[int, ...]]:
    """First return map of ``T`` to ``J = [a, b)`` with exact endpoint arithmetic.

    ``J`` endpoints are rounded to the dyadic grid of ``T``.  Returns
    ``(T_J on [0, b-a), a_num, return times)``.
    """
    a, b = _to_num(T, J[0]), _to_num(T, J[1])
    if not (0 <= a < b <= T.total_num):
        raise DomainError("J must be a subinterval of I with positive length")
    if a == 0 and b == T.total_num:
        return T, 0, tuple([1] * T.d)
    # a cut point is the first entry into J of the backward orbit of a
    # discontinuity of T (the discontinuity itself counts) or of a or b
    bottom_lefts = sorted((T.image_left_nums[i], i) for i in range(T.d))
    bl = [v for v, _ in bottom_lefts]

    def t_inv(y: int) -> int:
        j = bisect.bisect_right(bl, y) - 1
        return y - T.shift_nums[bottom_lefts[j][1]]

    cuts = {a}
    seeds = [(T.left_nums[i], True) for i in range(T.d) if T.left_nums[i] > 0]
    seeds += [(a, False)] + ([(b, False)] if b < T.total_num else [])
    for c, include_self in seeds:
        if include_self and a <= c < b:
            cuts.add(c)
            continue
        y = c
        for _ in range(cap):
            y = t_inv(y)
            if a <= y < b:
                cuts.add(y)
                break
        else:
            raise DomainError(f"no return of the backward orbit of {c} within {cap} steps")
    pts = sorted(cuts)
    pieces = []
    for lo, hi in zip(pts, pts[1:] + [b]):
        x = T.apply_exact(lo)
        r = 1
        while not (a <= x < b):
            x = T.apply_exact(x)
            r += 1
            if r > cap:
                raise DomainError(f"point {float(T.exact(lo))} does not return within {cap} steps")
        pieces.append((lo, hi, r, x - lo))
    d = len(pieces)
    labels = tuple(f"J{k + 1}" for k in range(d))
    image_order = sorted(range(d), key=lambda k: pieces[k][0] + pieces[k][3])
    pi0 = tuple(range(1, d + 1))
    pi1 = [0] * d
    for pos, k in enumerate(image_order):
        pi1[k] = pos + 1
    perm = Permutation(labels, pi0, tuple(pi1))
    nums = tuple(hi - lo for lo, hi, _, _ in pieces)
    TJ = IET(perm, nums, T.scale, T.prec)
    # consistency: the exchanged image positions must tile J
    for k, (lo, hi, r, w) in enumerate(pieces):
        if TJ.shift_nums[k] != w:
            raise ConsistencyError("induced pieces do not form an interval exchange")
    return TJ, a, tuple(r for _, _, r, _ in pieces)


def symmetric_inducing_interval(T: IET, depth: int = 40) -> tuple[int, int]:
    """Numerators of a reflection-invariant ``J = [a, |I| - a)`` whose first
    return map exchanges ``d`` intervals.

    Candidates ``a`` run over the first ``depth`` forward images of the
    discontinuities, nearest to ``|I|/2`` first.
    """
    tot = T.total_num
    cands = set()
    for a in T.left_nums[1:]:
        for _ in range(depth):
            cands.add(a)
            a = T.apply_exact(a)
    for a in sorted((a for a in cands if 0 < 2 * a < tot), reverse=True):
        TJ, _, _ = induced_map(T, (a, tot - a))
        if TJ.d == T.d:
            return a, tot - a
    raise DomainError(f"no symmetric inducing interval among {len(cands)} candidates")


def induced_cocycle(T: IET, f: PiecewiseCocycle, J: tuple, cap: int = 10 ** 6) -> InducedCocycle:
    TJ, off, rts = induced_map(T, J, cap)
    return InducedCocycle(T=T, f=f, T_J=TJ, offset_num=off, return_times=rts)


def mean_value(f: Callable, J: tuple, breakpoints: Sequence[float] = (), epsabs: float = 1e-13,
               epsrel: float = 1e-12) -> float:
    """``m(f, J) = (1/|J|) int_J f``; pieces are split at ``breakpoints``.

    Each piece is integrated with the substitution ``x = a + (b-a)(3t^2 - 2t^3)``
    which flattens endpoint log or power singularities, then by adaptive
    Gauss-Kronrod quadrature.
    """
    a, b = float(J[0]), float(J[1])
    if not b > a:
        raise DomainError("interval must have positive length")
    cuts = [a] + sorted(c for c in breakpoints if a < c < b) + [b]
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        h = hi - lo

        def g(t, lo=lo, h=h):
            s = t * t * (3 - 2 * t)
            return float(f(lo + h * s)) * 6 * t * (1 - t) * h

        val, err = scipy.integrate.quad(g, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=400)
        if not math.isfinite(val):
            raise DomainError("integral does not converge on this interval")
        total += val
    return total / (b - a)


def induced_means(ind: InducedCocycle, delta: float) -> list[float]:
    """``m(f_J, J_alpha(delta))`` for every induced interval."""
    from .towers import slim
    out = []
    for lo, hi in ind.intervals():
        out.append(mean_value(np.vectorize(ind.__call__), slim((lo, hi), delta)))
    return out


# singular models from the saddle expansion --------------------------------------

class ZetaModelCocycle(PiecewiseCocycle):
    """``xi_{(sigma, l, k)}``: a power or log singularity on one interval, constant elsewhere."""

    def __init__(self, T: IET, m: int, k: int, parity: str, anchor: int, const: float = 0.0):
        super().__init__(T)
        if not (0 <= k <= m - 2):
            raise ValueError("k must satisfy 0 <= k <= m - 2")
        if parity not in ("odd", "even"):
            raise ValueError("parity must be 'odd' or 'even'")
        self.m, self.k, self.parity, self.anchor, self.const = m, k, parity, int(anchor), const
        self.is_log = k == m - 2
        if self.is_log:
            self.coef = -1.0 / (m * m * math.factorial(m - 2))
        else:
            self.coef = 1.0 / (m * m * math.factorial(k))
            self.exponent = (k - (m - 2)) / m

    def _dist(self, u, v):
        return u if self.parity == "odd" else v

    def _piece(self, a, u, v):
        if a != self.anchor:
            return np.full_like(u, self.const)
        s = self._dist(u, v)
        if self.is_log:
            return self.coef * np.log(s) + self.const
        return self.coef * s ** self.exponent + self.const

    def _dpiece(self, a, u, v):
        if a != self.anchor:
            return np.zeros_like(u)
        s = self._dist(u, v)
        sign = 1.0 if self.parity == "odd" else -1.0
        if self.is_log:
            return sign * self.coef / s
        return sign * self.coef * self.exponent * s ** (self.exponent - 1)


def zeta_singular_model(T: IET, m: int, k: int, parity: str, anchor, const: float = 0.0) -> ZetaModelCocycle:
    a = T.perm.index(anchor) if isinstance(anchor, str) else int(anchor)
    return ZetaModelCocycle(T, m, k, parity, a, const)


# derivative sums on slimmed tower levels ----------------------------------------

@dataclass
class DerivativeBounds:
    q: int
    min_abs: float
    max_abs: float
    scale: float  # q * theta(q)

    @property
    def min_ratio(self) -> float:
        return self.min_abs / self.scale

    @property
    def max_ratio(self) -> float:
        return self.max_abs / self.scale


def derivative_sum_bounds(f: PiecewiseCocycle, tower, model: ThetaModel = THETA_LOG,
                          slim_delta: float = 0.25, grid: int = 16) -> DerivativeBounds:
    """Extrema of ``|S_q f'|`` over ``T^i Delta(slim_delta)``, ``0 <= i < q``.

    One orbit of length ``2q`` per grid point ``x`` of the slimmed base gives
    ``S_q f'(T^i x)`` for every ``i`` as a difference of prefix sums.
    """
    q = tower.height
    lo, hi = tower.base
    w = hi - lo
    xs = np.linspace(lo + slim_delta * w, hi - slim_delta * w, grid)
    vals_min, vals_max = np.inf, 0.0
    for x in xs:
        pts = orbit_points(f, x, 2 * q)
        c = np.concatenate([[0.0], np.cumsum(f.derivative(pts))])
        s = np.abs(c[q:2 * q] - c[:q])
        vals_min = min(vals_min, float(s.min()))
        vals_max = max(vals_max, float(s.max()))
    scale = q * float(model.theta(max(q, 2)))
    return DerivativeBounds(q=q, min_abs=vals_min, max_abs=vals_max, scale=scale)


# cocycle spec files -----------------------------------------------------------------

def _smooth_from_json(obj, d: int):
    sm = obj.get("smooth", "none")
    if sm in (None, "none"):
        return None
    if len(sm) != d:
        raise StructuralError("smooth needs one polynomial (or null) per interval")
    return [None if p is None else [float(c) for c in p] for p in sm]


def cocycle_from_json(T: IET, obj: dict) -> PiecewiseCocycle:
    """Build a cocycle from its spec object; coefficient lists follow the alphabet order."""
    kind = obj.get("kind")
    d = T.d
    if kind == "log":
        return LogSingularCocycle(T, [str(c) for c in obj["Cplus"]], [str(c) for c in obj["Cminus"]],
                                  _smooth_from_json(obj, d), obj.get("form", "local"),
                                  strict=bool(obj.get("strict", True)))
    if kind == "theta":
        pieces = obj["pieces"]
        if len(pieces) != d:
            raise StructuralError("theta cocycle needs one piece per interval")
        left = [float(p.get("left", 0.0)) for p in pieces]
        right = [float(p.get("right", 0.0)) for p in pieces]
        smooth = [p.get("poly") for p in pieces]
        return SingularCocycle(T, theta_model(obj["g"]), left, right, smooth)
    if kind == "phi_a":
        return phi_a(T, obj.get("a", 1))
    if kind == "constant":
        return constant_cocycle(T, float(obj["value"]))
    if kind == "power":
        from .specflow import mean_zero_power_model
        anchor = obj["anchor"]
        a = T.perm.index(anchor) if isinstance(anchor, str) else int(anchor)
        if obj.get("mean_zero", True):
            return mean_zero_power_model(T, int(obj["m"]), int(obj["k"]), a, obj.get("parity", "odd"))
        return ZetaModelCocycle(T, int(obj["m"]), int(obj["k"]), obj.get("parity", "odd"), a,
                                float(obj.get("const", 0.0)))
    if kind == "coboundary":
        from .specflow import coboundary
        return coboundary(T, scale=float(obj.get("scale", 2 * math.pi)))
    raise StructuralError(f"unknown cocycle kind {kind!r}")
