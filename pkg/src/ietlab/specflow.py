"""Special flows over an IET, fiber-constant observables, and growth exponents of their integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import orbit_chunk
from .cocycles import FunctionCocycle, PiecewiseCocycle, ZetaModelCocycle
from .iet_core import IET

CHUNK = 1 << 20


@dataclass
class SpecialFlow:
    """Vertical flow under ``roof`` over ``T``; points are ``(x, r)`` with ``0 <= r < roof(x)``."""

    T: IET
    roof: PiecewiseCocycle
    roof_min: float

    def __post_init__(self):
        if self.roof_min <= 0:
            raise ValueError("roof_min must be positive")
        xs = np.linspace(0.0, self.roof.total, 4097)[:-1] + self.roof.total / 8192
        keep = ~self.roof.in_guard(xs)
        low = float(np.min(self.roof(xs[keep])))
        if low < self.roof_min:
            raise ValueError(f"roof drops to {low!r} below roof_min={self.roof_min!r}")

    def advance(self, x: float, r: float, t: float) -> tuple[float, float]:
        """Flow the point ``(x, r)`` for time ``t >= 0``."""
        r = r + t
        h = float(self.roof(x))
        lefts, shifts = self.roof._lefts_top, self.roof._shifts_top
        while r >= h:
            r -= h
            x = float(orbit_chunk(lefts, shifts, x, 2, np.empty(0), 0.0)[0][1])
            h = float(self.roof(x))
        return x, r


@dataclass
class FlowIntegral:
    times: np.ndarray
    values: np.ndarray
    returns: np.ndarray  # full returns completed before each checkpoint
    running_max: np.ndarray  # max |integral| over [0, t]; attained at return times or at t
    status: str = "ok"


def flow_integrate(F: SpecialFlow, phi: PiecewiseCocycle, x0: float, times: Sequence[float],
                   r0: float = 0.0) -> FlowIntegral:
    """``int_0^t f_phi(flow_s(x0, r0)) ds`` at each ``t`` in ``times``, ``f_phi = phi / roof``.

    Over the fiber of ``x`` the observable is ``phi(x) / roof(x)``, so a full
    return contributes ``phi(x)`` and a partial one ``phi(x) * dr / roof(x)``.
    A guard violation truncates the result and sets ``status = "guard"``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("checkpoint times must be nonnegative and sorted")
    if not (0 <= r0 < float(F.roof(x0))):
        raise ValueError("starting height outside the fiber")
    # integrate from (x0, 0) and subtract the stretch [0, r0]
    shifted = times + r0
    start = float(phi(x0)) * r0 / float(F.roof(x0))
    lefts, shifts = F.roof._lefts_top, F.roof._shifts_top
    guard_pts = np.union1d(F.roof.singular_points(), phi.singular_points())
    guard = max(F.roof.guard, phi.guard)

    values = np.full(times.shape, np.nan)
    returns = np.zeros(times.shape, dtype=np.int64)
    runmax = np.zeros(times.shape)
    x, done = float(x0), 0
    roof_acc, phi_acc, best = 0.0, 0.0, 0.0
    k = 0  # next checkpoint
    status = "ok"
    while k < times.size:
        pts, bad = orbit_chunk(lefts, shifts, x, CHUNK + 1, guard_pts, guard)
        if bad >= 0:
            pts = pts[:bad]
            status = "guard"
        if pts.size < 2:
            break
        x = float(pts[-1])
        pts = pts[:-1]
        rv = np.asarray(F.roof(pts), dtype=float)
        pv = np.asarray(phi(pts), dtype=float)
        R = roof_acc + np.concatenate([[0.0], np.cumsum(rv)])
        P = phi_acc + np.concatenate([[0.0], np.cumsum(pv)])
        # the integral is linear between returns, so extremes sit at return times
        cm = np.maximum.accumulate(np.where(R >= r0, np.abs(P - start), 0.0))
        cm = np.maximum(cm, best)
        # checkpoints reached inside this chunk
        while k < times.size and shifted[k] < R[-1]:
            n = int(np.searchsorted(R, shifted[k], side="right")) - 1
            values[k] = P[n] + pv[n] * (shifted[k] - R[n]) / rv[n] - start
            returns[k] = done + n
            runmax[k] = max(float(cm[n]), abs(values[k]))
            k += 1
        roof_acc, phi_acc, best = float(R[-1]), float(P[-1]), float(cm[-1])
        done += pts.size
        if status != "ok":
            break
    keep = ~np.isnan(values)
    return FlowIntegral(times=times[keep], values=values[keep], returns=returns[keep],
                        running_max=runmax[keep], status=status)


def ensemble_running_max(F: SpecialFlow, phi: PiecewiseCocycle, x0s: Sequence[float],
                         times: Sequence[float]) -> np.ndarray:
    """Geometric mean over starting points of the running maximum of ``|integral|``.

    Averaging logarithms damps the bounded oscillating prefactor that a single
    orbit carries, which otherwise dominates slope fits over a few decades.
    """
    logs = []
    for x0 in x0s:
        r = flow_integrate(F, phi, float(x0), times)
        if r.status != "ok" or r.times.size != len(times):
            raise RuntimeError(f"orbit from x0={x0!r} stopped early ({r.status})")
        logs.append(np.log(r.running_max))
    return np.exp(np.mean(logs, axis=0))


def geometric_times(t_min: float, t_max: float, per_decade: int = 20) -> np.ndarray:
    n = int(round(math.log10(t_max / t_min) * per_decade)) + 1
    return np.geomspace(t_min, t_max, n)


# growth exponents ---------------------------------------------------------------

@dataclass
class DeviationFit:
    slope: float
    ci_low: float
    ci_high: float
    decades: float
    status: str = "ok"


def deviation_exponent(times: Sequence[float], values: Sequence[float], n_boot: int = 500,
                       block: int | None = None, seed: int = 0, min_decades: float = 4.0) -> DeviationFit:
    """Least-squares slope of ``log max_{t' <= t} |value(t')|`` against ``log t``.

    The confidence interval is a 95% percentile interval from a moving-block
    bootstrap of the fit residuals.
    """
    t = np.asarray(times, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    order = np.argsort(t)
    t, v = t[order], v[order]
    run = np.maximum.accumulate(v)
    keep = (t > 0) & (run > 0)
    t, run = t[keep], run[keep]
    if t.size < 3:
        return DeviationFit(math.nan, math.nan, math.nan, 0.0, "degenerate")
    decades = math.log10(t[-1] / t[0])
    X, Y = np.log(t), np.log(run)
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    slope = float(coef[0])
    resid = Y - A @ coef
    n = X.size
    b = block or max(2, n // 10)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for i in range(n_boot):
        starts = rng.integers(0, n - b + 1, size=-(-n // b))
        idx = np.concatenate([np.arange(s, s + b) for s in starts])[:n]
        Yb = A @ coef + resid[idx]
        boots[i] = np.linalg.lstsq(A, Yb, rcond=None)[0][0]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    status = "ok" if decades >= min_decades else "too_short"
    return DeviationFit(slope, float(lo), float(hi), decades, status)


# fixture observables --------------------------------------------------------------

def mean_zero_power_model(T: IET, m: int, k: int, anchor: int, parity: str = "odd") -> ZetaModelCocycle:
    """Power singularity ``coef * dist^((k-(m-2))/m)`` on one interval, shifted to mean zero."""
    base = ZetaModelCocycle(T, m, k, parity, anchor)
    if base.is_log:
        raise ValueError("use k < m - 2 for a power singularity")
    lam = float(base.lengths[anchor])
    e = base.exponent
    mass = base.coef * lam ** (e + 1) / (e + 1)
    return ZetaModelCocycle(T, m, k, parity, anchor, const=-mass / base.total)


def coboundary(T: IET, h=np.sin, scale: float = 2 * math.pi) -> FunctionCocycle:
    """``h(scale x) - h(scale Tx)``: its Birkhoff sums telescope and stay bounded."""
    Tf = T.to_float() if T.prec > 53 else T
    lefts, shifts, _ = Tf.float_tables

    def fn(x):
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(lefts, x, side="right") - 1
        return h(scale * x) - h(scale * (x + shifts[j]))

    return FunctionCocycle(T, fn)
