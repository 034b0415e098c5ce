"""Passage times through degenerate saddle sectors and their slope asymptotics.

A potential ``H`` is given through its inverse, ``(H^-1)'(u) = g(-log u) / sqrt(u)``,
for a slowly varying ``g`` with ``g(0) = 1``.  Sector passage times are integrals
over ``u`` in ``(s, s0)``; we substitute ``u - s = w^2`` with ``w = sqrt(s) sinh t``,
so ``u = s cosh^2 t`` and ``du / (2 sqrt(u) sqrt(u - s)) = dt``.  The integrands
become bounded and the logarithmic length of the range is built into ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.special
import sympy

from .cocycles import THETA_LOG, THETA_LOG_E_PLUS_X, ThetaModel
from .iet_core import DomainError

# g shares the (g, g', G) interface of the growth models
GFunction = ThetaModel
G_REGISTRY: dict[str, GFunction] = {"const1": THETA_LOG, "log_e_plus_x": THETA_LOG_E_PLUS_X}

QUAD_EPSREL = 1e-13
QUAD_LIMIT = 400
LAGUERRE_NODES = 96


class QuadratureError(RuntimeError):
    pass


def g_function(name: str) -> GFunction:
    try:
        return G_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown g {name!r}; choose from {sorted(G_REGISTRY)}") from None


def g_violations(g: GFunction, grid: Sequence[float] | None = None) -> list[str]:
    """Checks ``g(0) = 1``, monotonicity, concavity and slow growth on a grid."""
    xs = np.geomspace(1e-6, 1e6, 400) if grid is None else np.asarray(grid, dtype=float)
    xs = np.concatenate([[0.0], xs])
    out = []
    if abs(float(g.g(0.0)) - 1.0) > 1e-15:
        out.append("g(0) != 1")
    gv = np.asarray(g.g(xs), dtype=float)
    dg = np.asarray(g.dg(xs), dtype=float)
    if np.any(np.diff(gv) < 0):
        out.append("g decreases")
    if np.any(dg < 0):
        out.append("g' negative")
    if np.any(np.diff(dg) > 1e-15):
        out.append("g' increases (g not concave)")
    if float(g.g(1e6 + 10) / g.g(1e6)) > 1.01:
        out.append("g(x+a)/g(x) not close to 1 at x=1e6")
    return out


# potentials ---------------------------------------------------------------------

def _laguerre_mean(g: GFunction, c: np.ndarray, nodes: int) -> np.ndarray:
    t, w = np.polynomial.laguerre.laggauss(nodes)
    return (np.asarray(g.g(c[..., None] + 2.0 * t), dtype=float) * w).sum(axis=-1)


def laguerre_mean(g: GFunction, c) -> np.ndarray:
    """``int_0^inf g(c + 2t) e^-t dt``, so that ``H^-1(x) = 2 sqrt(x) * laguerre_mean(-log x)``.

    Comes from ``u = v^2`` and then ``v = sqrt(x) e^-t``; closed forms are used
    for the shipped ``g`` and Gauss-Laguerre otherwise.
    """
    c = np.asarray(c, dtype=float)
    if g.name == "const1":
        return np.ones_like(c)
    if g.name == "log_e_plus_x":
        # integration by parts: log a + e^{a/2} E1(a/2) with a = e + c
        a = np.e + c
        return np.log(a) + scipy.special.exp1(a / 2) * np.exp(a / 2)
    v1 = _laguerre_mean(g, c, LAGUERRE_NODES)
    v2 = _laguerre_mean(g, c, 2 * LAGUERRE_NODES)
    bad = np.abs(v1 - v2) > 1e-12 * np.abs(v2)
    if np.any(bad):
        worst = int(np.argmax(np.abs(v1 - v2)))
        raise QuadratureError(f"potential quadrature did not converge at c={np.ravel(c)[worst]!r}")
    return v2


def hinv(g: GFunction, x):
    """``H^-1(x) = int_0^x g(-log u) / sqrt(u) du`` for ``0 <= x <= 1``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("H^-1 is defined on [0, 1]")
    with np.errstate(divide="ignore"):
        c = -np.log(np.where(x > 0, x, 1.0))
    return np.where(x > 0, 2.0 * np.sqrt(x) * laguerre_mean(g, c), 0.0)


def bracket_constant(g: GFunction) -> float:
    """``C_g = 2 + 4 g'(0)`` from concavity: ``H^-1(x) <= C_g sqrt(x) g(-log x)``."""
    return 2.0 + 4.0 * float(g.dg(0.0))


@dataclass
class Potential:
    g: GFunction
    s0: float
    x0: float  # H^-1(s0)
    grid: np.ndarray  # geometric nodes in (0, s0]
    values: np.ndarray  # H^-1 on the grid
    order: int = 3
    _spline: object = field(default=None, repr=False)

    def hinv(self, x):
        return hinv(self.g, x)

    def h(self, y):
        """``H(y)`` for ``0 < y <= x0``: spline in log-log coordinates, then Newton polish."""
        y = np.asarray(y, dtype=float)
        if self._spline is None:
            self._spline = scipy.interpolate.make_interp_spline(
                np.log(self.values), np.log(self.grid), k=self.order)
        x = np.exp(self._spline(np.log(y)))
        for _ in range(3):
            x = x - (self.hinv(x) - y) * np.sqrt(x) / np.asarray(self.g.g(-np.log(x)))
        return x

    def bracket_violations(self) -> list[float]:
        lo = 2.0 * np.sqrt(self.grid) * self.g.g(-np.log(self.grid))
        hi = bracket_constant(self.g) * np.sqrt(self.grid) * self.g.g(-np.log(self.grid))
        tol = 1e-13 * self.values
        bad = (self.values < lo - tol) | (self.values > hi + tol)
        return [float(x) for x in self.grid[bad]]


def build_potential(g: GFunction, s0: float = 0.5, nodes: int = 601, x_min: float = 1e-300,
                    order: int = 3) -> Potential:
    if not (0 < s0 <= 1):
        raise DomainError("s0 must lie in (0, 1]")
    problems = g_violations(g)
    if problems:
        raise ValueError("invalid g: " + "; ".join(problems))
    grid = np.geomspace(x_min, s0, nodes)
    values = hinv(g, grid)
    if np.any(np.diff(values) <= 0):
        raise QuadratureError("H^-1 not increasing on the tabulation grid")
    pot = Potential(g=g, s0=s0, x0=float(values[-1]), grid=grid, values=values, order=order)
    bad = pot.bracket_violations()
    if bad:
        raise QuadratureError(f"bracket for H^-1 fails at x={bad[0]!r}")
    return pot


# passage-time integrals ---------------------------------------------------------

@dataclass(frozen=True)
class SectorSpec:
    """Sector ``j`` (``1..4m``) of a multiplicity-``m`` saddle and the observable.

    ``coeffs[k]`` multiplies ``z^k zbar^(2m-2-k)``; ``case`` says which coordinate
    carries the square: 1 means ``H2(y) = y^2``, 2 means ``H1(x) = x^2``.
    """

    m: int
    case: int
    sector: int
    coeffs: tuple
    s0: float = 0.5

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.case not in (1, 2):
            raise ValueError("case must be 1 or 2")
        if not (1 <= self.sector <= 4 * self.m):
            raise ValueError(f"sector must lie in 1..{4 * self.m}")
        if len(self.coeffs) != 2 * self.m - 1:
            raise ValueError("need 2m-1 coefficients (k + l = 2(m-1))")

    @classmethod
    def monomial(cls, m: int, k: int, l: int, case: int = 1, sector: int = 1, s0: float = 0.5):
        if k + l != 2 * (m - 1) or k < 0 or l < 0:
            raise ValueError("monomial exponents need k + l = 2(m-1)")
        coeffs = [0] * (2 * m - 1)
        coeffs[k] = 1
        return cls(m, case, sector, tuple(coeffs), s0)

    @property
    def structure(self) -> int:
        """Which of the two integral shapes this sector uses (even sectors swap roles)."""
        return self.case if self.sector % 2 == 1 else 3 - self.case

    @property
    def rotation(self) -> int:
        return (self.sector - 1) // 2


def _t_max(s: float, s0: float) -> float:
    return math.acosh(math.sqrt(s0 / s))


def _sector_pieces(structure: int, s: float, g: GFunction):
    """``(A(t), B(t), weight(t))`` so that the passage-time integrand is
    ``weight * Re[(G0(A + iB) / G0(A - iB))^p]`` in the variable ``t``."""
    def square_on_b(t):
        u = s * math.cosh(t) ** 2
        return float(hinv(g, u)), math.sqrt(s) * math.sinh(t), float(g.g(-math.log(u)))

    def square_on_a(t):
        u = s * math.cosh(t) ** 2
        v = s * math.sinh(t) ** 2
        if v <= 0.0:
            return math.sqrt(u), 0.0, float(g.g(-math.log(max(v, 1e-300))))
        return math.sqrt(u), float(hinv(g, v)), float(g.g(-math.log(v)))

    return square_on_b if structure == 1 else square_on_a


def _quad(fn: Callable[[float], float], T: float, epsrel: float) -> tuple[float, float]:
    pts = [x for x in (0.5, 2.0) if x < T]
    val, err, *rest = scipy.integrate.quad(fn, 0.0, T, points=pts or None, epsabs=0.0,
                                           epsrel=epsrel, limit=QUAD_LIMIT, full_output=1)
    if len(rest) > 1 and rest[0]["last"] >= QUAD_LIMIT:
        raise QuadratureError(f"quadrature hit the subdivision limit ({rest[1]})")
    return val, err


def phi1(case: int, s: float, g: GFunction, s0: float = 0.5,
         epsrel: float = QUAD_EPSREL) -> tuple[float, float]:
    """Passage time for ``f = 1``, ``m = 1``; returns ``(value, error estimate)``."""
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    if not (0 < s < s0) or s0 > 1:
        raise DomainError("need 0 < s < s0 <= 1")
    piece = _sector_pieces(case, s, g)
    val, err = _quad(lambda t: 2.0 * piece(t)[2], _t_max(s, s0), epsrel)
    return val, err


def phi1_const_closed_form(s: float, s0: float) -> float:
    """``g = 1``: antiderivative ``2 log(sqrt u + sqrt(u - s))`` evaluated on ``[s, s0]``."""
    return 2.0 * math.log((math.sqrt(s0) + math.sqrt(s0 - s)) / math.sqrt(s))


def _root(m: int, n) -> complex:
    """``zeta^n`` with ``zeta = exp(i pi / m)``."""
    return complex(np.exp(1j * math.pi * n / m))


def phi_sector_complex(spec: SectorSpec, s: float, g: GFunction,
                       epsrel: float = QUAD_EPSREL) -> tuple[complex, float]:
    """``phi^j_f(s)`` as a complex number and a quadrature error bound."""
    if not (0 < s < spec.s0) or spec.s0 > 1:
        raise DomainError("need 0 < s < s0 <= 1")
    m = spec.m
    piece = _sector_pieces(spec.structure, s, g)
    T = _t_max(s, spec.s0)
    j = spec.rotation
    total, err = 0j, 0.0
    for k, a in enumerate(spec.coeffs):
        if a == 0:
            continue
        p = k - (m - 1)

        # Re[(w / conj w)^p] with w = G0(A + iB) is cos(2 p arg(A + iB) / m)
        def integrand(t, p=p):
            A, B, wgt = piece(t)
            return math.cos(2.0 * p * math.atan2(B, A) / m) * wgt

        val, e = _quad(integrand, T, epsrel)
        # f_{k,l} o zeta^{-j} = zeta^{-j(k-l)} f_{k,l}, and k - l = 2p
        total += complex(a) * _root(m, -2 * j * p) * (2.0 / (m * m)) * val
        err += abs(complex(a)) * (2.0 / (m * m)) * e
    return total, err


def phi_sector(spec: SectorSpec, s: float, g: GFunction, epsrel: float = QUAD_EPSREL) -> float:
    return phi_sector_complex(spec, s, g, epsrel)[0].real


# sector constants -----------------------------------------------------------------

def _zeta_exact(m: int, n: int):
    r = sympy.Rational(n, m)
    return sympy.cos(sympy.pi * r) + sympy.I * sympy.sin(sympy.pi * r)


def cj_constants_exact(m: int, coeffs: Sequence) -> dict[int, sympy.Expr]:
    """``C^j(f)`` for ``j = 1..4m`` as exact sympy numbers."""
    if len(coeffs) != 2 * m - 1:
        raise ValueError("need 2m-1 coefficients")
    a = [sympy.nsimplify(c) if isinstance(c, (int, str)) else sympy.sympify(c) for c in coeffs]
    out = {}
    for j in range(2 * m):
        odd = even = sympy.Integer(0)
        for k, ak in enumerate(a):
            p = k - (m - 1)
            rot = _zeta_exact(m, -2 * j * p)
            odd += ak * rot
            even += ak * rot * sympy.cos(sympy.pi * sympy.Rational(p, m))
        out[2 * j + 1] = sympy.simplify(sympy.expand(odd / m ** 2))
        out[2 * j + 2] = sympy.simplify(sympy.expand(even / m ** 2))
    return out


def cj_constants(m: int, coeffs: Sequence) -> dict[int, complex | float]:
    """``C^j(f)`` as floats, real whenever the exact value is real."""
    out = {}
    for j, v in cj_constants_exact(m, coeffs).items():
        c = complex(sympy.N(v, 30))
        out[j] = c.real if sympy.im(v) == 0 else c
    return out


# slopes -----------------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeEstimate:
    s: float
    value: float
    err_est: float
    status: str = "ok"


def _five_point(phi: Callable[[float], float], s: float, h: float) -> float:
    """``d phi / d log s`` by a central 5-point stencil on ``s e^{kh}``."""
    f = [phi(s * math.exp(k * h)) for k in (-2, -1, 1, 2)]
    return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h)


def slope(phi: Callable[[float], float], s: float, tau: Callable[[float], float],
          rel_step: float = 1e-4, tol: float | None = None) -> SlopeEstimate:
    """``tau(s) phi'(s)`` with a step-halving error estimate."""
    d1 = _five_point(phi, s, rel_step)
    d2 = _five_point(phi, s, rel_step / 2)
    scale = float(tau(s)) / s
    value = d2 * scale
    err = abs(d2 - d1) * scale
    status = "ok" if tol is None or err <= tol else "error_exceeds_tol"
    return SlopeEstimate(s=s, value=value, err_est=err, status=status)


def aitken(x1: float, x2: float, x3: float) -> float:
    """Three-point Aitken limit; falls back to ``x3`` when the sequence is not geometric."""
    d1, d2 = x2 - x1, x3 - x2
    den = d2 - d1
    if den == 0 or d1 == 0 or d2 / d1 <= 0 or abs(d2 / d1) >= 1:
        return x3
    return x3 - d2 * d2 / den


@dataclass
class SectorAsymptotics:
    spec: SectorSpec
    rows: list[SlopeEstimate]
    target: float
    extrapolated: float
    residual: float  # |extrapolated - slope at the smallest s|

    def table(self) -> list[tuple[float, float, float, float]]:
        return [(r.s, r.value, r.err_est, self.target) for r in self.rows]


def sector_slope(spec: SectorSpec, s: float, g: GFunction, rel_step: float = 1e-4) -> SlopeEstimate:
    return slope(lambda x: phi_sector(spec, x, g), s, g.tau, rel_step)


def verify_sector_asymptotics(spec: SectorSpec, g: GFunction, s_grid: Sequence[float]) -> SectorAsymptotics:
    """Slopes on ``s_grid`` and an Aitken limit from ``s_min * 1e4, s_min * 1e2, s_min``."""
    s_grid = sorted(s_grid, reverse=True)
    rows = [sector_slope(spec, s, g) for s in s_grid]
    s_min = s_grid[-1]
    by_s = {r.s: r for r in rows}
    trio = []
    for s in (s_min * 1e4, s_min * 1e2, s_min):
        trio.append(by_s[s].value if s in by_s else sector_slope(spec, s, g).value)
    ext = aitken(*trio)
    target = -cj_constants(spec.m, spec.coeffs)[spec.sector]
    target = float(np.real(target))
    return SectorAsymptotics(spec=spec, rows=rows, target=target, extrapolated=ext,
                             residual=abs(ext - trio[-1]))
