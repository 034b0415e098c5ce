"""Rauzy-Veech induction (one- and two-dimensional), Zorich blocks, the
cocycle matrices, Rauzy classes, self-similar IETs and Lyapunov estimates.

Lengths evolve as exact integer numerators over a fixed power of two, so
the induction itself never drifts; the working precision only enters
through the tie tolerance and through rounded views.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ._prec import mp_context, tie_tolerance_bits
from .iet_core import (IET, ConsistencyError, DomainError, Permutation, StructuralError,
                       is_irreducible, make_iet, omega_matrix)

TOP, BOTTOM = "top", "bottom"
DRIFT_CHECK_EVERY = 32


class TieError(DomainError):
    """The two competing rightmost intervals have equal length within tolerance."""


class PrimitivityError(ValueError):
    """A loop matrix has no strictly positive power."""


@dataclass(frozen=True)
class InductionStep:
    kind: str
    winner: int  # alphabet indices
    loser: int

    def matrix(self, d: int) -> list[list[int]]:
        """``B(1) = Id + E[loser][winner]``, so that ``lambda' B(1) = lambda``."""
        m = identity(d)
        m[self.loser][self.winner] = 1
        return m

    def labels(self, perm: Permutation) -> tuple[str, str]:
        return perm.alphabet[self.winner], perm.alphabet[self.loser]


def identity(d: int) -> list[list[int]]:
    return [[int(i == j) for j in range(d)] for i in range(d)]


def matmul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> list[list[int]]:
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def matrix_norm(m: Sequence[Sequence[int]]) -> int:
    """Max row sum (entries are nonnegative for induction matrices)."""
    return max(sum(abs(x) for x in row) for row in m)


def determinant(m: Sequence[Sequence[int]]) -> int:
    from sympy import Matrix
    return int(Matrix(m).det())


def move(perm: Permutation, kind: str) -> tuple[Permutation, int, int]:
    """Combinatorial Rauzy move; returns ``(new perm, winner, loser)``."""
    top, bottom = list(perm.top), list(perm.bottom)
    a, b = top[-1], bottom[-1]
    if kind == TOP:
        winner, loser = a, b
        bottom.pop()
        bottom.insert(bottom.index(a) + 1, b)
    elif kind == BOTTOM:
        winner, loser = b, a
        top.pop()
        top.insert(top.index(b) + 1, a)
    else:
        raise ValueError(f"unknown move {kind!r}")
    alph = perm.alphabet
    new = Permutation.from_rows([alph[i] for i in top], [alph[i] for i in bottom], alph)
    return new, winner, loser


def step_kind(T: IET, ref_total_num: int | None = None) -> str:
    a, b = T.perm.top[-1], T.perm.bottom[-1]
    diff = T.nums[a] - T.nums[b]
    ref = T.total_num if ref_total_num is None else ref_total_num
    if abs(diff) << tie_tolerance_bits(T.prec) <= ref:
        raise TieError("undefined induction: competing lengths tie within tolerance")
    return TOP if diff > 0 else BOTTOM


def rv_step(T: IET, ref_total_num: int | None = None) -> tuple[IET, InductionStep]:
    """One Rauzy-Veech step: induce on ``[0, |I| - min(lambda_a, lambda_b))``."""
    kind = step_kind(T, ref_total_num)
    perm, winner, loser = move(T.perm, kind)
    nums = list(T.nums)
    nums[winner] -= nums[loser]
    return IET(perm, tuple(nums), T.scale, T.prec), InductionStep(kind, winner, loser)


# suspensions ------------------------------------------------------------------

@dataclass(frozen=True)
class Suspension:
    iet: IET
    tau: tuple  # Fractions or floats, alphabet order

    def __post_init__(self):
        bad = suspension_violations(self.iet.perm, self.tau)
        if bad:
            raise StructuralError("tau violates the suspension sign conditions at j=" + ",".join(map(str, bad)))

    @property
    def heights(self) -> tuple:
        om = omega_matrix(self.iet.perm)
        d = self.iet.d
        return tuple(-sum(om[a][b] * self.tau[b] for b in range(d)) for a in range(d))

    @property
    def area(self):
        return sum(l * h for l, h in zip(self.iet.lengths_exact if _exact(self.tau) else self.iet.lengths,
                                         self.heights))


def _exact(tau) -> bool:
    return all(isinstance(t, (int, Fraction)) for t in tau)


def suspension_violations(perm: Permutation, tau: Sequence) -> list[int]:
    bad = []
    s0 = s1 = 0
    for j in range(1, perm.d):
        s0 += tau[perm.top[j - 1]]
        s1 += tau[perm.bottom[j - 1]]
        if not (s0 > 0 and s1 < 0):
            bad.append(j)
    return bad


def rv_step_2d(S: Suspension, ref_total_num: int | None = None) -> tuple[Suspension, InductionStep]:
    T1, step = rv_step(S.iet, ref_total_num)
    tau = list(S.tau)
    tau[step.winner] = tau[step.winner] - tau[step.loser]
    bad = suspension_violations(T1.perm, tau)
    if bad:
        raise ConsistencyError(f"induced tau violates the sign conditions at j={bad}")
    return Suspension(T1, tuple(tau)), step


def backward_kind(S: Suspension) -> str:
    s = sum(S.tau)
    if s == 0:
        raise TieError("undefined backward induction: sum of tau vanishes")
    return TOP if s < 0 else BOTTOM


def rv_backward(S: Suspension) -> tuple[Suspension, InductionStep]:
    """Inverse of :func:`rv_step_2d`; the type is read off the sign of sum(tau)."""
    kind = backward_kind(S)
    perm = S.iet.perm
    top, bottom = list(perm.top), list(perm.bottom)
    if kind == TOP:
        winner = top[-1]
        loser = bottom[bottom.index(winner) + 1]
        bottom.remove(loser)
        bottom.append(loser)
    else:
        winner = bottom[-1]
        loser = top[top.index(winner) + 1]
        top.remove(loser)
        top.append(loser)
    alph = perm.alphabet
    new_perm = Permutation.from_rows([alph[i] for i in top], [alph[i] for i in bottom], alph)
    nums = list(S.iet.nums)
    nums[winner] += nums[loser]
    tau = list(S.tau)
    tau[winner] = tau[winner] + tau[loser]
    T0 = IET(new_perm, tuple(nums), S.iet.scale, S.iet.prec)
    return Suspension(T0, tuple(tau)), InductionStep(kind, winner, loser)


def default_tau(perm: Permutation) -> tuple[Fraction, ...]:
    """A canonical suspension vector: ``tau_alpha = pi1(alpha) - pi0(alpha)``."""
    return tuple(Fraction(b - a) for a, b in zip(perm.pi0, perm.pi1))


# orbits -------------------------------------------------------------------------

@dataclass
class RenormOrbit:
    levels: list[IET]
    steps: list[InductionStep]
    B: list[tuple[tuple[int, ...], ...]]  # B(n) for n = 0..len(steps)
    zorich_marks: list[int] = field(default_factory=list)  # step counts at block ends
    status: str = "ok"

    @property
    def perm(self) -> Permutation:
        return self.levels[0].perm

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def heights(self, n: int) -> tuple[int, ...]:
        """Return times ``q_alpha^(n)`` (row sums of ``B(n)``)."""
        return tuple(sum(row) for row in self.B[n])

    def Q(self, k: int) -> tuple[tuple[int, ...], ...]:
        """Cumulative matrix after ``k`` Zorich blocks."""
        return self.B[0] if k == 0 else self.B[self.zorich_marks[k - 1]]

    def Z(self, k: int) -> list[list[int]]:
        """Product of the steps of the ``k``-th Zorich block (1-based)."""
        start = 0 if k == 1 else self.zorich_marks[k - 2]
        stop = self.zorich_marks[k - 1]
        d = self.perm.d
        m = identity(d)
        for st in self.steps[start:stop]:
            m = matmul(st.matrix(d), m)
        return m

    def block_lengths(self) -> list[int]:
        marks = [0] + self.zorich_marks
        return [b - a for a, b in zip(marks, marks[1:])]

    def log_norms(self) -> list[float]:
        return [math.log(matrix_norm(self.Z(k))) for k in range(1, len(self.zorich_marks) + 1)]


def rv_orbit(T: IET, n_steps: int) -> RenormOrbit:
    """Run ``n_steps`` Rauzy-Veech steps, stopping early on a tie."""
    return _run(T, max_steps=n_steps, max_blocks=None)


def zorich_orbit(S: Suspension | IET, k_max: int, max_steps: int = 10 ** 7) -> RenormOrbit:
    """Run until ``k_max`` maximal same-type blocks are complete."""
    T = S.iet if isinstance(S, Suspension) else S
    return _run(T, max_steps=max_steps, max_blocks=k_max)


def _run(T: IET, max_steps: int, max_blocks: int | None) -> RenormOrbit:
    d = T.d
    ref = T.total_num
    B = identity(d)
    Binv = identity(d)
    orbit = RenormOrbit(levels=[T], steps=[], B=[_freeze(B)])
    nums0 = T.nums
    cur = T
    while orbit.n_steps < max_steps:
        try:
            nxt, step = rv_step(cur, ref)
        except TieError:
            orbit.status = "tie"
            break
        if orbit.steps and step.kind != orbit.steps[-1].kind:
            orbit.zorich_marks.append(orbit.n_steps)
            if max_blocks is not None and len(orbit.zorich_marks) >= max_blocks:
                break
        w, l = step.winner, step.loser
        B[l] = [x + y for x, y in zip(B[l], B[w])]
        for row in Binv:
            row[w] -= row[l]
        orbit.steps.append(step)
        orbit.levels.append(nxt)
        orbit.B.append(_freeze(B))
        cur = nxt
        if orbit.n_steps % DRIFT_CHECK_EVERY == 0:
            resolved = tuple(sum(nums0[a] * Binv[a][b] for a in range(d)) for b in range(d))
            if resolved != cur.nums:
                raise ConsistencyError(f"length drift at step {orbit.n_steps}")
    else:
        if max_blocks is not None:
            orbit.status = "max_steps"
    if orbit.status == "ok" and max_blocks is not None and len(orbit.zorich_marks) < max_blocks:
        orbit.status = "max_steps"
    return orbit


def _freeze(m) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(r) for r in m)


def rauzy_class(perm: Permutation, reduced: bool = True) -> dict:
    """Closure under both moves.  With ``reduced`` vertices are label-free
    permutations ``p = pi1 o pi0^-1``; otherwise labelled pairs."""
    if not is_irreducible(perm):
        raise StructuralError("permutation is reducible")
    key = (lambda p: p.reduced()) if reduced else (lambda p: (p.pi0, p.pi1))
    start = key(perm)
    reps = {start: perm}
    edges = []
    queue = deque([perm])
    while queue:
        p = queue.popleft()
        for kind in (TOP, BOTTOM):
            q, _, _ = move(p, kind)
            kq = key(q)
            edges.append((key(p), kind, kq))
            if kq not in reps:
                reps[kq] = q
                queue.append(q)
    return {"vertices": list(reps), "edges": edges, "representatives": reps}


# self-similar IETs ----------------------------------------------------------

def loop_matrix(perm: Permutation, loop: Iterable[str]) -> tuple[list[list[int]], Permutation, list[InductionStep]]:
    d = perm.d
    m = identity(d)
    p = perm
    steps = []
    for kind in loop:
        kind = {"t": TOP, "b": BOTTOM}.get(kind, kind)
        p, w, l = move(p, kind)
        st = InductionStep(kind, w, l)
        steps.append(st)
        m = matmul(st.matrix(d), m)
    return m, p, steps


def is_primitive(m: Sequence[Sequence[int]]) -> bool:
    d = len(m)
    pattern = np.array([[1 if x > 0 else 0 for x in row] for row in m], dtype=np.int64)
    power = pattern.copy()
    for _ in range((d - 1) ** 2 + 1):
        if power.min() > 0:
            return True
        power = np.minimum(power @ pattern, 1)
    return bool(power.min() > 0)


def self_similar_from_loop(perm: Permutation, loop: Sequence[str], prec: int = 256) -> tuple[IET, object]:
    """IET whose Rauzy-Veech orbit repeats ``loop`` forever, and the Perron root.

    ``lambda`` is the left Perron eigenvector of the loop matrix.
    """
    m, end, _ = loop_matrix(perm, loop)
    if end != perm:
        raise StructuralError("loop does not return to its base permutation")
    if not is_primitive(m):
        raise PrimitivityError("loop matrix has no strictly positive power")
    ctx = mp_context(prec + 64)
    d = perm.d
    mt = ctx.matrix([[m[j][i] for j in range(d)] for i in range(d)])  # transpose
    vals, vecs = ctx.eig(mt)
    k = max(range(d), key=lambda i: ctx.re(vals[i]))
    rho = ctx.re(vals[k])
    vec = [ctx.re(vecs[i, k]) for i in range(d)]
    s = ctx.fsum(vec)
    lam = [v / s for v in vec]
    if min(lam) <= 0:
        raise ConsistencyError("Perron vector is not positive")
    T = make_iet(perm, lam, prec)
    return T, mp_context(prec).mpf(rho)


def eigen_residual(T: IET, loop: Sequence[str], rho) -> float:
    m, _, _ = loop_matrix(T.perm, loop)
    d = T.d
    ctx = mp_context(T.prec + 64)
    lam = [ctx.mpf(x) for x in T.lengths]
    res = [ctx.fsum(lam[a] * m[a][b] for a in range(d)) - rho * lam[b] for b in range(d)]
    return float(max(abs(r) for r in res))


def periodic_drift(T: IET, loop: Sequence[str], periods: int) -> list[float]:
    """Max deviation of the normalized length vector from its start value
    after each period; raises if the step types leave the loop."""
    kinds = [{"t": TOP, "b": BOTTOM}.get(k, k) for k in loop]
    ref = T.total_num
    cur = T
    base = [Fraction(n, T.total_num) for n in T.nums]
    out = []
    for p in range(periods):
        for i, kind in enumerate(kinds):
            cur, st = rv_step(cur, ref)
            if st.kind != kind:
                raise ConsistencyError(f"period {p}, step {i}: got {st.kind}, loop says {kind}")
        if cur.perm != T.perm:
            raise ConsistencyError("loop did not return to the base permutation")
        tot = cur.total_num
        out.append(max(abs(float(Fraction(n, tot) - b)) for n, b in zip(cur.nums, base)))
    return out


# Lyapunov exponents -----------------------------------------------------------

@dataclass
class LyapunovEstimate:
    exponents: list[float]  # normalized by the top exponent, descending
    raw: list[float]  # per Zorich block
    confidence: list[float]
    blocks: int
    status: str = "ok"


def _qr_increments(mats: Sequence[np.ndarray], dim: int) -> np.ndarray:
    d = mats[0].shape[0]
    V = np.eye(d)[:, :dim]
    out = np.empty((len(mats), dim))
    for k, Z in enumerate(mats):
        V, R = np.linalg.qr(Z @ V)
        diag = np.diag(R)
        out[k] = np.log(np.abs(diag))
        V = V * np.sign(diag)
    return out


def lyapunov_estimate(orbit: RenormOrbit, dim: int | None = None, n_boot: int = 200,
                      seed: int = 0, block: int | None = None) -> LyapunovEstimate:
    """Exponents of the Zorich cocycle ``Q(k)`` acting on column vectors."""
    n = len(orbit.zorich_marks)
    if n < 100:
        raise ValueError(f"need at least 100 Zorich blocks, got {n}")
    d = orbit.perm.d
    dim = d if dim is None else dim
    mats = [np.array(orbit.Z(k), dtype=float) for k in range(1, n + 1)]
    inc = _qr_increments(mats, dim)
    raw = inc.mean(axis=0)
    status = "ok"
    if not raw[0] > 0:
        status = "degenerate"
        return LyapunovEstimate([float("nan")] * dim, raw.tolist(), [float("nan")] * dim, n, status)
    norm = raw / raw[0]
    rng = np.random.default_rng(seed)
    block = block or max(1, int(round(n ** (1 / 3))))
    nblocks = n // block
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, nblocks, size=nblocks)
        sample = np.concatenate([inc[i * block:(i + 1) * block] for i in idx])
        m = sample.mean(axis=0)
        boots.append(m / m[0])
    boots = np.array(boots)
    lo, hi = np.percentile(boots, [2.5, 97.5], axis=0)
    conf = (hi - lo) / 2
    return LyapunovEstimate(norm.tolist(), raw.tolist(), conf.tolist(), n, status)


def random_lengths(d: int, bits: int, rng: np.random.Generator) -> list[Fraction]:
    """Uniform point of the simplex, as exact dyadic rationals of ``bits`` bits."""
    words = (bits + 63) // 64
    raw = []
    for _ in range(d):
        u = 0
        for w in rng.integers(0, 2 ** 63, size=words, dtype=np.int64).tolist():
            u = (u << 63) | int(w)
        raw.append(u | 1)
    # exponential spacings give the uniform simplex; -log via mpmath at the requested bits
    ctx = mp_context(bits + 32)
    top = 63 * words
    exps = [-ctx.log(ctx.ldexp(ctx.mpf(u), -top)) for u in raw]
    s = ctx.fsum(exps)
    return [e / s for e in exps]
