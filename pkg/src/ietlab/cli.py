"""Command-line entry point: ``ietlab <group> <action> [flags]``.

Every run writes its artifact atomically and a ``<out>.manifest.json`` next to
it with the resolved configuration, its hash, library versions and wall time.
Flags fall back to ``IETLAB_<FLAG>`` environment variables, then to defaults.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from importlib import metadata

import numpy as np

COMMON_DEFAULTS = {"precision": 256, "seed": 0, "tol": 1e-12, "jobs": 1}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


# output plumbing ---------------------------------------------------------------------

def _num(v) -> str:
    """Deterministic text for numbers: shortest round-trip form for floats."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, Fraction):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "mpmath", "sympy", "numba", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(_jsonable(cfg), sort_keys=True).encode()).hexdigest()


def _emit(args, artifacts: dict[str, str], t0: float, summary: dict | None = None) -> None:
    for path, text in artifacts.items():
        _atomic_write(path, text)
    cfg = _config(args)
    manifest = {"config": cfg, "config_hash": _config_hash(cfg), "versions": _versions(),
                "artifacts": sorted(artifacts), "wall_time_s": time.perf_counter() - t0}
    if summary is not None:
        manifest["summary"] = summary
    _atomic_write(args.out + ".manifest.json", _json_text(manifest))


def _sidecar(out: str, tag: str, ext: str) -> str:
    stem, _ = os.path.splitext(out)
    return f"{stem}.{tag}.{ext}"


def _pmap(fn, items, jobs: int):
    """Ordered map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in {path}: {exc.msg} at line {exc.lineno}") from None


def _need(args, name: str):
    v = getattr(args, name, None)
    if v is None:
        raise CliError(f"--{name} is required for this command")
    return v


def _load_iet(args):
    from .iet_core import iet_from_json
    return iet_from_json(_load_json(_need(args, "spec")), prec=args.precision)


def _load_cocycle(args, T, flag: str = "cocycle"):
    from .cocycles import cocycle_from_json
    return cocycle_from_json(T, _load_json(_need(args, flag)))


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _s_grid(text: str) -> list[float]:
    """``a:b:geometric[:n]`` (``n`` defaults to one point per decade) or a comma list."""
    parts = text.split(":")
    if len(parts) == 1:
        return _float_list(text)
    if len(parts) not in (3, 4) or parts[2] != "geometric":
        raise CliError(f"bad grid {text!r}; use a:b:geometric[:n]")
    a, b = float(parts[0]), float(parts[1])
    n = int(parts[3]) if len(parts) == 4 else int(round(abs(math.log10(b / a)))) + 1
    return [float(v) for v in np.geomspace(a, b, n)]


# commands -------------------------------------------------------------------------------

def cmd_iet_validate(args, t0):
    from .iet_core import is_degenerate, is_irreducible, is_symmetric, omega_kernel_dim, \
        reflection_defect, sigma_and_genus
    T = _load_iet(args)
    p = T.perm
    flags = {"d": p.d, "alphabet": list(p.alphabet), "irreducible": is_irreducible(p),
             "symmetric": is_symmetric(p), "degenerate": is_degenerate(p),
             "total_length": float(T.total)}
    if flags["irreducible"]:
        ss = sigma_and_genus(p)
        flags.update(sigma_count=len(ss.orbits), genus=ss.genus,
                     kernel_dim=omega_kernel_dim(p))
    if flags["symmetric"]:
        flags["reflection_defect"] = reflection_defect(T)
    _emit(args, {args.out: _json_text(flags)}, t0)


def cmd_renorm_orbit(args, t0):
    from .renorm import lyapunov_estimate, rv_orbit
    T = _load_iet(args)
    orbit = rv_orbit(T, args.steps)
    d = T.d
    steps = []
    for k, st in enumerate(orbit.steps):
        w, l = st.labels(orbit.levels[k].perm)
        steps.append({"kind": st.kind, "winner": w, "loser": l, "B": st.matrix(d)})
    report = {"alphabet": list(T.perm.alphabet), "status": orbit.status, "n_steps": orbit.n_steps,
              "steps": steps, "zorich_marks": orbit.zorich_marks,
              "final_heights": list(orbit.heights(orbit.n_steps))}
    if args.lyapunov:
        est = lyapunov_estimate(orbit, seed=args.seed)
        report["lyapunov"] = {"exponents": est.exponents, "confidence": est.confidence,
                              "blocks": est.blocks, "status": est.status}
    norms = orbit.log_norms()
    _emit(args, {args.out: _json_text(report),
                 _sidecar(args.out, "lognorms", "csv"): _csv_text(["k", "log_norm"], enumerate(norms, 1))}, t0)


def cmd_towers_report(args, t0):
    from .renorm import rv_orbit
    from .towers import check_conditions, gaps_outside_tower, tower_for_symbol
    T = _load_iet(args)
    orbit = rv_orbit(T, args.levels)
    towers = []
    for n in range(1, orbit.n_steps + 1):
        qs = orbit.heights(n)
        a = max(range(T.d), key=lambda b: (qs[b], -b))  # tallest tower, first on ties
        if qs[a] > args.max_height:
            break
        towers.append(tower_for_symbol(orbit, n, a))
    if len(towers) < 2:
        raise CliError("fewer than two towers within --max-height")
    rep = check_conditions(towers, args.constant)
    rows = []
    for tw, rec in zip(towers, rep.records):
        gaps = gaps_outside_tower(tw, orbit=orbit)
        rows.append([rec.n, rec.symbol, rec.q, rec.base_len, rec.holes, gaps.max_ratio,
                     "" if rec.qn2_5 is None else rec.qn2_5, rec.qn3, rec.qn4, rec.qn5])
    header = ["n", "alpha", "q", "base_len", "holes", "max_gap_ratio", "qn2_5", "qn3", "qn4", "qn5"]
    _emit(args, {args.out: _csv_text(header, rows)}, t0, {"qn1_statistic": rep.qn1_statistic})


def cmd_cocycle_summary(args, t0):
    from .cocycles import LogSingularCocycle, anti_symmetry_defect, birkhoff_sum, scalar_invariants
    T = _load_iet(args)
    f = _load_cocycle(args, T)
    rng = np.random.default_rng(args.seed)
    out = {"class": type(f).__name__, "singular_points": f.singular_points()}
    if T.perm.d and _is_symmetric(T):
        out["anti_symmetry_defect"] = anti_symmetry_defect(f)
    if isinstance(f, LogSingularCocycle):
        inv = scalar_invariants(f)
        out["invariants"] = {"L": inv.L, "LV": inv.LV, "AS": inv.AS,
                             "delta": {",".join(map(str, k)): v for k, v in inv.delta.items()}}
    xs = rng.uniform(0.0, f.total, args.samples)
    out["birkhoff"] = [{"x": x, "n": args.n, "S_n": birkhoff_sum(f, x, args.n)} for x in xs]
    _emit(args, {args.out: _json_text(out)}, t0)


def _is_symmetric(T) -> bool:
    from .iet_core import is_symmetric
    return is_symmetric(T.perm)


def cmd_erg_scan(args, t0):
    from .ergodicity import essential_value_scan, rigidity_times
    from .renorm import rv_orbit
    T = _load_iet(args)
    f = _load_cocycle(args, T)
    orbit = rv_orbit(T, args.steps)
    ns = rigidity_times(orbit, q_max=args.qmax)
    r_grid = np.linspace(*_float_list(args.rgrid)[:2], int(_float_list(args.rgrid)[2]))
    scan = essential_value_scan(f, n_range=ns, eps=args.eps, r_grid=r_grid)
    report = {"n_values": scan.n_values, "eps": scan.eps, "note": scan.note,
              "candidates": scan.candidates}
    rows = zip(scan.r_grid, scan.evidence)
    _emit(args, {args.out: _json_text(report),
                 _sidecar(args.out, "evidence", "csv"): _csv_text(["r", "evidence"], rows)}, t0)


def cmd_erg_bc(args, t0):
    from .cocycles import theta_model
    from .ergodicity import bc_construct, centered_windows, harness_towers
    T = _load_iet(args)
    theta = theta_model(args.theta)
    towers = harness_towers(T, args.steps, q_max=args.qmax) if args.towers == "harness" else \
        _tallest_towers(T, args.steps, args.qmax)
    D = args.D if args.D is not None else 1 / (16 * args.constant)
    fams = [centered_windows(tw, D, theta) for tw in towers]
    r, s = (Fraction(v) for v in args.interval.split(","))
    # first tower whose hole threshold 10C/q fits inside (r, s)
    k = next((i for i, tw in enumerate(towers) if 10 * args.constant / tw.height <= s - r), None)
    if k is None:
        raise CliError("no tower tall enough for the interval; raise --steps or --qmax")
    bc = bc_construct(towers, fams, (r, s), k=k, theta=theta, C=args.constant)
    report = {"pairwise_disjoint": bc.pairwise_disjoint(), "coverage": bc.coverage(),
              "ledger_identity_error": bc.ledger_identity_error(),
              "hole_invariant": bc.hole_invariant_holds(), "C": bc.C, "D1": bc.D1, "D2": bc.D2}
    rows = [[lv.n, lv.q, len(lv.selected), lv.holes_processed, lv.holes_skipped, lv.shift_escapes,
             float(lv.measure_hat), float(lv.covered), lv.product_bound, lv.lower_bound_ok]
            for lv in bc.levels]
    header = ["n", "q", "selected", "holes_processed", "holes_skipped", "shift_escapes",
              "measure_hat", "covered", "product_bound", "lower_bound_ok"]
    _emit(args, {args.out: _json_text(report),
                 _sidecar(args.out, "levels", "csv"): _csv_text(header, rows)}, t0)


def _tallest_towers(T, steps, qmax):
    from .renorm import rv_orbit
    from .towers import tower_for_symbol
    orbit = rv_orbit(T, steps)
    out, seen = [], set()
    for n in range(1, orbit.n_steps + 1):
        qs = orbit.heights(n)
        a = max(range(T.d), key=lambda b: (qs[b], -b))
        if qs[a] > qmax:
            break
        if qs[a] not in seen:
            seen.add(qs[a])
            out.append(tower_for_symbol(orbit, n, a))
    return out


def cmd_erg_harness(args, t0):
    from .cocycles import theta_model
    from .ergodicity import criterion_harness, harness_towers
    T = _load_iet(args)
    f = _load_cocycle(args, T)
    towers = harness_towers(T, args.steps, q_max=args.qmax)
    if args.count:
        towers = towers[-args.count:]
    rep = criterion_harness(T, f, towers, theta_model(args.theta), residual_tol=args.residual_tol)
    rows = [[sc.n, sc.symbol, sc.q, sc.s, sc.alpha, sc.target, sc.max_residual, sc.in_window,
             sc.deriv_min, sc.deriv_max, ok] for sc, ok in zip(rep.scales, rep.window_ok)]
    header = ["n", "symbol", "q", "s", "alpha", "target_v", "max_residual", "in_window",
              "deriv_min", "deriv_max", "window_ok"]
    _emit(args, {args.out: _json_text(rep.to_dict()),
                 _sidecar(args.out, "scales", "csv"): _csv_text(header, rows)}, t0)


def _slope_row(job):
    from .saddle_local import SectorSpec, g_function, phi_sector, slope
    g_name, spec_fields, s, epsrel = job
    g = g_function(g_name)
    spec = SectorSpec(*spec_fields)
    est = slope(lambda x: phi_sector(spec, x, g, epsrel), s, g.tau)
    return est.s, est.value, est.err_est


def cmd_saddle_slopes(args, t0):
    from .saddle_local import SectorSpec, cj_constants
    coeffs = tuple(int(v) if float(v).is_integer() else float(v) for v in _float_list(args.coeffs))
    spec = SectorSpec(args.m, args.case, args.sector, coeffs, args.s0)
    grid = _s_grid(args.sgrid)
    epsrel = max(args.tol, 1e-14)
    jobs = [(args.g, (spec.m, spec.case, spec.sector, spec.coeffs, spec.s0), s, epsrel) for s in grid]
    rows = _pmap(_slope_row, jobs, args.jobs)
    target = -np.real(cj_constants(spec.m, spec.coeffs)[spec.sector])
    _emit(args, {args.out: _csv_text(["s", "slope", "err_est"], rows)}, t0, {"target": float(target)})


def cmd_dist_frakc(args, t0):
    import mpmath
    from .saddle_dist import SaddleJet, frak_C_table
    obj = _load_json(_need(args, "jet"))
    obj.setdefault("m", args.m)
    if int(obj["m"]) != args.m:
        raise CliError(f"--m {args.m} disagrees with the jet file (m={obj['m']})")
    jet = SaddleJet.from_json(obj)
    prec = args.precision if args.precision > 53 else None
    rows = []
    for l, k, v in frak_C_table(jet, prec):
        if prec:
            digits = int(prec * math.log10(2)) + 1
            rows.append([l, k, mpmath.nstr(v.real, digits), mpmath.nstr(v.imag, digits)])
        else:
            rows.append([l, k, complex(v).real, complex(v).imag])
    _emit(args, {args.out: _csv_text(["l", "k", "re", "im"], rows)}, t0)


def cmd_flow_deviate(args, t0):
    from .specflow import SpecialFlow, deviation_exponent, flow_integrate, geometric_times
    T = _load_iet(args)
    roof = _load_cocycle(args, T, "roof")
    phi = _load_cocycle(args, T, "obs")
    F = SpecialFlow(T, roof, args.roof_min)
    if args.checkpoints != "geometric":
        raise CliError("only --checkpoints geometric is supported")
    times = geometric_times(args.tmin, args.tmax, args.per_decade)
    x0 = args.x0 if args.x0 is not None else float(np.random.default_rng(args.seed).uniform(0, F.roof.total))
    res = flow_integrate(F, phi, x0, times)
    fit = deviation_exponent(res.times, res.running_max, seed=args.seed)
    rows = zip(res.times, res.values, res.running_max, res.returns)
    summary = {"x0": x0, "status": res.status, "slope": fit.slope, "ci": [fit.ci_low, fit.ci_high],
               "decades": fit.decades, "fit_status": fit.status}
    _emit(args, {args.out: _csv_text(["T", "value", "running_max", "returns"], rows),
                 _sidecar(args.out, "fit", "json"): _json_text(summary)}, t0)


# parser -------------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--spec")
    p.add_argument("--cocycle")
    p.add_argument("--out", required=out_required)
    p.add_argument("--precision", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="ietlab", description=__doc__.splitlines()[0])
    groups = top.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def leaf(group, name, func):
        p = group.add_parser(name)
        _common(p)
        p.set_defaults(func=func)
        return p

    g = groups.add_parser("iet").add_subparsers(dest="action", required=True, parser_class=_Parser)
    leaf(g, "validate", cmd_iet_validate)

    g = groups.add_parser("renorm").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "orbit", cmd_renorm_orbit)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lyapunov", action="store_true")

    g = groups.add_parser("towers").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "report", cmd_towers_report)
    p.add_argument("--levels", type=int, default=40)
    p.add_argument("--constant", type=float, default=2.0)
    p.add_argument("--max-height", dest="max_height", type=int, default=10 ** 6)

    g = groups.add_parser("cocycle").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "summary", cmd_cocycle_summary)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--samples", type=int, default=4)

    g = groups.add_parser("erg").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "scan", cmd_erg_scan)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--qmax", type=int, default=2000)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--rgrid", default="-2,2,81", help="start,stop,count")
    p = leaf(g, "bc", cmd_erg_bc)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--qmax", type=int, default=10 ** 5)
    p.add_argument("--theta", default="const1")
    p.add_argument("--constant", type=float, default=2.0)
    p.add_argument("--D", type=float)
    p.add_argument("--interval", default="0.25,0.75")
    p.add_argument("--towers", choices=("tallest", "harness"), default="tallest")
    p = leaf(g, "harness", cmd_erg_harness)
    p.add_argument("--steps", type=int, default=176)
    p.add_argument("--qmax", type=int, default=50_000)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--theta", default="const1")
    p.add_argument("--residual-tol", dest="residual_tol", type=float, default=1e-9)

    g = groups.add_parser("saddle").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "slopes", cmd_saddle_slopes)
    p.add_argument("--g", default="const1")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--coeffs", default="1")
    p.add_argument("--case", type=int, default=1)
    p.add_argument("--sector", type=int, default=1)
    p.add_argument("--s0", type=float, default=0.5)
    p.add_argument("--sgrid", default="1e-2:1e-10:geometric")

    g = groups.add_parser("dist").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "frakc", cmd_dist_frakc)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--jet", required=True)

    g = groups.add_parser("flow").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "deviate", cmd_flow_deviate)
    p.add_argument("--roof", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--roof-min", dest="roof_min", type=float, default=1e-3)
    p.add_argument("--tmin", type=float, default=1e3)
    p.add_argument("--tmax", type=float, default=1e7)
    p.add_argument("--per-decade", dest="per_decade", type=int, default=20)
    p.add_argument("--checkpoints", default="geometric")
    p.add_argument("--x0", type=float)
    return top


def _apply_env(args) -> None:
    """Fill unset common flags from ``IETLAB_*`` variables, then defaults."""
    casts = {"precision": int, "seed": int, "tol": float, "jobs": int, "spec": str, "cocycle": str}
    for name, cast in casts.items():
        if getattr(args, name, None) is not None:
            continue
        env = os.environ.get("IETLAB_" + name.upper())
        if env is not None:
            try:
                setattr(args, name, cast(env))
            except ValueError:
                raise CliError(f"IETLAB_{name.upper()}={env!r} is not a valid {cast.__name__}") from None
        elif name in COMMON_DEFAULTS:
            setattr(args, name, COMMON_DEFAULTS[name])
    if args.precision < 53:
        raise CliError("--precision must be at least 53 bits")
    if args.jobs < 1:
        raise CliError("--jobs must be positive")


def main(argv=None) -> int:
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        _apply_env(args)
        args.func(args, t0)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # single-line reason on stderr
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(json.dumps({"error": type(exc).__name__, "reason": msg}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
