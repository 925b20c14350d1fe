"""Command-line entry point.

Every command writes its artifacts plus a ``<stem>.report.json`` /
``<stem>.report.csv`` pair into ``--out``.  Exit status: 0 when every
declared claim holds, 1 for configuration errors, 2 when a search or
budget runs out, 3 when a claim fails or ``verify`` disagrees with the
recorded report.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .blowup import GridFunction, default_res, estimate_En_mass, scan_blowups
from .covering import (
    CubeCover,
    IntervalCover,
    RectCover,
    cover_centered_intervals,
    cover_good_cubes,
    cover_good_rectangles,
    default_region,
)
from .errors import BudgetExhausted, InvalidInput, SearchFailure
from .gradient import LayeredBumpSum, VectorField, lusin_iterate
from .measures import BoxRegion, load_measure
from .oned import BlowupTarget, PwlFunction, prescribe_blowup_1d
from .reports import VerifyReport, atomic_write, write_csv, write_json
from .tiles import TileParams, TileSum, TransverseTarget, tile_rectangles

EXIT_OK, EXIT_CONFIG, EXIT_SEARCH, EXIT_MISMATCH = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# parsing helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InvalidInput(f"expected comma-separated numbers, got {text!r}") from None


def _p_list(text: str):
    out = []
    for t in text.split(","):
        t = t.strip().lower()
        out.append(math.inf if t in ("inf", "infinity") else float(t))
    return out


def _region(text: str | None, m):
    """``lo1,lo2,...:hi1,hi2,...``; several boxes separated by ``;``."""
    if not text:
        return [default_region(m)]
    boxes = []
    for part in text.split(";"):
        if ":" not in part:
            raise InvalidInput("region must look like lo1,lo2:hi1,hi2")
        lo, hi = part.split(":")
        b = BoxRegion(_floats(lo), _floats(hi))
        if b.dim != m.dim:
            raise InvalidInput("region dimension does not match the measure")
        boxes.append(b)
    return boxes


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path} is not valid JSON: {exc.msg}") from None


def _measure(args):
    if not args.measure:
        raise InvalidInput("--measure is required")
    if not os.path.exists(args.measure):
        raise InvalidInput(f"measure file {args.measure} does not exist")
    return load_measure(args.measure)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise InvalidInput(f"--{name.replace('_', '-')} is required")


def _in_range(name, value, lo, hi, lo_open=True, hi_open=True):
    ok = (value > lo if lo_open else value >= lo) and (value < hi if hi_open else value <= hi)
    if not ok:
        raise InvalidInput(f"{name} = {value} is out of range")


def load_target_grid(path, n: int, res: int | None = None) -> GridFunction:
    d = _read_json(path)
    if d.get("kind") == "grid":
        g = GridFunction.from_json(d)
        if g.n != n:
            raise InvalidInput("target grid dimension does not match the function")
        return g
    if d.get("kind") == "pwl":
        if n != 1:
            raise InvalidInput("a piecewise linear target needs a one-dimensional function")
        return BlowupTarget.from_json(d).to_grid(res)
    raise InvalidInput(f"unsupported target kind {d.get('kind')!r}")


def load_function(path):
    """Any emitted function: pwl, grid, bump_sum or tile_sum."""
    d = _read_json(path)
    kind = d.get("kind")
    if kind == "pwl":
        return PwlFunction.from_json(d)
    if kind == "grid":
        return GridFunction.from_json(d)
    if kind == "bump_sum":
        return LayeredBumpSum.from_json(d)
    if kind == "tile_sum":
        ref = d.get("h_ref")
        if not ref:
            raise InvalidInput("tile_sum file lacks h_ref")
        hpath = ref if os.path.isabs(ref) else os.path.join(os.path.dirname(os.path.abspath(path)), ref)
        dim = int(d["dim"])
        n0 = len(d["plane"])
        h = TransverseTarget.from_json(_read_json(hpath))
        if h.codim != dim - n0:
            raise InvalidInput("tile target codimension does not match the plane")
        return TileSum.from_json(d, h)
    raise InvalidInput(f"unsupported function kind {kind!r}")


def _function_dim(g):
    if isinstance(g, PwlFunction):
        return 1
    if isinstance(g, GridFunction):
        return g.n
    return int(g.dim)


# ---------------------------------------------------------------------------
# commands


def _stem(args, default):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, args.name or default)


def _cover_claims(rep: VerifyReport, check: dict, tol_key="uncovered_mass", tol=None):
    for key, val in sorted(check.items()):
        if isinstance(val, bool):
            rep.claim(key, 1, int(val), "exact", holds=val)
    if tol is not None:
        rep.claim(tol_key, tol, check[tol_key], "exact", holds=check.get("uncovered_ok"))


def cmd_cover(args):
    if args.seed is None:
        raise InvalidInput("--seed is mandatory for cover")
    m = _measure(args)
    region = _region(args.region, m)
    regions_json = [b.to_json() for b in region]
    kind = args.kind
    if kind == "cubes":
        _require(args, "eps", "r0")
        _in_range("eps", args.eps, 0, 0.5)
        _in_range("r0", args.r0, 0, math.inf)
        tol = 1e-3 if args.tol is None else args.tol
        _in_range("tol", tol, 0, math.inf, lo_open=False)
        cover = cover_good_cubes(m, region, args.eps, args.r0, tol, seed=args.seed, draws_per_pass=args.draws, max_passes=args.max_passes)
        check = cover.verify(m, region)
        stol = cover.mass_tol
    elif kind == "rectangles":
        _require(args, "L", "sigma", "N0", "r0")
        _in_range("sigma", args.sigma, 0, 0.5)
        if args.L < 8:
            raise InvalidInput("L must be at least 8")
        tol = 0.05 if args.tol is None else args.tol
        _in_range("tol", tol, 0, 1)
        cover = cover_good_rectangles(m, region, args.L, args.sigma, args.N0, args.r0, tol=tol, seed=args.seed,
                                      draws_per_pass=args.draws, max_passes=args.max_passes)
        check = cover.verify(m, region, args.r0)
        stol = tol * check_total(m, region)
    else:
        _require(args, "r0", "n")
        if args.n < 1:
            raise InvalidInput("n must be positive")
        cover = cover_centered_intervals(m, region, args.r0, args.n, mass_tol=args.tol, seed=args.seed)
        check = cover.verify(m, region)
        stol = cover.mass_tol
    stem = _stem(args, "cover")
    write_json(stem + ".json", cover.to_json())
    atomic_write(stem + ".csv", cover.to_csv())
    rep = VerifyReport("cover", m.spec_hash(), args.seed,
                       extra={"kind": kind, "region": regions_json, "r0": args.r0, "count": len(cover)})
    _cover_claims(rep, check, tol=stol)
    rep.write(stem + ".report")
    return rep


def check_total(m, region):
    lo = np.array([b.lo for b in region])
    hi = np.array([b.hi for b in region])
    return float(m.mass_many(lo, hi, "charge").sum())


def cmd_prescribe_gradient(args):
    _require(args, "field", "eps", "zeta")
    _in_range("eps", args.eps, 0, 1)
    _in_range("zeta", args.zeta, 0, 1)
    m = _measure(args)
    f = VectorField.from_json(_read_json(args.field))
    region = _region(args.region, m) if args.region else None
    res = lusin_iterate(m, f, args.eps, args.zeta, p_list=_p_list(args.p), max_layers=args.layers, region=region, seed=args.seed)
    stem = _stem(args, "gradient")
    write_json(stem + ".json", res.g.to_json())
    rep = res.report
    rep.write(stem + ".report")
    return rep


def cmd_prescribe_blowup_1d(args):
    _require(args, "target", "n", "eps0")
    _in_range("eps0", args.eps0, 0, 1)
    m = _measure(args)
    f = BlowupTarget.from_json(_read_json(args.target))
    g0 = PwlFunction.from_json(_read_json(args.start)) if args.start else None
    h, sr = prescribe_blowup_1d(m, f, args.n, args.eps0, g0=g0, seed=args.seed, max_levels=args.max_levels,
                                max_intervals=args.max_intervals, max_windows=args.max_windows)
    stem = _stem(args, "blowup1d")
    write_json(stem + ".json", h.to_json())
    rep = VerifyReport("prescribe-blowup-1d", m.spec_hash(), args.seed, extra={"surgery": sr.to_json(), "n": args.n})
    rep.claim("E_mass_fraction", 1 - 1 / args.n, sr.achieved, "exact", le=False,
              holds=sr.achieved > 1 - 1 / args.n, note="certified lower bound from probe balls")
    rep.claim("drift", args.eps0, sr.drift_total, "exact", holds=sr.drift_total < args.eps0)
    rep.claim("lipschitz", 1.0, h.lip, "exact", holds=h.is_1_lipschitz())
    rep.extra["probes"] = [[float(x), float(ell)] for x, ell in sr.probes]
    rep.extra["target"] = f.to_json()
    rep.write(stem + ".report")
    if not sr.complete and not rep.ok:
        raise BudgetExhausted(sr.stop_reason or "surgery stopped early", best=h, achieved=sr.achieved)
    return rep


def cmd_tile(args):
    _require(args, "target", "L", "sigma", "N0", "eps_s", "eps_m", "r0")
    m = _measure(args)
    p = TileParams(args.L, args.sigma, args.N0, args.eps_s, args.eps_m, args.r0)
    h = TransverseTarget.from_json(_read_json(args.target))
    region = _region(args.region, m) if args.region else None
    stem = _stem(args, "tile")
    href = os.path.basename(stem) + ".target.json"
    res = tile_rectangles(m, region, h, p, seed=args.seed, h_ref=href)
    write_json(stem + ".target.json", h.to_json())
    write_json(stem + ".json", res.f.to_json())
    atomic_write(stem + ".rects.csv", res.cover.to_csv())
    n = m.dim
    write_csv(stem + ".core.csv", ["block"] + [f"x{d}" for d in range(n)] + ["distance", "bound"], res.core_rows)
    res.report.write(stem + ".report")
    return res.report


def cmd_blowup(args):
    _require(args, "function", "point", "radii")
    g = load_function(args.function)
    x = _floats(args.point)
    n = _function_dim(g)
    if len(x) != n:
        raise InvalidInput("point dimension does not match the function")
    radii = _floats(args.radii)
    res = args.res or default_res(n)
    stem = _stem(args, "blowup")
    rep = VerifyReport("blowup", "", args.seed, extra={"point": x, "radii": radii, "res": res})
    if args.target:
        target = load_target_grid(args.target, n, res)
        rows = scan_blowups(g, x, radii, target)
        write_csv(stem + ".csv", ["radius", "distance", "bound"], [[r, d, d + e] for r, d, e in rows])
        if args.tol is not None:
            for r, d, e in rows:
                rep.claim(f"distance_r{r:.6g}", args.tol, d + e, "grid+lipschitz")
        rep.extra["scan"] = [[r, d, d + e] for r, d, e in rows]
        if args.en is not None:
            m = _measure(args)
            frac, en = estimate_En_mass(m, g, target, args.en, [(x, radii)])
            rep.measure_hash = m.spec_hash()
            atomic_write(stem + ".en.csv", en.to_csv())
            rep.extra["E_mass_fraction"] = frac
    else:
        from .blowup import rescale

        grids = [rescale(g, x, r, res=res) for r in radii]
        for r, t in zip(radii, grids):
            write_json(f"{stem}.r{r:.6g}.json", t.to_json())
    rep.write(stem + ".report")
    return rep


# ---------------------------------------------------------------------------
# verify


def _recheck(art: dict, recorded: dict, args) -> VerifyReport:
    kind = art.get("kind")
    extra = recorded.get("extra", {})
    rep = VerifyReport("verify", recorded.get("measure_hash", ""), recorded.get("seed"), extra={"artifact_kind": kind})
    if kind in ("cube_cover", "rect_cover", "interval_cover"):
        m = _measure(args)
        region = [BoxRegion(b["lo"], b["hi"]) for b in extra.get("region", [])] or [default_region(m)]
        if kind == "cube_cover":
            cover = CubeCover.from_json(art)
            check = cover.verify(m, region)
            stol = cover.mass_tol
        elif kind == "rect_cover":
            cover = RectCover.from_json(art, m.dim)
            check = cover.verify(m, region, extra.get("r0"))
            stol = cover.tol * check_total(m, region)
        else:
            cover = IntervalCover.from_json(art)
            check = cover.verify(m, region)
            stol = cover.mass_tol
        _cover_claims(rep, check, tol=stol)
    elif kind == "pwl":
        m = _measure(args)
        h = PwlFunction.from_json(art)
        n = int(extra["n"])
        target = BlowupTarget.from_json(extra["target"]).to_grid()
        probes = [(x, [ell]) for x, ell in extra.get("probes", [])]
        frac, _ = estimate_En_mass(m, h, target, n, probes, lip=1.0) if probes else (0.0, None)
        rep.claim("E_mass_fraction", 1 - 1 / n, frac, "exact", le=False, holds=frac > 1 - 1 / n)
        drift = float(np.max(np.abs(h.v)))
        eps0 = next((c["target"] for c in recorded["claims"] if c["name"] == "drift"), math.inf)
        rep.claim("drift", eps0, drift, "exact", holds=drift < eps0)
        rep.claim("lipschitz", 1.0, h.lip, "exact", holds=h.is_1_lipschitz())
    elif kind == "bump_sum":
        g = LayeredBumpSum.from_json(art)
        claimed = {c["name"]: c for c in recorded["claims"]}
        if "sup_g" in claimed:
            rep.claim("sup_g", claimed["sup_g"]["target"], g.sup_bound(), "a-priori")
    elif kind == "tile_sum":
        if not args.artifact:
            raise InvalidInput("--artifact is required")
        f = load_function(args.artifact)
        claimed = {c["name"]: c for c in recorded["claims"]}
        if "sup_f" in claimed:
            rep.claim("sup_f", claimed["sup_f"]["target"], float(f.sigma * np.max(f.radii, initial=0.0)), "a-priori")
        rep.claim("lipschitz", 4.0 / f.L + math.sqrt(2.0), f.lip, "a-priori")
    else:
        raise InvalidInput(f"verify does not know artifact kind {kind!r}")
    return rep


def _compare(new: VerifyReport, recorded: dict) -> list[str]:
    old = {c["name"]: c for c in recorded.get("claims", [])}
    problems = []
    for c in new.claims:
        o = old.get(c.name)
        if o is None:
            if not c.holds:
                problems.append(f"{c.name}: recomputed claim fails")
            continue
        if bool(o["holds"]) != c.holds:
            problems.append(f"{c.name}: recorded holds={o['holds']} but recomputed holds={c.holds}")
        a, b = float(o["achieved"]), c.achieved
        if not (math.isnan(a) and math.isnan(b)) and abs(a - b) > 1e-9 * max(1.0, abs(a), abs(b)):
            problems.append(f"{c.name}: recorded {a!r} but recomputed {b!r}")
    return problems


def cmd_verify(args):
    _require(args, "artifact", "report")
    art = _read_json(args.artifact)
    recorded = _read_json(args.report)
    rep = _recheck(art, recorded, args)
    problems = _compare(rep, recorded)
    rep.extra["problems"] = problems
    rep.extra["recorded_run_id"] = recorded.get("run_id")
    rep.claim("agreement", 0, len(problems), "exact")
    stem = _stem(args, "verify")
    rep.write(stem + ".report")
    for p in problems:
        print(p, file=sys.stderr)
    return rep


# ---------------------------------------------------------------------------
# entry


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blowupforge", description="Constructions of functions with prescribed gradients or blowups.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, measure=True):
        if measure:
            p.add_argument("--measure", help="measure spec JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--name", help="artifact file stem")

    p = sub.add_parser("cover", help="good cubes, good rectangles or centered intervals")
    p.add_argument("kind", nargs="?", choices=["cubes", "rectangles", "intervals"], default="cubes")
    common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--tol", type=float, help="uncovered mass tolerance (absolute; fraction of K for rectangles)")
    p.add_argument("--L", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--N0", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--region", help="lo1,lo2:hi1,hi2[;...]")
    p.add_argument("--draws", type=int, default=8)
    p.add_argument("--max-passes", type=int, default=60)
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("prescribe-gradient", help="smooth g with Dg = f off a small set")
    common(p)
    p.add_argument("--field", help="vector field JSON")
    p.add_argument("--eps", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--p", default="1,2,inf")
    p.add_argument("--region")
    p.set_defaults(func=cmd_prescribe_gradient, seed=0)

    p = sub.add_parser("prescribe-blowup-1d", help="1-Lipschitz h whose blowups approach a target")
    common(p)
    p.add_argument("--target", help="piecewise linear target JSON")
    p.add_argument("--start", help="initial piecewise linear function JSON")
    p.add_argument("--n", type=int)
    p.add_argument("--eps0", type=float)
    p.add_argument("--max-levels", type=int, default=8)
    p.add_argument("--max-intervals", type=int, default=400_000)
    p.add_argument("--max-windows", type=int, default=200_000)
    p.set_defaults(func=cmd_prescribe_blowup_1d, seed=0)

    p = sub.add_parser("tile", help="glue blueprint blocks over good rectangles")
    common(p)
    p.add_argument("--target", help="transverse target JSON (pwl or grid)")
    p.add_argument("--L", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--N0", type=int)
    p.add_argument("--eps-s", type=float)
    p.add_argument("--eps-m", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--region")
    p.set_defaults(func=cmd_tile, seed=0)

    p = sub.add_parser("blowup", help="rescale a function at a point, optionally against a target")
    common(p)
    p.add_argument("--function")
    p.add_argument("--point")
    p.add_argument("--radii")
    p.add_argument("--target")
    p.add_argument("--tol", type=float)
    p.add_argument("--res", type=int)
    p.add_argument("--en", type=int, help="also bound the E^n mass from this probe")
    p.set_defaults(func=cmd_blowup)

    p = sub.add_parser("verify", help="recheck an artifact against its report from raw queries")
    common(p)
    p.add_argument("--artifact")
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        rep = args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetExhausted, SearchFailure) as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    print(rep.summary())
    return EXIT_OK if rep.ok else EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
