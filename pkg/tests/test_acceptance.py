"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line; run with ``-s`` to see them inline."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from blowupforge import (
    Atomic,
    BlowupTarget,
    BoxRegion,
    Cantor,
    LebesgueDensity,
    Product,
    PwlFunction,
    TileParams,
    TransverseTarget,
    VectorField,
    blueprint_eval,
    estimate_En_mass,
    find_good_offset,
    frame_mass,
    insert_target,
    iterate_constant,
    lusin_iterate,
    prescribe_blowup_1d,
    rescale,
    tile_rectangles,
)
from blowupforge.blowup import grid_points
from blowupforge.cli import main
from blowupforge.covering import default_region
from blowupforge.errors import SearchFailure
from blowupforge.reports import write_json
from blowupforge.tiles import blueprint_boundary_distance

from conftest import cantor_leaves


@pytest.fixture
def verdict(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok
    return emit


# ---------------------------------------------------------------------------
# 1. frame constant


def test_acceptance_1_frame_constant(verdict):
    t0 = time.perf_counter()
    worst_err, worst_slack, ok = 0.0, math.inf, True
    for n in (1, 2, 3):
        m = LebesgueDensity([0] * n, [1] * n)
        for eps in (0.05, 0.1):
            closed = 1 - (1 - eps) ** n
            ratio = frame_mass(m, [0.5] * n, 0.5, eps) / m.mass(BoxRegion([0] * n, [1] * n))
            const = 16 * n * 2 ** n * eps
            worst_err = max(worst_err, abs(ratio - closed))
            worst_slack = min(worst_slack, const - closed)
            ok &= abs(ratio - closed) <= 1e-12 and closed <= const
    dt = time.perf_counter() - t0
    ok &= dt < 1.0
    verdict(1, ok, f"max |ratio - closed form| = {worst_err:.2e}, min(16N2^N eps - ratio) = {worst_slack:.3f}, {dt:.3f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. good offsets


def _trial_measure(i, rng):
    if i % 2 == 0:
        rho = rng.uniform(0.2, 0.45)
        w0 = rng.uniform(0.2, 0.8)
        return Cantor(rho=rho, weights=(w0, 1 - w0)), BoxRegion([0.0], [1.0]), 0.01
    pts = rng.uniform(0, 1, (30, 2))
    return Atomic(pts, rng.uniform(0.5, 2.0, 30)), BoxRegion([0.0, 0.0], [1.0, 1.0]), 0.005


def _recheck_offset(m, K, r, eps, res):
    """Good cubes and captured mass from raw box queries only."""
    n = m.dim
    c = res.centers[res.good]
    if len(c) == 0:
        return False
    # cubes lie on the lattice omega + 2r Z^N
    k = (c - res.omega) / (2 * r)
    if np.max(np.abs(k - np.round(k))) > 1e-6:
        return False
    outer = m.mass_many(c - r, c + r, "closed")
    inner = m.mass_many(c - (1 - eps) * r, c + (1 - eps) * r, "open")
    if np.any(outer - inner > 16 * n * 2 ** n * eps * outer + 1e-12):
        return False
    lo = np.maximum(c - r, K.lo)
    hi = np.minimum(c + r, K.hi)
    keep = np.all(hi > lo, axis=1)
    captured = float(m.mass_many(lo[keep], hi[keep], "charge").sum())
    return captured >= 0.75 * m.mass(K, "charge") - 1e-12


def test_acceptance_2_good_offsets(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    success = rechecked = 0
    for i in range(200):
        m, K, eps = _trial_measure(i, rng)
        r = rng.uniform(0.02, 0.2)
        try:
            res = find_good_offset(m, K, r, eps, seed=i, budget=64, fallback_grid=False)
        except SearchFailure:
            continue
        success += 1
        rechecked += _recheck_offset(m, K, r, eps, res)
    dt = time.perf_counter() - t0
    ok = success >= 195 and rechecked == success and dt < 30
    verdict(2, ok, f"{success}/200 within 64 draws, {rechecked}/{success} re-verified >= 3/4 mu(K), {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3-4. gradient prescription


@pytest.fixture(scope="module")
def cantor_run():
    t0 = time.perf_counter()
    res = lusin_iterate(Cantor(), VectorField.constant([1.0]), 0.1, 0.05, max_layers=4, seed=0)
    return res, time.perf_counter() - t0


def test_acceptance_3_gradient(verdict, cantor_run):
    res, dt = cantor_run
    m = Cantor()
    eps, zeta = 0.1, 0.05
    region = default_region(m)
    total = m.mass(region, "charge")
    kept = sum(m.mass(b, "charge") for b in res.K)
    exc = total - kept
    eta4 = res.a * eps ** 2 * 2.0 ** -10
    last = res.steps[-1]
    rng = np.random.default_rng(7)
    hw = ((1 - last.eps) * last.radii)[:, None]
    pts = np.vstack([last.cells] + [last.cells + hw * rng.uniform(-1, 1, last.cells.shape) for _ in range(20)])
    resid = float(np.max(np.abs(1.0 - res.g.grad(pts)[:, 0])))
    x = np.linspace(region.lo[0], region.hi[0], 200001)[:, None]
    grid_sup = float(np.max(np.abs(res.g.eval(x))))
    ok = (exc < eps * total and res.etas[-1] == pytest.approx(eta4) and resid <= eta4
          and res.g.sup_bound() <= zeta and grid_sup <= zeta and dt < 60)
    verdict(3, ok, f"exceptional {exc:.4g} < {eps * total:.3g}, residual {resid:.2e} <= eta_4 {eta4:.3e} "
                   f"on {len(pts)} core points, sup bound {res.g.sup_bound():.4g} / grid {grid_sup:.4g} <= {zeta}, {dt:.2f}s")
    assert ok


def test_acceptance_4_lp(verdict, cantor_run):
    runs = [cantor_run[0]] + [lusin_iterate(Cantor(), VectorField.constant([1.0]), 0.1, 0.05, max_layers=4, seed=s) for s in range(1, 5)]
    ok = True
    consts, ratios = {}, {}
    for res in runs:
        claims = {c.name: c for c in res.report.claims}
        for row in res.report.extra["lp_table"]:
            p = row["p"]
            ok &= claims[f"lp_inequality_p{p}"].holds
            ok &= row["C_N"] == pytest.approx(iterate_constant(1, math.inf if p == "inf" else float(p)))
            consts.setdefault(p, []).append(row["C_N"])
            ratios.setdefault(p, []).append(row["observed_ratio"])
    spread = max(max(v) / min(v) - 1 for v in consts.values())
    obs = max(max(v) / min(v) - 1 if min(v) > 0 else 0.0 for v in ratios.values())
    ok &= spread <= 0.1
    detail = ", ".join(f"p={p}: C_N={consts[p][0]:.4g}, observed {min(ratios[p]):.4g}..{max(ratios[p]):.4g}" for p in consts)
    verdict(4, ok, f"{detail}; C_N spread {spread:.1%}, observed spread {obs:.1%} over 5 seeds")
    assert ok


# ---------------------------------------------------------------------------
# 5. exact planting


def test_acceptance_5_planting(verdict):
    rng = np.random.default_rng(5)
    base = PwlFunction.zero((-1.0, 2.0))
    ys = grid_points(1, 257)[:, 0]
    worst = 0.0
    for _ in range(50):
        f = BlowupTarget.random(rng)
        x = rng.uniform(0.2, 0.8)
        ell = rng.uniform(0.005, 0.1)
        r = insert_target(base, x, ell, f)
        t = rescale(r, [x], ell, res=257)
        worst = max(worst, float(np.max(np.abs(t.values - f(ys)))))
    ok = worst <= 1e-12
    verdict(5, ok, f"max grid error {worst:.2e} over 50 targets")
    assert ok


# ---------------------------------------------------------------------------
# 6. one-dimensional blowups on the Cantor set


def test_acceptance_6_blowup_1d(verdict):
    m = Cantor()
    f = BlowupTarget.abs()
    t0 = time.perf_counter()
    h, rep = prescribe_blowup_1d(m, f, 4, 0.1)
    dt = time.perf_counter() - t0
    frac = estimate_En_mass(m, h, f.to_grid(), 4, rep.probes, lip=1.0)[0] if rep.probes else 0.0
    lip = h.is_1_lipschitz() and all(lv.lipschitz_ok for lv in rep.levels)
    ok = frac > 0.75 and rep.drift_total < 0.1 and lip and dt < 120
    verdict(6, ok, f"E-mass lower bound {frac:.4g} (need > 0.75), drift {rep.drift_total:.3g} < 0.1, "
                   f"1-Lipschitz {lip}, {len(rep.levels)} levels, {dt:.2f}s; stop: {rep.stop_reason or 'complete'}")
    assert ok


# ---------------------------------------------------------------------------
# 7. blueprint properties


def _blueprint_checks(L, n0, h, rng, count=10_000):
    inner = L * L / 2 - L / 4
    hw = L * L / 2
    # core: F = h
    y = rng.uniform(-inner, inner, (count, n0))
    yt = rng.uniform(-1, 1, (count, 1))
    core = np.array_equal(blueprint_eval(y, yt, h, L), h.fn(yt[:, 0]))
    # a box 1.5 times larger than B
    y = rng.uniform(-1.5 * hw, 1.5 * hw, (count, n0))
    yt = rng.uniform(-3, 3, (count, 1))
    v = blueprint_eval(y, yt, h, L)
    outside = (np.max(np.abs(y), axis=1) >= hw) | (np.abs(yt[:, 0]) >= 2)
    support = bool(np.all(v[outside] == 0))
    bounded = bool(np.all(np.abs(v) <= 1))
    decay = bool(np.all(np.abs(v) <= blueprint_boundary_distance(y, yt, L)))
    # difference quotients at several scales
    q = 0.0
    for s in (1e-3, 1e-1, 1.0, L):
        y2 = y + rng.normal(size=y.shape) * s
        yt2 = yt + rng.normal(size=yt.shape) * s / L
        d = np.hypot(np.linalg.norm(y2 - y, axis=1), np.abs(yt2 - yt)[:, 0])
        q = max(q, float(np.max(np.abs(blueprint_eval(y2, yt2, h, L) - v) / d)))
    return core, support, bounded, decay, q


def test_acceptance_7_blueprint(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    targets = [TransverseTarget(BlowupTarget.abs(), 1), TransverseTarget(BlowupTarget.random(np.random.default_rng(1)), 1)]
    ok, worst = True, {}
    for L in (8, 16, 32):
        for n0 in (1, 2):
            for h in targets:
                core, support, bounded, decay, q = _blueprint_checks(L, n0, h, rng)
                ok &= core and support and bounded and decay and q <= 4 / L + math.sqrt(2) + 1e-6
                worst[L] = max(worst.get(L, 0.0), q)
    dt = time.perf_counter() - t0
    ok &= dt < 10
    lips = ", ".join(f"L={L}: {q:.4f} <= {4 / L + math.sqrt(2):.4f}" for L, q in worst.items())
    verdict(7, ok, f"F2/F3/F4/F6 on 10^4 points each; sampled Lipschitz {lips}; {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 8. tiling core estimate


def test_acceptance_8_tiling(verdict):
    m = Product([LebesgueDensity([0], [1]), Cantor()])
    h = TransverseTarget(BlowupTarget.abs(), 1)
    ratios, dists, centre = {}, {}, 0.0
    for sigma in (0.05, 0.1):
        p = TileParams(L=16, sigma=sigma, N0=1, eps_s=0.25, eps_m=0.1, r0=0.05)
        res = tile_rectangles(m, None, h, p, seed=0)
        ratios[sigma] = res.report.extra["core_ratio"]
        dists[sigma] = res.report.extra["core_distance_max"]
        f = res.f
        target = h.grid(2, f.long, 65)
        rng = np.random.default_rng(8)
        for i in rng.choice(len(f), size=min(20, len(f)), replace=False):
            x = f.centers[i] + np.array([rng.uniform(-0.4, 0.4) * f.radii[i], 0.0])
            t = rescale(f, x, sigma * f.radii[i], res=65)
            centre = max(centre, float(np.max(np.abs(t.values - target.values))))
    variation = max(ratios.values()) / min(ratios.values())
    ok = variation < 2 and centre == 0.0
    verdict(8, ok, f"sup-distance/sigma = {ratios[0.05]:.4g} (sigma=0.05), {ratios[0.1]:.4g} (sigma=0.1), "
                   f"variation {variation!r}x (need < 2x); raw sup-distance {dists[0.05]:.6g} / {dists[0.1]:.6g}; "
                   f"center-line distance {centre:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 9. Cantor oracle


def _brute_count(left_a, left_b, size_a, x, strict):
    """Number of depth-30 left endpoints ``<= x`` (``< x`` if strict): stage-A cylinder plus stage-B offsets."""
    side = "left" if strict else "right"
    j = np.searchsorted(left_a, x, side=side) - 1
    out = np.zeros(len(x))
    ok = j >= 0
    jj = j[ok]
    local = (x[ok] - left_a[jj]) / size_a
    out[ok] = jj * len(left_b) + np.searchsorted(left_b, local, side=side)
    return out


def test_acceptance_9_cantor_oracle(verdict):
    left_a, _, size_a = cantor_leaves(15)
    left_b, _, _ = cantor_leaves(15)
    rng = np.random.default_rng(9)
    a = rng.uniform(-0.1, 1.1, 1000)
    b = a + rng.uniform(0, 0.5, 1000) ** 2
    brute = (_brute_count(left_a, left_b, size_a, b, False) - _brute_count(left_a, left_b, size_a, a, True)) / 2.0 ** 30
    m = Cantor()
    got = m.mass_many(a[:, None], b[:, None], "closed")
    err = float(np.max(np.abs(got - brute)))
    ok = err <= 2.0 ** -20
    verdict(9, ok, f"max |cantor - depth-30 brute force| = {err:.2e} <= 2^-20 = {2.0 ** -20:.2e} on 1000 intervals")
    assert ok


# ---------------------------------------------------------------------------
# 10. determinism


def _inputs(d):
    write_json(d / "cantor.json", {"kind": "cantor"})
    write_json(d / "prod.json", {"kind": "product", "components": [
        {"kind": "lebesgue_density", "lo": [0], "hi": [1]}, {"kind": "cantor"}]})
    write_json(d / "atoms.json", {"kind": "atomic", "points": [[0.2], [0.5], [0.8]], "weights": [1, 1, 2]})
    write_json(d / "abs.json", BlowupTarget.abs().to_json())
    write_json(d / "one.json", VectorField.constant([1.0]).to_json())
    write_json(d / "pwl.json", PwlFunction([-2, 0.5, 2], [-1.5, 0, -1.5], (-2, 2)).to_json())


def _commands(d, out):
    j = lambda s: str(d / s)  # noqa: E731
    return [
        ["cover", "--measure", j("cantor.json"), "--eps", "0.01", "--r0", "0.1", "--tol", "1e-3", "--seed", "7", "--name", "cubes"],
        ["cover", "intervals", "--measure", j("cantor.json"), "--r0", "0.1", "--n", "4", "--seed", "1", "--name", "iv"],
        ["cover", "rectangles", "--measure", j("prod.json"), "--L", "8", "--sigma", "0.1", "--N0", "1", "--r0", "0.1",
         "--seed", "1", "--name", "rc"],
        ["prescribe-gradient", "--measure", j("cantor.json"), "--field", j("one.json"), "--eps", "0.1", "--zeta", "0.05",
         "--layers", "3", "--seed", "3"],
        ["prescribe-blowup-1d", "--measure", j("atoms.json"), "--target", j("abs.json"), "--n", "4", "--eps0", "0.1"],
        ["tile", "--measure", j("prod.json"), "--target", j("abs.json"), "--L", "16", "--sigma", "0.1", "--N0", "1",
         "--eps-s", "0.25", "--eps-m", "0.1", "--r0", "0.05"],
        ["blowup", "--function", j("pwl.json"), "--point", "0.5", "--radii", "0.1,0.01", "--target", j("abs.json")],
        ["blowup", "--function", str(out / "tile.json"), "--point", "0.5,0.5", "--radii", "0.05", "--name", "tb"],
        ["verify", "--measure", j("prod.json"), "--artifact", str(out / "tile.json"), "--report", str(out / "tile.report.json"),
         "--name", "vtile"],
        ["verify", "--measure", j("atoms.json"), "--artifact", str(out / "blowup1d.json"),
         "--report", str(out / "blowup1d.report.json"), "--name", "v1d"],
    ]


def _snapshot(out: Path):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_acceptance_10_determinism(verdict, tmp_path):
    _inputs(tmp_path)
    out = tmp_path / "out"
    codes, snaps = [], []
    for _ in range(2):
        run_codes = [main([*argv, "--out", str(out)]) for argv in _commands(tmp_path, out)]
        codes.append(run_codes)
        snaps.append(_snapshot(out))
    differ = sorted(k for k in snaps[0] if snaps[0][k] != snaps[1].get(k)) + sorted(set(snaps[1]) - set(snaps[0]))
    ok = codes[0] == codes[1] and all(c == 0 for c in codes[0]) and not differ and len(snaps[0]) > 0
    verdict(10, ok, f"{len(codes[0])} commands, {len(snaps[0])} artifacts, exit codes {codes[0]}, "
                    f"differing: {differ or 'none'}")
    assert ok
