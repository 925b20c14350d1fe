"""One-dimensional prescribed blowups.

A :class:`PwlFunction` is a piecewise linear function with constant
extension outside its breakpoints.  The surgery takes a 1-Lipschitz ``h``,
flattens it on a family of intervals by sliding the graph
(:func:`collapse`), and plants a copy of the target ``f`` at the center of
each flat interval (:func:`insert_target`), so that the rescaling of the
result at that center and scale equals ``f`` exactly.
:func:`prescribe_blowup_1d` repeats this on ever smaller scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blowup import GridFunction, default_res, estimate_En_mass
from .covering import cover_centered_intervals
from .errors import BudgetExhausted, InvalidInput, SearchFailure
from .measures import BoxRegion, MeasureModel

LIP_TOL = 1e-12


class PwlFunction:
    """Piecewise linear ``t -> v`` through ``(t_k, v_k)``; constant beyond the end knots."""

    def __init__(self, t, v, domain=None):
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        if t.size == 0 or t.size != v.size:
            raise InvalidInput("breakpoints and values must be nonempty and of equal length")
        if np.any(np.diff(t) <= 0):
            raise InvalidInput("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidInput("breakpoints must be finite")
        self.t = t
        self.v = v
        if domain is None:
            domain = (t[0], t[-1])
        self.domain = (float(domain[0]), float(domain[1]))
        if not self.domain[0] < self.domain[1]:
            raise InvalidInput("empty domain")

    @classmethod
    def linear(cls, slope: float, domain=(-1.0, 1.0), intercept: float = 0.0):
        a, b = domain
        return cls([a, b], [intercept + slope * a, intercept + slope * b], domain)

    @classmethod
    def zero(cls, domain):
        return cls(list(domain), [0.0, 0.0], domain)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.t, self.v)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return self(x[..., 0] if x.ndim == 2 else x)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.v) / np.diff(self.t)

    @property
    def lip(self) -> float:
        return float(np.max(np.abs(self.slopes), initial=0.0))

    def is_1_lipschitz(self, tol: float = LIP_TOL) -> bool:
        """Slopes in ``[-1, 1]`` up to ``tol`` and a few ulps of the knot coordinates.

        Knots ``x + ell y`` are rounded relative to ``|x|``, so at tiny
        scales the represented slopes can exceed 1 by ``ulp(x) / ell``.
        """
        ulps = 4 * np.spacing(np.maximum(np.abs(self.t[1:]), np.abs(self.t[:-1])))
        return bool(np.all(np.abs(np.diff(self.v)) <= np.diff(self.t) * (1 + tol) + ulps))

    def simplify(self) -> "PwlFunction":
        """Drop collinear interior knots."""
        if self.t.size <= 2:
            return self
        s = self.slopes
        keep = np.ones(self.t.size, dtype=bool)
        keep[1:-1] = s[1:] != s[:-1]
        return PwlFunction(self.t[keep], self.v[keep], self.domain)

    def sup_diff(self, other: "PwlFunction") -> float:
        """Exact ``sup |self - other|`` (attained at a knot of either)."""
        knots = np.union1d(self.t, other.t)
        return float(np.max(np.abs(self(knots) - other(knots))))

    def to_json(self):
        return {"kind": "pwl", "domain": list(self.domain), "breakpoints": np.column_stack([self.t, self.v]).tolist()}

    @classmethod
    def from_json(cls, d):
        if d.get("kind") != "pwl":
            raise InvalidInput("not a pwl function file")
        bp = np.asarray(d["breakpoints"], dtype=float).reshape(-1, 2)
        return cls(bp[:, 0], bp[:, 1], d.get("domain"))

    def __repr__(self):
        return f"PwlFunction({self.t.size} knots on [{self.domain[0]:.6g}, {self.domain[1]:.6g}])"


class BlowupTarget(PwlFunction):
    """A 1-Lipschitz PWL function on ``[-1, 1]`` vanishing at 0."""

    def __init__(self, t, v, domain=(-1.0, 1.0)):
        super().__init__(t, v, (-1.0, 1.0))
        if self.t[0] > -1 or self.t[-1] < 1:
            raise InvalidInput("target breakpoints must span [-1, 1]")
        if abs(float(self(0.0))) > 0:
            raise InvalidInput("target must vanish at 0")
        if not self.is_1_lipschitz():
            raise InvalidInput("target must be 1-Lipschitz")

    @classmethod
    def abs(cls):
        return cls([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0])

    @classmethod
    def identity(cls, slope: float = 1.0):
        return cls([-1.0, 1.0], [-slope, slope])

    @classmethod
    def from_pwl(cls, p: PwlFunction):
        t = np.union1d(p.t[(p.t > -1) & (p.t < 1)], [-1.0, 0.0, 1.0])
        return cls(t, p(t))

    @classmethod
    def random(cls, rng: np.random.Generator, knots: int = 8):
        """Random 1-Lipschitz target with ``knots`` interior breakpoints."""
        t = np.union1d(np.sort(rng.uniform(-1, 1, knots)), [-1.0, 0.0, 1.0])
        slopes = rng.uniform(-1, 1, t.size - 1)
        v = np.concatenate([[0.0], np.cumsum(slopes * np.diff(t))])
        v -= v[np.searchsorted(t, 0.0)]
        return cls(t, v)

    def to_grid(self, res: int | None = None) -> GridFunction:
        res = default_res(1) if res is None else res
        return GridFunction(1, res, self(np.linspace(-1, 1, res)), 1.0)

    @classmethod
    def from_json(cls, d):
        return cls.from_pwl(PwlFunction.from_json(d))


def _check_intervals(intervals, domain=None):
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if iv.size == 0:
        return iv
    if np.any(iv[:, 1] <= iv[:, 0]):
        raise InvalidInput("intervals must have positive length")
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    if np.any(iv[1:, 0] < iv[:-1, 1]):
        raise InvalidInput("intervals overlap")
    if domain is not None and (iv[0, 0] < domain[0] or iv[-1, 1] > domain[1]):
        raise InvalidInput("intervals leave the domain")
    return iv


def collapse(h: PwlFunction, intervals) -> PwlFunction:
    """``x -> h(x - |(-inf, x) & union(intervals)|)``: flat on each interval, shifted right of it."""
    iv = _check_intervals(intervals, h.domain)
    if iv.size == 0:
        return h
    a, b = iv[:, 0], iv[:, 1]
    cum = np.concatenate([[0.0], np.cumsum(b - a)])
    s_knots = np.column_stack([a, b]).ravel()

    def s(x):
        k = np.searchsorted(b, x, side="right")  # intervals lying left of x
        kk = np.minimum(k, len(a) - 1)
        inside = (k < len(a)) & (x > a[kk])
        return np.where(inside, a[kk] - cum[kk], x - cum[k])

    # preimages of h's knots on the increasing pieces: x = t + cum of intervals to the left of x
    # the gap pieces map [b_(j-1), a_j] onto [b_(j-1) - cum_j, a_j - cum_j]
    lo_img = np.concatenate([[-np.inf], b - cum[1:]])
    j = np.searchsorted(lo_img, h.t, side="right") - 1
    pre = h.t + cum[j]
    knots = np.union1d(np.union1d(s_knots, pre), [h.domain[0], h.domain[1]])
    knots = knots[(knots >= h.domain[0]) & (knots <= h.domain[1])]
    vals = h(s(knots))
    return PwlFunction(knots, vals, h.domain).simplify()


def target_bump(x: float, ell: float, f: PwlFunction) -> PwlFunction:
    """``ell f((t - x)/ell)`` on ``|t - x| <= ell``, linear to 0 at ``|t - x| = 2 ell``, 0 beyond."""
    inner = f.t[(f.t > -1) & (f.t < 1)]
    y = np.concatenate([[-2.0, -1.0], inner, [1.0, 2.0]])
    vals = np.concatenate([[0.0, ell * float(f(-1.0))], ell * f(inner), [ell * float(f(1.0)), 0.0]])
    return PwlFunction(x + ell * y, vals)


def insert_target(base: PwlFunction, x: float, ell: float, f: PwlFunction, flat_tol: float = 0.0) -> PwlFunction:
    """Plant ``f`` at ``x``: the result ``r`` has ``T_{x,ell} r = f`` on ``[-1, 1]``.

    ``base`` must be constant on ``[x - 2 ell, x + 2 ell]``.
    """
    if ell <= 0:
        raise InvalidInput("scale must be positive")
    lo, hi = x - 2 * ell, x + 2 * ell
    if lo < base.domain[0] or hi > base.domain[1]:
        raise InvalidInput("planting window leaves the domain")
    inside = base.t[(base.t > lo) & (base.t < hi)]
    probe = np.concatenate([[lo, hi, x], inside])
    vals = base(probe)
    c = float(base(x))
    scale = max(1.0, abs(c))
    if np.max(np.abs(vals - c)) > flat_tol * scale:
        raise InvalidInput("base is not flat on the planting window")
    return _plant_many(base, np.array([x]), np.array([ell]), f)


def _plant_many(base: PwlFunction, xs: np.ndarray, ells: np.ndarray, f: PwlFunction) -> PwlFunction:
    """Add disjointly supported target bumps to a base that is flat on each window (not re-checked)."""
    if len(xs) == 0:
        return base
    inner = f.t[(f.t > -1) & (f.t < 1)]
    y = np.concatenate([[-2.0, -1.0], inner, [1.0, 2.0]])
    fy = np.concatenate([[0.0, float(f(-1.0))], f(inner), [float(f(1.0)), 0.0]])
    bt = (xs[:, None] + ells[:, None] * y[None, :]).ravel()
    bv = (ells[:, None] * fy[None, :]).ravel()
    # knots of the base strictly inside a window are redundant there (it is constant)
    starts = xs - 2 * ells
    ends = xs + 2 * ells
    order = np.argsort(starts)
    starts, ends = starts[order], ends[order]
    k = np.searchsorted(starts, base.t, side="right") - 1
    in_win = (k >= 0) & (base.t > starts[np.maximum(k, 0)]) & (base.t < ends[np.maximum(k, 0)])
    bk = base.t[~in_win]
    t = np.concatenate([bk, bt])
    v = np.concatenate([base(bk), base(bt) + bv])
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]
    # window ends coincide with flat base knots; keep one copy
    keep = np.concatenate([[True], np.diff(t) > 0])
    return PwlFunction(t[keep], v[keep], base.domain)


# ---------------------------------------------------------------------------
# the surgery


@dataclass
class LevelRecord:
    level: int
    U: list
    intervals: int
    centers: int
    alpha: float
    drift: float
    drift_bound: float
    U_length: float
    U_deficit: float
    E_mass: float
    lipschitz_ok: bool
    fallback_cells: int = 0

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SurgeryReport:
    n: int
    eps0: float
    levels: list = field(default_factory=list)
    achieved: float = 0.0
    target: float = 0.0
    drift_total: float = 0.0
    complete: bool = False
    stop_reason: str = ""
    probes: list = field(default_factory=list)

    def to_json(self):
        return {
            "n": self.n,
            "eps0": self.eps0,
            "achieved_E_mass": self.achieved,
            "target_E_mass": self.target,
            "drift_total": self.drift_total,
            "complete": self.complete,
            "stop_reason": self.stop_reason,
            "levels": [l.to_json() for l in self.levels],
        }


def _open_cover_candidates(m: MeasureModel, allowed, max_len: float, deficit: float, max_pieces: int, max_depth: int = 60):
    """Greedy open cover of most of the mass inside ``allowed`` (disjoint open intervals).

    Candidates at depth ``d`` are the half-overlapping windows
    ``(c - w, c + w)``, ``c`` a multiple of ``w = 2^-d`` times the span.
    Windows are refined where they carry mass until the heaviest ones,
    restricted to ``allowed``, leave less than ``deficit`` outside while
    their union has length at most ``max_len``.
    """
    allowed = np.asarray(allowed, dtype=float).reshape(-1, 2)
    span_lo = float(allowed[:, 0].min())
    span = float(allowed[:, 1].max()) - span_lo
    target_mass = float(m.mass_many(allowed[:, :1], allowed[:, 1:], "open").sum())
    centers = np.array([span_lo + span / 2])
    w = span / 2
    for depth in range(1, max_depth + 1):
        w /= 2
        cand = np.unique(np.concatenate([centers - w, centers, centers + w]))
        lo, hi, src = _clip_to_allowed(cand - w, cand + w, allowed)
        mass = m.mass_many(lo[:, None], hi[:, None], "open") if len(lo) else np.zeros(0)
        keep = mass > 0
        lo, hi, mass = lo[keep], hi[keep], mass[keep]
        centers = np.unique(src[keep])
        if len(centers) > max_pieces:
            raise BudgetExhausted(f"open-set selection needs more than {max_pieces} windows", achieved=None)
        ulo, uhi = _merge(lo, hi)
        length = float(np.sum(uhi - ulo))
        covered = float(m.mass_many(ulo[:, None], uhi[:, None], "open").sum()) if len(ulo) else 0.0
        if length <= max_len and target_mass - covered < deficit:
            # drop the lightest windows while the deficit allows, to keep the set small
            order = np.argsort(mass, kind="stable")
            budget = deficit - (target_mass - covered)
            drop = np.zeros(len(mass), dtype=bool)
            acc = 0.0
            for i in order:
                if acc + mass[i] >= budget * 0.5:
                    break
                drop[i] = True
                acc += mass[i]
            ulo2, uhi2 = _merge(lo[~drop], hi[~drop])
            cov2 = float(m.mass_many(ulo2[:, None], uhi2[:, None], "open").sum()) if len(ulo2) else 0.0
            if target_mass - cov2 < deficit:
                ulo, uhi, covered = ulo2, uhi2, cov2
            return ulo, uhi, float(np.sum(uhi - ulo)), target_mass - covered, depth
    raise BudgetExhausted("open-set selection exceeded the depth budget")


def _clip_to_allowed(lo, hi, allowed):
    """Intersect windows with the allowed open pieces; also returns each piece's window center."""
    out_lo, out_hi, src = [], [], []
    mids = (lo + hi) / 2
    for a, b in allowed:
        l = np.maximum(lo, a)
        h = np.minimum(hi, b)
        ok = h > l
        out_lo.append(l[ok])
        out_hi.append(h[ok])
        src.append(mids[ok])
    return np.concatenate(out_lo), np.concatenate(out_hi), np.concatenate(src)


def _merge(lo, hi):
    """Union of open intervals as disjoint open intervals."""
    if len(lo) == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run_hi = np.maximum.accumulate(hi)
    new = np.concatenate([[True], lo[1:] >= run_hi[:-1]])
    starts = np.flatnonzero(new)
    ends = np.concatenate([starts[1:], [len(lo)]]) - 1
    return lo[starts], run_hi[ends]


def _probe_list(xs, ells):
    return [(float(x), [float(l)]) for x, l in zip(xs, ells)]


def _initial_probes(m: MeasureModel, n: int, domain):
    """Evenly spaced probes at scale just below ``1/n`` (detects an already-good start)."""
    rho = (1.0 / n) * (1 - 2.0 ** -10)
    step = rho / (2 * n)  # ball radius with d = 0 and a 1-Lipschitz function
    lo, hi = m.root.lo[0], m.root.hi[0]
    lo = max(lo, domain[0] + rho)
    hi = min(hi, domain[1] - rho)
    if hi < lo:
        return []
    k = int(math.ceil((hi - lo) / step)) + 1
    if k > 200_000:
        return []
    return [(float(x), [rho]) for x in np.linspace(lo, hi, k)]


def prescribe_blowup_1d(m: MeasureModel, f: BlowupTarget, n: int, eps0: float, g0: PwlFunction | None = None,
                        seed: int | None = 0, max_levels: int = 8, max_intervals: int = 400_000,
                        max_windows: int = 200_000, res: int | None = None) -> tuple[PwlFunction, SurgeryReport]:
    """Iterated collapse-and-plant surgery towards ``mu(E^n_h) > (1 - 1/n) mu(R)``.

    Level ``i`` picks an open ``U_i`` inside the annuli ``M_(i-1)`` left by
    the previous level with length at most ``alpha_(i-1) / (16 n)`` and
    ``mu(M_(i-1) \\ U_i) < mu(R) / (n 2^(i+2))``, covers it by intervals with
    heavy centers, collapses ``h`` on them and plants ``f`` at each center
    with ``ell`` a quarter of the interval length.  Stops when the
    certified E-mass exceeds ``1 - 1/n`` or a budget runs out; the report
    says which.
    """
    if m.dim != 1:
        raise InvalidInput("prescribe_blowup_1d needs a one-dimensional measure")
    if n < 2:
        raise InvalidInput("n must be at least 2")
    if not (0 < eps0 < 1):
        raise InvalidInput("eps0 must lie in (0, 1)")
    res = default_res(1) if res is None else res
    total = m.total_mass
    if not total > 0:
        raise InvalidInput("measure has no mass")
    root_lo, root_hi = float(m.root.lo[0]), float(m.root.hi[0])
    width = root_hi - root_lo
    domain = (root_lo - width - 2.0, root_hi + width + 2.0)
    if g0 is None:
        h = PwlFunction.zero(domain)
    else:
        if not g0.is_1_lipschitz():
            raise InvalidInput("starting function must be 1-Lipschitz")
        h = PwlFunction(g0.t, g0.v, (min(domain[0], g0.domain[0]), max(domain[1], g0.domain[1])))
        domain = h.domain
    h0 = h
    target = f.to_grid(res)
    report = SurgeryReport(n=n, eps0=eps0, target=1 - 1 / n)
    probes = _initial_probes(m, n, domain)
    if probes:
        frac, _ = estimate_En_mass(m, h, target, n, probes, lip=1.0)
        if frac > 1 - 1 / n:
            report.achieved = frac
            report.complete = True
            report.stop_reason = "start already satisfies the E-mass target"
            return h, report
    alpha_prev = eps0
    allowed = np.array([[root_lo - 0.5 * width - 1.0, root_hi + 0.5 * width + 1.0]])
    all_x, all_l = [], []
    planted = 0
    for level in range(1, max_levels + 1):
        max_len = alpha_prev / (16 * n)
        deficit = total / (n * 2 ** (level + 2))
        try:
            ulo, uhi, ulen, udef, _ = _open_cover_candidates(m, allowed, max_len, deficit, max_windows)
        except SearchFailure as exc:
            report.stop_reason = f"level {level}: {exc}"
            break
        region = [BoxRegion(np.array([a]), np.array([b])) for a, b in zip(ulo, uhi)]
        try:
            rmax = float(np.max(uhi - ulo)) / 2
            ic = cover_centered_intervals(m, region, rmax, n, mass_tol=deficit / 2, seed=None if seed is None else seed + level,
                                          max_cells=max_intervals)
        except SearchFailure as exc:
            report.stop_reason = f"level {level}: interval cover: {exc}"
            break
        if len(ic) > max_intervals:
            report.stop_reason = f"level {level}: {len(ic)} intervals exceed the budget {max_intervals}"
            break
        lo_i, hi_i = ic.interval_bounds()
        ells = (hi_i - lo_i) / 4
        xs = ic.x
        prev = h
        base = collapse(h, np.column_stack([lo_i, hi_i]))
        h = _plant_many(base, xs, ells, f)
        drift = h.sup_diff(prev)
        alpha = float(ells.min())
        all_x.extend(xs.tolist())
        all_l.extend(ells.tolist())
        planted += len(xs)
        # E-mass from every planted center at its own scale
        frac, _ = estimate_En_mass(m, h, target, n, _probe_list(all_x, all_l), lip=1.0)
        rec = LevelRecord(level, np.column_stack([ulo, uhi]).tolist(), len(ic), len(xs), alpha, drift, alpha_prev / (8 * n),
                          ulen, udef, frac, h.is_1_lipschitz(), ic.fallback_cells)
        report.levels.append(rec)
        report.achieved = frac
        if frac > 1 - 1 / n:
            report.complete = True
            report.stop_reason = "E-mass target reached"
            break
        # annuli I \ I-bar for the next level
        cb = ells / (4 * n)
        ann = np.column_stack([np.concatenate([lo_i, xs + cb]), np.concatenate([xs - cb, hi_i])])
        ann = ann[ann[:, 1] > ann[:, 0]]
        allowed = ann[np.argsort(ann[:, 0])]
        alpha_prev = alpha
    else:
        report.stop_reason = f"level budget {max_levels} exhausted"
    report.drift_total = h.sup_diff(h0)
    report.probes = list(zip(all_x, all_l))
    return h, report
