"""Rescalings, certified sup-distances, and E^n-mass estimates.

The rescaling of ``g`` at ``x`` and scale ``r`` is
``T_{x,r} g (y) = (g(x + r y) - g(x)) / r`` sampled on a uniform grid of
``[-1, 1]^N``.  Every :class:`GridFunction` carries a Lipschitz bound and a
rounding slack so that distances between grid functions come with an
upper certificate for the true sup over the cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linprog

from .errors import InvalidInput
from .measures import MeasureModel, Subspace, box_difference, BoxRegion
from .reports import VerifyReport, csv_text

DEFAULT_RES = {1: 2 ** 9 + 1, 2: 2 ** 6 + 1}
_ULP = np.finfo(float).eps


def default_res(n: int) -> int:
    return DEFAULT_RES.get(n, 2 ** 4 + 1)


def grid_axis(res: int) -> np.ndarray:
    if res < 3 or res % 2 == 0:
        raise InvalidInput("grid resolution must be odd and at least 3 (the origin must be a node)")
    return np.linspace(-1.0, 1.0, res)


def grid_points(n: int, res: int) -> np.ndarray:
    ax = grid_axis(res)
    return np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)


@dataclass
class GridFunction:
    """Samples of a Lipschitz function on the uniform grid of ``[-1, 1]^n``.

    ``lip`` is a certified Lipschitz bound (at least the largest grid
    difference quotient) and ``slack`` bounds the rounding error of each
    stored value.
    """

    n: int
    res: int
    values: np.ndarray
    lip: float
    slack: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape((self.res,) * self.n)
        grid_axis(self.res)
        dq = self.grid_lip()
        if not math.isfinite(self.lip) or self.lip < dq:
            self.lip = dq if not math.isfinite(self.lip) else max(self.lip, dq)

    @property
    def spacing(self) -> float:
        return 2.0 / (self.res - 1)

    @property
    def origin_value(self) -> float:
        return float(self.values[(self.res // 2,) * self.n])

    def grid_lip(self) -> float:
        """Largest difference quotient along grid edges."""
        q = 0.0
        for d in range(self.n):
            if self.res > 1:
                q = max(q, float(np.max(np.abs(np.diff(self.values, axis=d)))) / self.spacing)
        return q

    @classmethod
    def from_callable(cls, fn, n: int, res: int | None = None, lip: float = math.inf, slack: float = 0.0) -> "GridFunction":
        res = default_res(n) if res is None else res
        vals = np.asarray(fn(grid_points(n, res)), dtype=float)
        return cls(n, res, vals, lip, slack)

    def __call__(self, y) -> np.ndarray:
        """Multilinear interpolation (clipped to the cube)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        ax = grid_axis(self.res)
        if self.n == 1:
            return np.interp(np.clip(y[:, 0], -1, 1), ax, self.values)
        interp = RegularGridInterpolator([ax] * self.n, self.values, method="linear")
        return interp(np.clip(y, -1, 1))

    def to_json(self):
        return {"kind": "grid", "n": self.n, "res": self.res, "values": self.values.ravel().tolist(), "lip": self.lip, "slack": self.slack}

    @classmethod
    def from_json(cls, d):
        if d.get("kind") != "grid":
            raise InvalidInput("not a grid function file")
        return cls(int(d["n"]), int(d["res"]), np.asarray(d["values"], dtype=float), float(d["lip"]), float(d.get("slack", 0.0)))


# ---------------------------------------------------------------------------
# evaluation helpers


def _evaluator(g):
    """Return ``(fn, lip, domain)`` for a supported function object."""
    if isinstance(g, GridFunction):
        return g, g.lip, np.array([[-1.0], [1.0]]) * np.ones((2, g.n))
    fn = getattr(g, "eval", None) or g
    lip = getattr(g, "lip", None)
    if callable(lip):
        lip = lip()
    if lip is None and hasattr(g, "lipschitz_bound"):
        lip = g.lipschitz_bound()
    domain = getattr(g, "domain", None)
    if domain is not None:
        domain = np.asarray(domain, dtype=float).reshape(2, -1)
    return fn, (math.inf if lip is None else float(lip)), domain


def _dim_of(g, x):
    return np.atleast_1d(np.asarray(x, dtype=float)).size


def rescale_values(g, xs, r, res: int):
    """``T_{x,r} g`` on the grid for a batch of points ``xs`` (shape ``(P, N)``); returns ``(values, slack)``."""
    fn, lip, domain = _evaluator(g)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    P, n = xs.shape
    r = np.broadcast_to(np.asarray(r, dtype=float), (P,))
    if np.any(r <= 0):
        raise InvalidInput("rescaling radius must be positive")
    if domain is not None:
        tol = 1e-12 * (1 + np.abs(domain).max())
        if np.any(xs - r[:, None] < domain[0] - tol) or np.any(xs + r[:, None] > domain[1] + tol):
            raise InvalidInput("rescaling window leaves the function's domain")
    ys = grid_points(n, res)
    pts = xs[:, None, :] + r[:, None, None] * ys[None, :, :]
    if domain is not None:
        pts = np.clip(pts, domain[0], domain[1])
    flat = np.asarray(fn(pts.reshape(-1, n)), dtype=float).reshape(P, -1)
    base = np.asarray(fn(xs), dtype=float).reshape(P)
    vals = (flat - base[:, None]) / r[:, None]
    origin = (res ** n - 1) // 2
    vals[:, origin] = 0.0
    # rounding: evaluating at x + r y and differencing; a few ulps of the magnitudes involved
    mag = np.maximum(np.abs(flat).max(axis=1), np.abs(base))
    arg = np.abs(pts).reshape(P, -1).max(axis=1)
    lip_f = lip if math.isfinite(lip) else 0.0
    slack = 8 * _ULP * (mag + lip_f * arg) / r
    return vals, slack


def rescale(g, x, r: float, res: int | None = None, lip: float | None = None) -> GridFunction:
    """``T_{x,r} g`` as a :class:`GridFunction` (value 0 at the origin)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    res = default_res(n) if res is None else res
    _, glip, _ = _evaluator(g)
    vals, slack = rescale_values(g, x[None], r, res)
    return GridFunction(n, res, vals[0], glip if lip is None else lip, float(slack[0]))


def rescale_fn(g, x, r: float):
    """``T_{x,r} g`` as a callable on points ``y``."""
    fn, lip, _ = _evaluator(g)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gx = float(np.asarray(fn(x[None]))[0])

    class _R:
        pass

    out = _R()
    out.eval = lambda y: (np.asarray(fn(x + r * np.atleast_2d(y)), dtype=float) - gx) / r
    out.lip = lip
    return out


def _cell_bound(diff: np.ndarray, n: int, L: float, h: float) -> float:
    """Max over grid cells of mean-of-corners + n L h / 2 (sup bound for an L-Lipschitz |diff| on the cell)."""
    a = np.abs(diff)
    for d in range(n):
        a = 0.5 * (np.take(a, np.arange(a.shape[d] - 1), axis=d) + np.take(a, np.arange(1, a.shape[d]), axis=d))
    return float(a.max()) + n * L * h / 2.0


def sup_distance(a: GridFunction, b: GridFunction) -> tuple[float, float]:
    """``(value, error_bound)`` with the true sup of ``|a - b|`` over the cube in ``[value, value + error_bound]``.

    Within a cell the difference is ``(Lip a + Lip b)``-Lipschitz, so its
    sup is at most the average of its corner values plus ``N L h / 2``.
    """
    if a.n != b.n or a.res != b.res:
        raise InvalidInput("sup_distance needs matching grids")
    diff = a.values - b.values
    value = float(np.max(np.abs(diff)))
    L = a.lip + b.lip
    bound = max(value, _cell_bound(diff, a.n, L, a.spacing))
    return value, bound - value + a.slack + b.slack


def sup_distance_batch(vals: np.ndarray, slack: np.ndarray, target: GridFunction, lip: float):
    """Vectorized :func:`sup_distance` for 1-D rescalings stored row-wise."""
    diff = vals - target.values.reshape(1, -1)
    value = np.max(np.abs(diff), axis=1)
    if target.n == 1:
        a = np.abs(diff)
        cell = 0.5 * (a[:, 1:] + a[:, :-1]).max(axis=1) + (lip + target.lip) * target.spacing / 2
    else:
        cell = np.array([_cell_bound(d.reshape((target.res,) * target.n), target.n, lip + target.lip, target.spacing) for d in diff])
    return value, np.maximum(cell, value) - value + slack + target.slack


def scan_blowups(g, x, radii, target: GridFunction) -> list[tuple[float, float, float]]:
    """Certified distance from ``T_{x,r} g`` to ``target`` for each radius (strictly decreasing)."""
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise InvalidInput("radii must be positive and strictly decreasing")
    out = []
    for r in radii:
        t = rescale(g, x, r, res=target.res)
        d, e = sup_distance(t, target)
        out.append((float(r), d, e))
    return out


# ---------------------------------------------------------------------------
# E^n mass


@dataclass
class EnReport:
    bound: float
    total_mass: float
    rows: list = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.bound / self.total_mass if self.total_mass > 0 else 0.0

    def to_csv(self) -> str:
        return csv_text(["probe", "radius", "distance", "bound", "ball_radius", "mass"], self.rows)


def _union_mass_1d(m, lo, hi):
    """Mass of a union of open intervals, rounded down."""
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    mlo, mhi = [], []
    for a, b in zip(lo, hi):
        if mlo and a < mhi[-1]:
            mhi[-1] = max(mhi[-1], b)
        else:
            mlo.append(a)
            mhi.append(b)
    if not mlo:
        return 0.0
    w = m.mass_many(np.array(mlo)[:, None], np.array(mhi)[:, None], "open")
    return max(0.0, float(w.sum()) - len(mlo) * m.query_tol)


def _union_mass_nd(m, centers, halfs):
    """Mass of a union of open cubes, via greedy disjointification and open-mode pieces (rounded down)."""
    pieces: list[BoxRegion] = []
    for c, h in zip(centers, halfs):
        new = [BoxRegion(c - h, c + h)]
        for p in pieces:
            nxt = []
            for q in new:
                nxt.extend(box_difference(q, p))
            new = nxt
        pieces.extend(new)
    if not pieces:
        return 0.0
    lo = np.array([p.lo for p in pieces])
    hi = np.array([p.hi for p in pieces])
    return max(0.0, float(m.mass_many(lo, hi, "open").sum()) - len(pieces) * m.query_tol)


def estimate_En_mass(m: MeasureModel, g, target: GridFunction, n: int, probes, lip: float | None = None,
                     chunk: int = 2048) -> tuple[float, EnReport]:
    """Lower bound on ``mu(E^n_g) / mu(total)`` from probe certificates.

    ``probes`` is a list of ``(point, radii)``.  A probe certifies distance
    ``d < 1/n`` at some ``rho < 1/n``; then the open ball of radius
    ``rho (1/n - d) / (2 Lip g)`` lies in ``E^n_g``.  Balls are merged and
    their union measured with open-interval queries, rounding down.
    """
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    total = m.total_mass
    if not probes:
        return 0.0, EnReport(0.0, total)
    _, glip, _ = _evaluator(g)
    L = glip if lip is None else lip
    if not math.isfinite(L) or L <= 0:
        L = max(L, 1e-300) if math.isfinite(L) else None
    if L is None:
        raise InvalidInput("a finite Lipschitz bound for g is needed")
    dim = m.dim
    flat_x, flat_r, owner = [], [], []
    for k, (pt, radii) in enumerate(probes):
        pt = np.atleast_1d(np.asarray(pt, dtype=float))
        for r in np.atleast_1d(np.asarray(radii, dtype=float)):
            if 0 < r < 1.0 / n:
                flat_x.append(pt)
                flat_r.append(r)
                owner.append(k)
    rows = []
    best_ball = np.zeros(len(probes))
    if flat_x:
        X = np.array(flat_x).reshape(-1, dim)
        R = np.array(flat_r)
        own = np.array(owner)
        for s in range(0, len(X), chunk):
            vals, slack = rescale_values(g, X[s:s + chunk], R[s:s + chunk], target.res)
            d, e = sup_distance_batch(vals, slack, target, L)
            up = d + e
            ball = np.where(up < 1.0 / n, R[s:s + chunk] * (1.0 / n - up) / (2 * L), 0.0)
            for j in range(len(d)):
                k = own[s + j]
                best_ball[k] = max(best_ball[k], ball[j])
                rows.append([int(k), float(R[s + j]), float(d[j]), float(up[j]), float(ball[j])])
    centers = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in probes]).reshape(-1, dim)
    ok = best_ball > 0
    if dim == 1:
        bound = _union_mass_1d(m, centers[ok, 0] - best_ball[ok], centers[ok, 0] + best_ball[ok])
    else:
        # cube inscribed in the Euclidean ball
        half = best_ball[ok] / math.sqrt(dim)
        bound = _union_mass_nd(m, centers[ok], half[:, None] * np.ones((1, dim)))
    for row in rows:
        row.append(float(best_ball[row[0]]))
    rep = EnReport(bound, total, rows)
    return rep.fraction, rep


# ---------------------------------------------------------------------------
# admissible decomposition


@dataclass
class Decomposition:
    L: np.ndarray  # coefficients in the V basis
    m: GridFunction
    residual: float
    error_bound: float
    ls_L: np.ndarray


def admissible_decompose(h: GridFunction, V: Subspace) -> Decomposition:
    """Split ``h(y) ~ L(y_V) + m(y_perp)`` with ``m(y~) = h(0, y~)``.

    ``L`` minimizes the grid sup of ``|h - m - L|`` (a small linear
    program); the least-squares fit along V-lines, averaged over the
    transverse offsets, is kept in ``ls_L`` and used when the program
    fails.  The residual carries a grid certificate.
    """
    if V.dim < 1:
        raise InvalidInput("V must have dimension at least 1")
    if V.ambient != h.n:
        raise InvalidInput("subspace dimension does not match the grid function")
    ys = grid_points(h.n, h.res)
    P = V.projector
    yv = ys @ V.basis.T  # coordinates along V
    yperp = ys - ys @ P
    mvals = h(yperp)
    target = h.values.ravel() - mvals
    ls_L, *_ = np.linalg.lstsq(yv, target, rcond=None)
    k = V.dim
    # minimize t subject to |target - yv L| <= t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A = np.vstack([np.hstack([-yv, -np.ones((len(yv), 1))]), np.hstack([yv, -np.ones((len(yv), 1))])])
    b = np.concatenate([-target, target])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * k + [(0, None)], method="highs")
    Lc = res.x[:k] if res.success else ls_L
    fit = target - yv @ Lc
    residual = float(np.max(np.abs(fit)))
    m_grid = GridFunction(h.n, h.res, mvals, h.lip, h.slack)
    lipL = float(np.linalg.norm(Lc))
    err = max(residual, _cell_bound(fit.reshape((h.res,) * h.n), h.n, 2 * h.lip + lipL, h.spacing)) - residual + 2 * h.slack
    return Decomposition(Lc, m_grid, residual, err, ls_L)


def verify_blowup_claims(g, x, radii, target: GridFunction, tol: float, command="blowup", measure_hash="", seed=None) -> VerifyReport:
    rep = VerifyReport(command, measure_hash, seed)
    rows = scan_blowups(g, x, radii, target)
    for r, d, e in rows:
        rep.claim(f"distance_r{r:.6g}", tol, d + e, "grid+lipschitz")
    rep.extra["scan"] = [list(r) for r in rows]
    return rep
