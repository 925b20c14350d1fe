"""Blueprint blocks glued over good rectangles.

The blueprint ``F(y, y~) = phi(|y|) psi(|y~|) h(J y~)`` is flat in the
long directions ``y`` (a plane of dimension ``N0``) and copies a transverse
target ``h`` near ``y~ = 0``.  :func:`tile_rectangles` places scaled
copies ``sigma r_i F((y - y_i)/r_i, (y~ - y~_i)/(sigma r_i))`` on disjoint
good rectangles; since each block vanishes on the boundary of its own
rectangle, the glued function is their plain sum.

``|y|`` is the sup norm on the plane, so the flat region of ``phi`` is the
cube ``[-(L^2/2 - L/4), L^2/2 - L/4]^N0``; ``|y~|`` is Euclidean, matching
the ball retraction ``J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blowup import GridFunction, default_res, grid_points, rescale_values, sup_distance_batch
from .covering import RectCover, cover_good_rectangles, default_region
from .errors import InvalidInput
from .measures import MeasureModel, Subspace
from .oned import PwlFunction
from .reports import VerifyReport


def cutoff_phi(t, L: float):
    """1 up to ``L^2/2 - L/4``, then slope ``-4/L`` down to 0 at ``L^2/2``."""
    if L < 8:
        raise InvalidInput("L must be at least 8")
    a = np.abs(np.asarray(t, dtype=float))
    return np.clip(1.0 - (4.0 / L) * (a - L * L / 2 + L / 4), 0.0, 1.0)


def cutoff_psi(t):
    """1 on ``[0, 1]``, ``2 - |t|`` on ``(1, 2]``, 0 beyond."""
    a = np.abs(np.asarray(t, dtype=float))
    return np.clip(2.0 - a, 0.0, 1.0)


def retract(y):
    """Nearest-point retraction of ``R^k`` onto the closed unit ball."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    nrm = np.linalg.norm(y, axis=1)
    return y / np.maximum(nrm, 1.0)[:, None]


class TransverseTarget:
    """A 1-Lipschitz ``h`` on the transverse space with ``h(0) = 0``, read through ``J``.

    Codimension 1 uses a :class:`PwlFunction` on ``[-1, 1]``; higher
    codimension a :class:`GridFunction` on ``[-1, 1]^k``.
    """

    def __init__(self, fn, codim: int):
        self.codim = int(codim)
        self.fn = fn
        if isinstance(fn, PwlFunction):
            if self.codim != 1:
                raise InvalidInput("a piecewise linear target needs codimension 1")
            if fn.domain[0] > -1 or fn.domain[1] < 1:
                raise InvalidInput("target must be defined on [-1, 1]")
            if not fn.is_1_lipschitz():
                raise InvalidInput(f"target Lipschitz bound {fn.lip:.6g} exceeds 1")
            self.lip = min(fn.lip, 1.0)
            zero = float(fn(0.0))
        elif isinstance(fn, GridFunction):
            if fn.n != self.codim:
                raise InvalidInput("grid target dimension must equal the codimension")
            self.lip = fn.lip + 2 * fn.slack / fn.spacing
            zero = fn.origin_value
        else:
            raise InvalidInput("target must be a PwlFunction or GridFunction")
        if abs(zero) > 0:
            raise InvalidInput("target must vanish at the origin")
        if self.lip > 1 + 1e-12:
            raise InvalidInput(f"target Lipschitz bound {self.lip:.6g} exceeds 1")

    def __call__(self, yt):
        z = retract(yt)
        if self.codim == 1:
            return self.fn(z[:, 0])
        return self.fn(z)

    def is_zero(self) -> bool:
        if isinstance(self.fn, PwlFunction):
            return bool(np.all(self.fn.v == 0))
        return bool(np.all(self.fn.values == 0))

    def grid(self, n_total: int, long_mask: np.ndarray, res: int) -> GridFunction:
        """``y -> h(y~)`` on the full grid of ``[-1, 1]^N``."""
        pts = grid_points(n_total, res)
        return GridFunction(n_total, res, self(pts[:, ~long_mask]), 1.0)

    def to_json(self):
        return self.fn.to_json()

    @classmethod
    def from_json(cls, d):
        if d.get("kind") == "pwl":
            return cls(PwlFunction.from_json(d), 1)
        g = GridFunction.from_json(d)
        return cls(g, g.n)


def blueprint_eval(y, ytilde, h: TransverseTarget, L: float) -> np.ndarray:
    """``F(y, y~) = phi(|y|_inf) psi(|y~|) h(J y~)`` for rows of ``y`` and ``y~``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    yt = np.atleast_2d(np.asarray(ytilde, dtype=float))
    phi = cutoff_phi(np.max(np.abs(y), axis=1), L)
    psi = cutoff_psi(np.linalg.norm(yt, axis=1))
    out = phi * psi
    nz = out != 0
    vals = np.zeros(len(out))
    if nz.any():
        vals[nz] = out[nz] * h(yt[nz])
    return vals


def blueprint_boundary_distance(y, ytilde, L: float) -> np.ndarray:
    """Euclidean distance to the boundary of ``[-L^2/2, L^2/2]^N0 x [-2, 2]^k`` (0 outside)."""
    y = np.atleast_2d(y)
    yt = np.atleast_2d(ytilde)
    d = np.minimum(np.min(L * L / 2 - np.abs(y), axis=1), np.min(2.0 - np.abs(yt), axis=1))
    return np.maximum(d, 0.0)


@dataclass
class TileParams:
    L: float
    sigma: float
    N0: int
    eps_s: float
    eps_m: float
    r0: float
    plane: Subspace | None = None

    def __post_init__(self):
        if self.L < 8:
            raise InvalidInput("L must be at least 8")
        if not (0 < self.sigma < 0.5):
            raise InvalidInput("sigma must lie in (0, 1/2)")
        if not (0 < self.eps_s < 0.5 and 0 < self.eps_m < 0.5):
            raise InvalidInput("eps_s and eps_m must lie in (0, 1/2)")
        if self.r0 <= 0:
            raise InvalidInput("r0 must be positive")
        if self.N0 < 1:
            raise InvalidInput("N0 must be positive")
        if 4.0 / self.L > self.eps_s:
            raise InvalidInput("need 4/L <= eps_s")

    @property
    def lipschitz(self) -> float:
        return 4.0 / self.L + math.sqrt(2.0)


class TileSum:
    """The glued function ``f = sum_i F_i`` over disjoint rectangles."""

    def __init__(self, centers, radii, L, sigma, axes, dim, h: TransverseTarget, h_ref: str | None = None):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float)).reshape(-1, dim)
        self.radii = np.asarray(radii, dtype=float).ravel()
        self.L = float(L)
        self.sigma = float(sigma)
        self.axes = sorted(int(a) for a in axes)
        self.dim = int(dim)
        self.h = h
        self.h_ref = h_ref
        self.long = np.zeros(self.dim, dtype=bool)
        self.long[self.axes] = True
        self.half = np.where(self.long[None, :], self.L ** 2 * self.radii[:, None] / 2, 2.0 * self.sigma * self.radii[:, None])
        order = np.argsort(self.centers[:, 0] - self.half[:, 0], kind="stable") if len(self.radii) else np.zeros(0, int)
        self._order = order
        self._starts = (self.centers[:, 0] - self.half[:, 0])[order] if len(self.radii) else np.zeros(0)
        self._maxw = float(np.max(2 * self.half[:, 0])) if len(self.radii) else 0.0

    @property
    def lip(self) -> float:
        return 4.0 / self.L + math.sqrt(2.0)

    def __len__(self):
        return len(self.radii)

    def block(self, i: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, r = self.centers[i], self.radii[i]
        y = (x[:, self.long] - c[self.long]) / r
        yt = (x[:, ~self.long] - c[~self.long]) / (self.sigma * r)
        return self.sigma * r * blueprint_eval(y, yt, self.h, self.L)

    def eval(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        if len(self.radii) == 0:
            return out
        # candidate blocks by sweep on axis 0: starts within [x - maxw, x]
        lo_idx = np.searchsorted(self._starts, x[:, 0] - self._maxw, side="left")
        hi_idx = np.searchsorted(self._starts, x[:, 0], side="right")
        span = hi_idx - lo_idx
        for k in range(int(span.max(initial=0))):
            sel = np.flatnonzero(span > k)
            blk = self._order[lo_idx[sel] + k]
            c = self.centers[blk]
            hw = self.half[blk]
            inside = np.all(np.abs(x[sel] - c) <= hw, axis=1)
            if not inside.any():
                continue
            pts = sel[inside]
            b = blk[inside]
            r = self.radii[b][:, None]
            y = (x[pts][:, self.long] - c[inside][:, self.long]) / r
            yt = (x[pts][:, ~self.long] - c[inside][:, ~self.long]) / (self.sigma * r)
            out[pts] += self.sigma * self.radii[b] * blueprint_eval(y, yt, self.h, self.L)
        return out

    def __call__(self, x):
        return self.eval(x)

    def to_json(self):
        plane = np.eye(self.dim)[self.axes].tolist()
        return {
            "kind": "tile_sum",
            "dim": self.dim,
            "plane": plane,
            "h_ref": self.h_ref,
            "blocks": [{"center": c.tolist(), "r": float(r), "sigma": self.sigma, "L": self.L, "h_ref": self.h_ref}
                       for c, r in zip(self.centers, self.radii)],
        }

    @classmethod
    def from_json(cls, d, h: TransverseTarget):
        plane = np.asarray(d["plane"], dtype=float)
        axes = Subspace(plane, int(d["dim"])).coordinate_axes()
        if axes is None:
            raise InvalidInput("tile plane must be coordinate-aligned")
        blocks = d["blocks"]
        if blocks:
            L, sigma = blocks[0]["L"], blocks[0]["sigma"]
        else:
            L, sigma = 8.0, 0.25
        return cls([b["center"] for b in blocks], [b["r"] for b in blocks], L, sigma, axes, int(d["dim"]), h, d.get("h_ref"))


@dataclass
class TileResult:
    f: TileSum
    cover: RectCover
    report: VerifyReport
    core_rows: list = field(default_factory=list)


def _plane_axes(m: MeasureModel, p: TileParams):
    bundle = m.bundle
    if bundle is None or bundle.dim == 0 or bundle.dim == m.dim:
        raise InvalidInput("the measure must declare a proper decomposability bundle")
    axes = bundle.coordinate_axes()
    if axes is None:
        raise InvalidInput("only coordinate-aligned bundles are supported")
    if bundle.dim != p.N0:
        raise InvalidInput(f"bundle dimension {bundle.dim} does not match N0 = {p.N0}")
    if p.plane is not None:
        if p.plane.coordinate_axes() != axes:
            raise InvalidInput("requested plane differs from the measure's bundle")
    return axes


def core_distances(f: TileSum, h: TransverseTarget, blocks, offsets, res: int | None = None):
    """Certified ``sup |T_{x, sigma r_i} f - h|`` at ``x = center_i + offsets`` (offsets in units of ``r_i``).

    Returns rows ``(block, x..., value, bound)``.
    """
    n = f.dim
    res = default_res(n) if res is None else res
    tgt = h.grid(n, f.long, res)
    xs = f.centers[blocks] + offsets * f.radii[blocks][:, None]
    rad = f.sigma * f.radii[blocks]
    vals, slack = rescale_values(f, xs, rad, res)
    d, e = sup_distance_batch(vals, slack, tgt, f.lip)
    return xs, d, e


def tile_rectangles(m: MeasureModel, K, h: TransverseTarget, p: TileParams, seed: int | None = 0, h_ref: str | None = None,
                    core_samples: int = 200, center_samples: int = 50, res: int | None = None, cover_kw=None) -> TileResult:
    """Glue blueprint blocks over good rectangles covering most of ``K``.

    Checks recorded in the report: the Lipschitz bound of the glued
    function, ``||f||_inf <= eps_s / 2``, the uncovered mass of ``K``,
    exact rescaling on core center lines, and the observed
    distance-over-sigma ratio at random core points.
    """
    axes = _plane_axes(m, p)
    n = m.dim
    if h.codim != n - p.N0:
        raise InvalidInput("target codimension does not match N - N0")
    K = [default_region(m)] if K is None else K
    r0 = min(p.r0, p.eps_s / 2)
    cover = cover_good_rectangles(m, K, p.L, p.sigma, p.N0, r0, tol=p.eps_m / 2, seed=seed, axes=axes, **(cover_kw or {}))
    f = TileSum(cover.centers, cover.radii, p.L, p.sigma, axes, n, h, h_ref)
    rep = VerifyReport("tile", m.spec_hash(), seed, extra={"L": p.L, "sigma": p.sigma, "N0": p.N0, "rects": len(cover)})
    rep.claim("uncovered_K_mass", p.eps_m / 2 * cover.region_mass, cover.uncovered_mass, "exact")
    rep.claim("sup_f", p.eps_s / 2, float(p.sigma * np.max(cover.radii, initial=0.0)), "a-priori")
    rep.claim("lipschitz", p.lipschitz, p.lipschitz, "a-priori")
    rows = []
    if len(cover):
        rng = np.random.default_rng(seed)
        long = f.long
        core_long = p.L ** 2 / 2 - p.L / 2 - p.sigma  # keep the rescaling window inside the flat part
        # core center lines
        bi = rng.integers(0, len(cover), center_samples)
        off = np.zeros((center_samples, n))
        off[:, long] = rng.uniform(-core_long, core_long, (center_samples, long.sum()))
        xs, d, e = core_distances(f, h, bi, off, res)
        rep.claim("center_line_distance", 1e-12, float(d.max()), "grid+lipschitz", note="grid value; certificate in extra")
        rep.extra["center_line_bound"] = float((d + e).max())
        # random core points
        bi = rng.integers(0, len(cover), core_samples)
        off = np.zeros((core_samples, n))
        off[:, long] = rng.uniform(-core_long, core_long, (core_samples, long.sum()))
        off[:, ~long] = rng.uniform(-2 * p.sigma, 2 * p.sigma, (core_samples, (~long).sum()))
        xs, d, e = core_distances(f, h, bi, off, res)
        ratio = float(d.max()) / p.sigma
        rep.extra["core_distance_max"] = float(d.max())
        rep.extra["core_distance_bound_max"] = float((d + e).max())
        rep.extra["core_ratio"] = ratio
        rep.extra["core_ratio_samples"] = core_samples
        rows = [[int(b)] + list(map(float, x)) + [float(v), float(v + w)] for b, x, v, w in zip(bi, xs, d, e)]
    return TileResult(f, cover, rep, rows)
