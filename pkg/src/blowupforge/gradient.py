"""Prescribing gradients off a small exceptional set.

:func:`lusin_step` builds ``g = sum_i phi_i(x) <a_i, x - x_i>`` over a good
cube cover, with ``a_i`` the mu-average of the field on the cube, so that
``Dg = a_i`` on each inner box.  :func:`lusin_iterate` repeats the step on
the inner boxes with the residual field and geometric schedules, which is
how ``Dg = f`` is reached on a set of nearly full measure.

Norms of vectors are Euclidean throughout.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import kernels
from .covering import cover_good_cubes, default_region, _region_arrays
from .errors import InvalidInput
from .measures import BoxRegion, MeasureModel, dyadic_partition
from .reports import VerifyReport

PROFILE = "smoothstep3"
PROFILE_SLOPE = 1.5  # max of d/ds [s^2 (3 - 2s)]


# ---------------------------------------------------------------------------
# vector fields

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan, "sinh": np.sinh, "cosh": np.cosh,
    "minimum": np.minimum, "maximum": np.maximum, "sign": np.sign, "floor": np.floor,
}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_CONSTS = {"pi": math.pi, "e": math.e}


def _compile_expr(src: str, dim: int):
    """Compile an arithmetic expression over ``x0..x{N-1}`` (``x, y, z`` alias the first three)."""
    try:
        tree = ast.parse(src, mode="eval").body
    except SyntaxError as exc:
        raise InvalidInput(f"bad expression {src!r}: {exc}") from None
    aliases = {"x": 0, "y": 1, "z": 2}

    def build(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda X: np.full(X.shape[0], v)
        if isinstance(node, ast.Name):
            name = node.id
            if name in _CONSTS:
                v = _CONSTS[name]
                return lambda X: np.full(X.shape[0], v)
            idx = aliases.get(name)
            if idx is None and name.startswith("x") and name[1:].isdigit():
                idx = int(name[1:])
            if idx is None or idx >= dim:
                raise InvalidInput(f"unknown variable {name!r} in expression")
            return lambda X, i=idx: X[:, i]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda X: op(a(X), b(X))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            op, a = _UNOPS[type(node.op)], build(node.operand)
            return lambda X: op(a(X))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            fn = _FUNCS[node.func.id]
            args = [build(a) for a in node.args]
            return lambda X: fn(*[a(X) for a in args])
        raise InvalidInput(f"unsupported syntax in expression {src!r}")

    return build(tree)


class VectorField:
    """A field ``R^N -> R^N``: constant, expression, or grid-sampled.

    ``bound`` is a known sup of ``|f|`` (``None`` if unknown) and ``lip`` a
    Lipschitz constant (``None`` if unknown).  Grid fields derive both from
    their samples.
    """

    def __init__(self, kind, dim, *, value=None, exprs=None, lo=None, hi=None, values=None, bound=None, lip=None):
        self.kind = kind
        self.dim = int(dim)
        self.bound = None if bound is None else float(bound)
        self.lip = None if lip is None else float(lip)
        if kind == "constant":
            self.value = np.asarray(value, dtype=float).reshape(self.dim)
            self.bound = float(np.linalg.norm(self.value))
            self.lip = 0.0
        elif kind == "expr":
            if len(exprs) != self.dim:
                raise InvalidInput("need one expression per output coordinate")
            self.exprs = list(exprs)
            self._fns = [_compile_expr(e, self.dim) for e in self.exprs]
        elif kind == "grid":
            self.lo = np.asarray(lo, dtype=float).reshape(self.dim)
            self.hi = np.asarray(hi, dtype=float).reshape(self.dim)
            self.values = np.asarray(values, dtype=float)
            if self.values.ndim != self.dim + 1 or self.values.shape[-1] != self.dim:
                raise InvalidInput("grid values must have shape (res_1, ..., res_N, N)")
            axes = [np.linspace(self.lo[d], self.hi[d], self.values.shape[d]) for d in range(self.dim)]
            self._interp = RegularGridInterpolator(axes, self.values, method="linear", bounds_error=False, fill_value=None)
            self.bound = float(np.max(np.linalg.norm(self.values.reshape(-1, self.dim), axis=1)))
            slopes = []
            for d in range(self.dim):
                h = (self.hi[d] - self.lo[d]) / (self.values.shape[d] - 1)
                diff = np.abs(np.diff(self.values, axis=d)) / h
                slopes.append(diff.reshape(-1, self.dim).max(axis=0))
            self.lip = float(np.sqrt(np.sum(np.array(slopes) ** 2)))
        else:
            raise InvalidInput(f"unknown field kind {kind!r}")

    @classmethod
    def constant(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls("constant", value.size, value=value)

    @classmethod
    def expression(cls, exprs, bound=None, lip=None):
        return cls("expr", len(exprs), exprs=exprs, bound=bound, lip=lip)

    @classmethod
    def grid(cls, lo, hi, values):
        return cls("grid", len(np.atleast_1d(lo)), lo=lo, hi=hi, values=values)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise InvalidInput("point dimension does not match the field")
        if self.kind == "constant":
            return np.broadcast_to(self.value, x.shape).copy()
        if self.kind == "expr":
            with np.errstate(all="ignore"):
                return np.stack([fn(x) for fn in self._fns], axis=1)
        return self._interp(np.clip(x, self.lo, self.hi))

    def sampled_sup(self, region, seed=0, n=4096) -> float:
        rlo, rhi = _region_arrays(region)
        rng = np.random.default_rng(seed)
        pick = rng.integers(0, len(rlo), n)
        pts = rng.uniform(rlo[pick], rhi[pick])
        return float(np.max(np.linalg.norm(self(pts), axis=1)))

    def sampled_lip(self, region, seed=0, n=4096, scale=1e-3) -> float:
        """Heuristic Lipschitz estimate from nearby random pairs."""
        rlo, rhi = _region_arrays(region)
        rng = np.random.default_rng(seed)
        pick = rng.integers(0, len(rlo), n)
        a = rng.uniform(rlo[pick], rhi[pick])
        step = scale * (rhi[pick] - rlo[pick]) * rng.uniform(-1, 1, a.shape)
        b = np.clip(a + step, rlo[pick], rhi[pick])
        d = np.linalg.norm(a - b, axis=1)
        ok = d > 0
        q = np.linalg.norm(self(a[ok]) - self(b[ok]), axis=1) / d[ok]
        return float(np.max(q)) if q.size else 0.0

    def truncate(self, r: float) -> "VectorField":
        return TruncatedField(self, r)

    def to_json(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "constant":
            out["value"] = self.value.tolist()
        elif self.kind == "expr":
            out["exprs"] = self.exprs
            if self.bound is not None:
                out["bound"] = self.bound
            if self.lip is not None:
                out["lip"] = self.lip
        else:
            out.update(lo=self.lo.tolist(), hi=self.hi.tolist(), values=self.values.tolist())
        return out

    @classmethod
    def from_json(cls, d):
        kind = d.get("kind")
        if kind == "truncated":
            return TruncatedField(cls.from_json(d["field"]), d["r"])
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "expr":
            return cls.expression(d["exprs"], bound=d.get("bound"), lip=d.get("lip"))
        if kind == "grid":
            return cls.grid(d["lo"], d["hi"], d["values"])
        raise InvalidInput(f"unknown field kind {kind!r}")


class TruncatedField(VectorField):
    """Radial clamp ``f`` where ``|f| <= r``, ``r f / |f|`` elsewhere."""

    def __init__(self, base: VectorField, r: float):
        if not r > 0:
            raise InvalidInput("truncation level must be positive")
        self.base = base
        self.r = float(r)
        self.kind = "truncated"
        self.dim = base.dim
        self.bound = min(self.r, base.bound) if base.bound is not None else self.r
        # the radial clamp is 1-Lipschitz, so composing keeps Lip(f)
        self.lip = base.lip

    def __call__(self, x):
        v = self.base(x)
        norm = np.linalg.norm(v, axis=1)
        bad = ~np.isfinite(norm)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(norm > self.r, self.r / np.where(norm > 0, norm, 1.0), 1.0)
        out = v * scale[:, None]
        if bad.any():
            out[bad] = 0.0
        return out

    def to_json(self):
        return {"kind": "truncated", "r": self.r, "field": self.base.to_json()}


def truncate_field(f: VectorField, m: MeasureModel, r: float) -> VectorField:
    """Clamp ``f`` radially at level ``r`` (identity when ``r >= sup |f|``).

    The caller picks ``r`` so that ``mu(|f| > r)`` is small; see
    :func:`truncation_level`.
    """
    if f.bound is not None and r >= f.bound:
        return f
    return TruncatedField(f, r)


def truncation_level(f: VectorField, m: MeasureModel, alpha: float, seed=0, n=20000) -> tuple[float, float]:
    """Sampled ``r`` with estimated ``mu(|f| > r) / mu(Omega) <= alpha``; returns ``(r, estimate)``."""
    rng = np.random.default_rng(seed)
    pts = m.sample(rng, n)
    norms = np.linalg.norm(f(pts), axis=1)
    norms = np.where(np.isfinite(norms), norms, np.inf)
    r = float(np.quantile(norms[np.isfinite(norms)], 1 - alpha)) if np.isfinite(norms).any() else 1.0
    r = max(r, 1e-300)
    return r, float(np.mean(norms > r))


# ---------------------------------------------------------------------------
# bump sums


@dataclass
class BumpSum:
    """``g(x) = sum_i phi_i(x) <a_i, x - c_i>`` with product smoothstep cutoffs."""

    centers: np.ndarray
    radii: np.ndarray
    eps: np.ndarray
    coef: np.ndarray
    parents: np.ndarray = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        n = self.centers.shape[1] if self.centers.size else self.coef_dim()
        self.centers = self.centers.reshape(-1, n)
        self.radii = np.asarray(self.radii, dtype=float).ravel()
        self.eps = np.broadcast_to(np.asarray(self.eps, dtype=float), self.radii.shape).copy()
        self.coef = np.asarray(self.coef, dtype=float).reshape(-1, n)
        if self.parents is None:
            self.parents = np.full(len(self.radii), -1, dtype=np.int64)
        if not (len(self.centers) == len(self.radii) == len(self.coef)):
            raise InvalidInput("bump sum arrays disagree in length")

    def coef_dim(self):
        return np.asarray(self.coef).shape[-1] if np.asarray(self.coef).ndim == 2 else 1

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return len(self.radii)

    def eval_grad(self, x):
        return kernels.bump_eval(x, self.centers, self.radii, self.eps, self.coef)

    def eval(self, x):
        return self.eval_grad(x)[0]

    def grad(self, x):
        return self.eval_grad(x)[1]

    def term_sup_bounds(self):
        """Per-term ``sup |g_i| <= |a_i| sqrt(N) r_i``."""
        return np.linalg.norm(self.coef, axis=1) * math.sqrt(self.dim) * self.radii

    def term_grad_bounds(self):
        """Per-term ``sup |D g_i| <= |a_i| (1 + 1.5 N / eps_i)`` (profile slope 3/2 per coordinate)."""
        return np.linalg.norm(self.coef, axis=1) * (1.0 + PROFILE_SLOPE * self.dim / self.eps)

    def terms_json(self):
        return [
            {"center": c.tolist(), "r": float(r), "eps": float(e), "a": a.tolist(), "profile": PROFILE}
            for c, r, e, a in zip(self.centers, self.radii, self.eps, self.coef)
        ]


class LayeredBumpSum:
    """Pointwise sum of bump-sum layers."""

    def __init__(self, layers, dim=None):
        self.layers = list(layers)
        if dim is None:
            dim = self.layers[0].dim if self.layers else 1
        self._dim = dim
        self._flat = None

    @property
    def dim(self):
        return self._dim

    def _flatten(self):
        if self._flat is None:
            nz = [l for l in self.layers if len(l)]
            if nz:
                self._flat = (np.vstack([l.centers for l in nz]), np.concatenate([l.radii for l in nz]),
                              np.concatenate([l.eps for l in nz]), np.vstack([l.coef for l in nz]))
            else:
                self._flat = (np.zeros((0, self.dim)), np.zeros(0), np.zeros(0), np.zeros((0, self.dim)))
        return self._flat

    def eval_grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, r, e, a = self._flatten()
        if len(r) == 0:
            return np.zeros(len(x)), np.zeros_like(x)
        return kernels.bump_eval(x, c, r, e, a)

    def eval(self, x):
        return self.eval_grad(x)[0]

    def grad(self, x):
        return self.eval_grad(x)[1]

    def __call__(self, x):
        return self.eval(x)

    def sup_bound(self) -> float:
        return float(sum(np.max(l.term_sup_bounds(), initial=0.0) for l in self.layers))

    def lipschitz_bound(self) -> float:
        return float(sum(np.max(l.term_grad_bounds(), initial=0.0) for l in self.layers))

    def to_json(self):
        return {"kind": "bump_sum", "dim": self.dim, "layers": [l.terms_json() for l in self.layers]}

    @classmethod
    def from_json(cls, d):
        if d.get("kind") != "bump_sum":
            raise InvalidInput("not a bump_sum function file")
        layers = []
        dim = d.get("dim")
        for terms in d["layers"]:
            for t in terms:
                if t.get("profile", PROFILE) != PROFILE:
                    raise InvalidInput(f"unknown cutoff profile {t.get('profile')!r}")
            if terms:
                dim = len(terms[0]["center"])
                layers.append(BumpSum([t["center"] for t in terms], [t["r"] for t in terms],
                                      [t["eps"] for t in terms], [t["a"] for t in terms]))
            else:
                layers.append(BumpSum(np.zeros((0, dim or 1)), [], [], np.zeros((0, dim or 1))))
        return cls(layers, dim=dim)


# ---------------------------------------------------------------------------
# constructions


def lp_constant(dim: int, p: float) -> float:
    """Constant ``C_N(p)`` with ``||Dg||_p <= C_N(p) xi^(1/p-1) ||f chi||_p`` for one step."""
    frame = 16 * dim * 2 ** dim
    slope = 2.5 * dim  # 1 + 1.5 N / eps <= 2.5 N / eps
    scale = 48 * dim * 2 ** dim
    if math.isinf(p):
        return slope * scale
    return (1 + frame * slope ** p) ** (1 / p) * scale ** (1 - 1 / p)


def iterate_constant(dim: int, p: float) -> float:
    """Constant for the layered construction: first layer plus a geometric tail."""
    return 5.0 * lp_constant(dim, p)


def _cell_averages(m, field_fn, centers, radii, depth):
    """mu-weighted midpoint averages of the field on each cube (a convex combination of its values)."""
    n = centers.shape[1]
    k = 2 ** depth
    idx = np.array(np.meshgrid(*([np.arange(k)] * n), indexing="ij")).reshape(n, -1).T
    out = np.zeros((len(centers), n))
    mass = np.zeros(len(centers))
    chunk = max(1, 200_000 // len(idx))
    for s in range(0, len(centers), chunk):
        c = centers[s:s + chunk]
        r = radii[s:s + chunk]
        w = (2 * r / k)[:, None, None]
        lo = (c - r[:, None])[:, None, :] + idx[None, :, :] * w
        hi = lo + w
        flat_lo = lo.reshape(-1, n)
        flat_hi = hi.reshape(-1, n)
        wt = m.mass_many(flat_lo, flat_hi, "charge").reshape(len(c), -1)
        keep = wt.reshape(-1) > 0
        vals = np.zeros((flat_lo.shape[0], n))
        if keep.any():
            vals[keep] = field_fn(0.5 * (flat_lo[keep] + flat_hi[keep]), np.repeat(np.arange(s, s + len(c)), len(idx))[keep])
        vals = vals.reshape(len(c), -1, n)
        tot = wt.sum(axis=1)
        avg = np.einsum("ck,ckn->cn", wt, vals)
        empty = tot <= 0
        if empty.any():
            # all mass sits on lower faces the charge rule skipped; the center value is still a value in the cube
            avg[empty] = field_fn(c[empty], np.arange(s, s + len(c))[empty])
            tot = np.where(empty, 1.0, tot)
        out[s:s + len(c)] = avg / tot[:, None]
        mass[s:s + len(c)] = wt.sum(axis=1)
    return out


@dataclass
class StepResult:
    g: BumpSum
    cells: np.ndarray  # (M, N) centers
    radii: np.ndarray
    eps: float
    r0: float
    delta: float
    cube_masses: np.ndarray
    inner_masses: np.ndarray
    frame_masses: np.ndarray
    region_mass: float
    uncovered_mass: float
    residual_bounds: np.ndarray  # certified sup |f - a_i| over each cube
    owner: np.ndarray = None  # region box index holding each cell

    @property
    def K(self) -> list[BoxRegion]:
        return [BoxRegion.cube(c, (1 - self.eps) * r) for c, r in zip(self.cells, self.radii)]

    @property
    def exceptional_mass(self) -> float:
        return max(0.0, self.region_mass - float(self.inner_masses.sum()))


def _owner_of(cells, rlo, rhi):
    out = np.full(len(cells), -1, dtype=np.int64)
    for b in range(len(rlo)):
        hit = np.all((cells >= rlo[b]) & (cells <= rhi[b]), axis=1) & (out < 0)
        out[hit] = b
    return out


def lusin_step(m: MeasureModel, f, xi: float, eta: float, zeta: float, region=None, seed: int | None = 0,
               lip: float | None = None, bound: float | None = None, offsets=None, quad_depth: int = 3,
               r_cap: float | None = None, cover_kw=None) -> tuple[BumpSum, list, VerifyReport, StepResult]:
    """One construction step on ``region`` (default: the padded root box).

    ``f`` is a :class:`VectorField`.  ``offsets`` optionally gives one vector
    per region box that is subtracted from ``f`` there (the residual field
    of an iteration).  Returns ``(g, K, report, details)``.
    """
    if not all(0 < v < 1 for v in (xi, eta, zeta)):
        raise InvalidInput("xi, eta, zeta must lie in (0, 1)")
    region = [default_region(m)] if region is None else region
    rlo, rhi = _region_arrays(region)
    n = m.dim
    if f.dim != n:
        raise InvalidInput("field dimension does not match the measure")
    offsets = np.zeros((len(rlo), n)) if offsets is None else np.asarray(offsets, dtype=float).reshape(len(rlo), n)
    L = f.lip if lip is None else lip
    heuristic = False
    if L is None:
        L = 2.0 * f.sampled_lip(region, seed=seed)
        heuristic = True
    if bound is None:
        base = f.bound
        if base is None:
            base = f.sampled_sup(region, seed=seed)
            heuristic = True
        if not math.isfinite(base):
            raise InvalidInput("field is unbounded on the region; truncate it first")
        bound = base + float(np.max(np.linalg.norm(offsets, axis=1), initial=0.0))
    delta = eta / L if L > 0 else math.inf
    r0 = min(delta / (2 * n), zeta / (n * bound) if bound > 0 else math.inf)
    span = float(np.max(rhi - rlo)) / 2
    r0 = min(r0, span if r_cap is None else min(span, r_cap))
    eps = xi / (48 * n * 2 ** n)
    total = float(m.mass_many(rlo, rhi, "charge").sum())
    cover = cover_good_cubes(m, list(region) if not isinstance(region, BoxRegion) else region, eps, r0,
                             mass_tol=xi * total / 3, seed=seed, **(cover_kw or {}))
    cells, radii = cover.centers, cover.radii
    owner = _owner_of(cells, rlo, rhi)

    def field_fn(pts, cell_idx):
        return f(pts) - offsets[owner[cell_idx]]

    if len(cells):
        a = _cell_averages(m, field_fn, cells, radii, quad_depth if f.kind != "constant" else 0)
        if f.kind == "constant" and not np.any(offsets):
            a = np.broadcast_to(f.value, a.shape).copy()
        inner = m.mass_many(cells - ((1 - eps) * radii)[:, None], cells + ((1 - eps) * radii)[:, None], "closed")
    else:
        a = np.zeros((0, n))
        inner = np.zeros(0)
    g = BumpSum(cells, radii, np.full(len(radii), eps), a, parents=owner)
    residual_bounds = L * 2 * math.sqrt(n) * radii if L > 0 else np.zeros(len(radii))
    details = StepResult(g, cells, radii, eps, r0, delta, cover.masses, inner, cover.frame_masses, total,
                         cover.uncovered_mass, residual_bounds, owner)
    report = VerifyReport("lusin_step", m.spec_hash(), seed, extra={"r0": r0, "eps_frame": eps, "cells": len(radii), "heuristic_modulus": heuristic})
    report.claim("exceptional_mass", xi * total, details.exceptional_mass, "exact", holds=details.exceptional_mass < xi * total + len(radii) * m.query_tol)
    report.claim("sup_g_bound", zeta, float(np.max(g.term_sup_bounds(), initial=0.0)), "a-priori")
    report.claim("core_residual_bound", eta, float(np.max(residual_bounds, initial=0.0)), "a-priori" if not heuristic else "sampled",
                 samples=None if not heuristic else 4096)
    return g, details.K, report, details


# ---------------------------------------------------------------------------
# iteration


def lp_norm_field(m, f, region, p, depth=4, offsets=None):
    """Midpoint-quadrature ``||f||_p`` over a list of boxes."""
    rlo, rhi = _region_arrays(region)
    acc = 0.0
    sup = 0.0
    for b in range(len(rlo)):
        lo, hi = dyadic_partition(BoxRegion(rlo[b], rhi[b]), depth)
        w = m.mass_many(lo, hi, "charge")
        keep = w > 0
        if not keep.any():
            continue
        v = f(0.5 * (lo[keep] + hi[keep]))
        if offsets is not None:
            v = v - offsets[b]
        nv = np.linalg.norm(v, axis=1)
        if math.isinf(p):
            sup = max(sup, float(nv.max()))
        else:
            acc += float(w[keep] @ nv ** p)
    return sup if math.isinf(p) else acc ** (1 / p)


def _parse_p(p):
    if isinstance(p, str):
        return math.inf if p.lower() in ("inf", "infinity") else float(p)
    return float(p)


@dataclass
class IterateResult:
    g: LayeredBumpSum
    K: list
    report: VerifyReport
    steps: list = field(default_factory=list)
    a: float = 0.0
    etas: list = field(default_factory=list)


def _layer_lp_upper(step: StepResult, p):
    """Certified upper estimate of ``||D g_layer||_p`` from exact core and frame masses."""
    g = step.g
    if len(g) == 0:
        return 0.0
    core = np.linalg.norm(g.coef, axis=1)
    band = g.term_grad_bounds()
    if math.isinf(p):
        vals = np.concatenate([core[step.inner_masses > 0], band[step.frame_masses > 0]])
        return float(vals.max()) if vals.size else 0.0
    return float((core ** p @ step.inner_masses + band ** p @ step.frame_masses) ** (1 / p))


def lusin_iterate(m: MeasureModel, f: VectorField, eps: float, zeta: float, p_list=(1, 2, math.inf), max_layers: int = 4,
                  region=None, seed: int | None = 0, truncate_alpha: float | None = None, quad_depth: int = 3,
                  samples_per_cell: int = 4, cover_kw=None) -> IterateResult:
    """Layered construction with ``mu(Omega \\ K) < eps mu(Omega)`` and ``Dg = f`` on ``K`` up to ``eta_layers``.

    Layer ``n`` (from 1) runs :func:`lusin_step` on the inner boxes of layer
    ``n-1`` with ``xi = 2^(-n-1) eps``, ``eta = a eps^2 2^(-2(n+1))`` and
    ``zeta 2^(-n)``, applied to the residual ``f - D(g_1 + ... + g_(n-1))``,
    which is ``f`` minus a constant on each inherited inner box.
    ``a = min_p mu(Omega)^(-1/p) ||f||_p`` over ``p_list`` (``inf`` always
    included).  Fields without a finite bound are first clamped at a
    sampled level exceeded on mass fraction ``truncate_alpha`` (default
    ``eps/4``).
    """
    if not (0 < eps < 1) or not (0 < zeta < 1):
        raise InvalidInput("eps and zeta must lie in (0, 1)")
    if max_layers < 1:
        raise InvalidInput("max_layers must be positive")
    ps = sorted({_parse_p(p) for p in p_list} | {math.inf})
    if any(p < 1 for p in ps):
        raise InvalidInput("p must be >= 1")
    region = [default_region(m)] if region is None else ([region] if isinstance(region, BoxRegion) else list(region))
    n = m.dim
    rlo, rhi = _region_arrays(region)
    total = float(m.mass_many(rlo, rhi, "charge").sum())
    if not total > 0:
        raise InvalidInput("region carries no mass")
    truncation = None
    if f.bound is None or not math.isfinite(f.bound):
        sup = f.sampled_sup(region, seed=seed)
        if not math.isfinite(sup):
            alpha = eps / 4 if truncate_alpha is None else truncate_alpha
            r, est = truncation_level(f, m, alpha, seed=seed)
            f = truncate_field(f, m, r)
            truncation = {"r": r, "sampled_exceed_fraction": est}
    norms = {p: lp_norm_field(m, f, region, p, depth=max(quad_depth, 4)) for p in ps}
    a = min(total ** (-1 / p if not math.isinf(p) else 0.0) * norms[p] for p in ps)
    report = VerifyReport("prescribe-gradient", m.spec_hash(), seed, extra={"eps": eps, "zeta": zeta, "layers": max_layers, "a": a})
    if truncation:
        report.extra["truncation"] = truncation
    layers, steps, etas = [], [], []
    cur_region = region
    offsets = np.zeros((len(rlo), n))
    L0 = f.lip
    if L0 is None:
        L0 = 2.0 * f.sampled_lip(region, seed=seed)
        report.extra["heuristic_modulus"] = True
    for layer in range(1, max_layers + 1):
        xi = 2.0 ** (-layer - 1) * eps
        eta = a * eps ** 2 * 2.0 ** (-2 * (layer + 1)) if a > 0 else 0.5
        etas.append(eta)
        z = zeta * 2.0 ** (-layer)
        bnd = None
        if layer > 1:
            # residual on an inherited box is bounded by the previous certificate
            bnd = float(np.max(prev_res, initial=0.0))
        g, K, _, step = lusin_step(m, f, xi, min(eta, 0.999), z, region=cur_region, seed=None if seed is None else seed + layer,
                                   lip=L0, bound=bnd, offsets=offsets, quad_depth=quad_depth, cover_kw=cover_kw)
        layers.append(g)
        steps.append(step)
        prev_res = step.residual_bounds
        if len(step.cells) == 0:
            break
        offsets = offsets[step.owner] + g.coef
        cur_region = K
    gsum = LayeredBumpSum(layers, dim=n)
    last = steps[-1]
    Kfinal = last.K
    inner_total = float(last.inner_masses.sum())
    exc = max(0.0, total - inner_total)
    report.claim("exceptional_mass", eps * total, exc, "exact", holds=exc < eps * total + len(last.radii) * m.query_tol)
    report.claim("sup_g", zeta, gsum.sup_bound(), "a-priori")
    # residual at core verification points of the final layer
    rng = np.random.default_rng(seed)
    if len(last.cells):
        hw = ((1 - last.eps) * last.radii)[:, None]
        pts = [last.cells]
        for _ in range(samples_per_cell):
            pts.append(last.cells + hw * rng.uniform(-1, 1, last.cells.shape))
        pts = np.vstack(pts)
        res = np.linalg.norm(f(pts) - gsum.grad(pts), axis=1)
        worst = float(res.max())
        count = len(pts)
    else:
        worst, count = 0.0, 0
    report.claim("core_residual", etas[-1], worst, "sampled", samples=max(count, 1))
    report.claim("core_residual_certified", etas[-1], float(np.max(last.residual_bounds, initial=0.0)) + 64 * np.finfo(float).eps * (1 + a), "a-priori")
    lp_rows = []
    for p in ps:
        upper = sum(_layer_lp_upper(s, p) for s in steps)
        fp = norms[p]
        C = iterate_constant(n, p)
        rhs = C * eps ** ((0.0 if math.isinf(p) else 1 / p) - 1) * fp
        ratio = upper / (eps ** ((0.0 if math.isinf(p) else 1 / p) - 1) * fp) if fp > 0 else 0.0
        tag = "inf" if math.isinf(p) else f"{p:g}"
        report.claim(f"lp_inequality_p{tag}", rhs, upper, "a-priori")
        lp_rows.append({"p": tag, "grad_norm_upper": upper, "f_norm": fp, "C_N": C, "observed_ratio": ratio})
    report.extra["lp_table"] = lp_rows
    report.extra["layers_detail"] = [
        {"layer": i + 1, "cells": len(s.radii), "r0": s.r0, "eps_frame": s.eps, "eta": etas[i], "xi": 2.0 ** (-i - 2) * eps,
         "exceptional_mass": s.exceptional_mass, "sup_g": float(np.max(s.g.term_sup_bounds(), initial=0.0)),
         "grad_sup_bound": _layer_lp_upper(s, math.inf)}
        for i, s in enumerate(steps)
    ]
    return IterateResult(gsum, Kfinal, report, steps, a, etas)
