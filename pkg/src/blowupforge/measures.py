"""Measure models answering mass queries on axis-aligned boxes.

Every other module sees a measure only through :meth:`MeasureModel.mass_many`
(and the thin wrappers :func:`mass`, :func:`frame_mass`,
:func:`tangent_measure`).  Boxes are closed by default.  Two other face
conventions exist for bookkeeping:

``"open"``
    the interior ``(lo, hi)``; used for frames, whose definition keeps the
    inner boundary.
``"charge"``
    ``(lo, hi]`` on every axis.  Cells of a partition sharing a face charge
    an atom on that face to the lexicographically smaller cell, so masses of
    a partition add up exactly.

Only atomic components distinguish the three; the other models have no
atoms.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInput


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True, eq=False)
class BoxRegion:
    """Closed axis-aligned box ``[lo, hi]``.

    Bounds are stored exactly; ``center`` and ``half_widths`` are derived.
    The sup-norm cube ``Bx(x, r)`` is ``BoxRegion.cube(x, r)``.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidInput("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInput("box bounds must be finite")
        if np.any(hi <= lo):
            raise InvalidInput(f"degenerate box: lo={lo.tolist()} hi={hi.tolist()}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, center, r) -> "BoxRegion":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        r = np.broadcast_to(np.asarray(r, dtype=float), c.shape)
        if np.any(r <= 0):
            raise InvalidInput(f"half-width must be positive, got {r}")
        return cls(c - r, c + r)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains_box(self, other: "BoxRegion") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))

    def contains_points(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def intersect(self, other: "BoxRegion") -> "BoxRegion | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return BoxRegion(lo, hi)

    def dilate(self, pad) -> "BoxRegion":
        return BoxRegion(self.lo - pad, self.hi + pad)

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self):
        return f"BoxRegion(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def boxes_to_arrays(boxes: Sequence[BoxRegion]):
    if not boxes:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes])


def box_difference(a: BoxRegion, b: BoxRegion) -> list[BoxRegion]:
    """Split ``a \\ b`` into at most ``2N`` boxes (closed, sharing faces with ``b``)."""
    inter = a.intersect(b)
    if inter is None:
        return [a]
    out = []
    lo = a.lo.copy()
    hi = a.hi.copy()
    for d in range(a.dim):
        if lo[d] < inter.lo[d]:
            h2 = hi.copy()
            h2[d] = inter.lo[d]
            out.append(BoxRegion(lo.copy(), h2))
        if inter.hi[d] < hi[d]:
            l2 = lo.copy()
            l2[d] = inter.hi[d]
            out.append(BoxRegion(l2, hi.copy()))
        lo[d] = inter.lo[d]
        hi[d] = inter.hi[d]
    return out


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace given by an orthonormal basis (rows of ``basis``)."""

    basis: np.ndarray
    ambient: int

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(-1, self.ambient)
        if b.shape[0] > self.ambient:
            raise InvalidInput("more basis vectors than ambient dimension")
        if b.shape[0] and np.max(np.abs(b @ b.T - np.eye(b.shape[0]))) > 1e-12:
            raise InvalidInput("subspace basis is not orthonormal to 1e-12")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def coordinate(cls, axes: Sequence[int], ambient: int) -> "Subspace":
        return cls(np.eye(ambient)[list(axes)], ambient)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace(np.eye(self.ambient), self.ambient)
        _, _, vt = np.linalg.svd(self.basis)
        return Subspace(vt[self.dim:], self.ambient)

    def coordinate_axes(self) -> list[int] | None:
        """Axis indices if the subspace is spanned by coordinate vectors."""
        axes = []
        for row in self.basis:
            k = int(np.argmax(np.abs(row)))
            if abs(abs(row[k]) - 1.0) > 1e-12:
                return None
            axes.append(k)
        return sorted(axes)

    def to_json(self) -> dict:
        return {"dim": self.dim, "basis": self.basis.tolist()}


# ---------------------------------------------------------------------------
# parameter plumbing: numbers may be given as [numerator, denominator]


def _parse_num(v):
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(u, int) for u in v):
        if v[1] == 0:
            raise InvalidInput("zero denominator in rational parameter")
        return Fraction(v[0], v[1])
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidInput(f"expected a number or [num, den], got {v!r}")
    return v


def _as_list(v):
    if isinstance(v, np.ndarray):
        return np.atleast_1d(v).tolist()
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _emit_num(v):
    if isinstance(v, Fraction):
        return [v.numerator, v.denominator]
    return v


def _emit_tree(v):
    if isinstance(v, Fraction):
        return _emit_num(v)
    if isinstance(v, (list, tuple)):
        return [_emit_tree(u) for u in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


# ---------------------------------------------------------------------------
# models


class MeasureModel:
    """Finite Borel measure on R^N with box-mass queries.

    Subclasses implement :meth:`_mass_arrays` for boxes already clipped to
    the root.  Instances are immutable and queries are pure.
    """

    kind: str = "abstract"

    def __init__(self, root: BoxRegion, bundle: Subspace | None = None):
        self.root = root
        if bundle is not None and bundle.ambient != root.dim:
            raise InvalidInput("bundle ambient dimension does not match the measure")
        self.bundle = bundle
        self._total = None

    @property
    def dim(self) -> int:
        return self.root.dim

    @property
    def total_mass(self) -> float:
        if self._total is None:
            self._total = float(self.mass_many(self.root.lo[None], self.root.hi[None])[0])
        return self._total

    #: absolute error of a single box query
    query_tol: float = 0.0

    def mass_many(self, lo, hi, mode: str = "closed") -> np.ndarray:
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.shape[1] != self.dim:
            raise InvalidInput(f"query boxes must have shape (M, {self.dim})")
        if lo.shape[0] == 0:
            return np.zeros(0)
        mode_id = kernels.MODES[mode]
        clo = np.maximum(lo, self.root.lo)
        chi = np.minimum(hi, self.root.hi)
        empty = np.any(chi < clo, axis=1)
        out = np.zeros(lo.shape[0])
        live = ~empty
        if live.any():
            out[live] = np.maximum(self._mass_arrays(clo[live], chi[live], mode_id, lo[live], hi[live]), 0.0)
        return out

    def mass(self, box: BoxRegion, mode: str = "closed") -> float:
        return float(self.mass_many(box.lo[None], box.hi[None], mode)[0])

    def _mass_arrays(self, lo, hi, mode, raw_lo, raw_hi):  # pragma: no cover - abstract
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def params(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_spec(self) -> dict:
        spec = {"kind": self.kind, **self.params()}
        if self.bundle is not None and getattr(self, "_bundle_declared", True):
            spec["bundle"] = self.bundle.to_json()
        return spec

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_spec(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class LebesgueDensity(MeasureModel):
    """Piecewise-constant density on a dyadic grid over a box."""

    kind = "lebesgue_density"

    def __init__(self, lo, hi, density=None, bundle: Subspace | None = None):
        self._lo_p = [_parse_num(v) for v in _as_list(lo)]
        self._hi_p = [_parse_num(v) for v in _as_list(hi)]
        root = BoxRegion([float(v) for v in self._lo_p], [float(v) for v in self._hi_p])
        if density is None:
            density = np.ones((1,) * root.dim)
        self._density_p = density
        dens = np.asarray(_float_tree(density), dtype=float)
        if dens.ndim != root.dim:
            raise InvalidInput("density array rank must equal the dimension")
        for n in dens.shape:
            if n < 1 or (n & (n - 1)):
                raise InvalidInput("density grid must have a power-of-two number of cells per axis")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise InvalidInput("density must be finite and nonnegative")
        self.density = dens
        self.edges = [np.linspace(root.lo[d], root.hi[d], dens.shape[d] + 1) for d in range(root.dim)]
        self._bundle_declared = bundle is not None
        if bundle is None:
            bundle = Subspace(np.eye(root.dim), root.dim)
        super().__init__(root, bundle)

    def _mass_arrays(self, lo, hi, mode, raw_lo, raw_hi):
        acc = None
        for d in range(self.dim):
            e = self.edges[d]
            ov = np.clip(np.minimum(hi[:, d:d + 1], e[None, 1:]) - np.maximum(lo[:, d:d + 1], e[None, :-1]), 0.0, None)
            if acc is None:
                acc = np.einsum("mi,i...->m...", ov, self.density)
            else:
                acc = np.einsum("mi,mi...->m...", ov, acc)
        return acc

    def sample(self, rng, n):
        w = (self.density * np.prod([np.diff(e)[0] for e in self.edges])).ravel()
        idx = rng.choice(w.size, size=n, p=w / w.sum())
        cells = np.array(np.unravel_index(idx, self.density.shape)).T
        u = rng.random((n, self.dim))
        out = np.empty((n, self.dim))
        for d in range(self.dim):
            e = self.edges[d]
            out[:, d] = e[cells[:, d]] + u[:, d] * (e[1] - e[0])
        return out

    def params(self):
        return {"lo": [_emit_num(v) for v in self._lo_p], "hi": [_emit_num(v) for v in self._hi_p], "density": _emit_tree(self._density_p)}


def _float_tree(v):
    if isinstance(v, np.ndarray):
        return v
    if isinstance(v, (list, tuple)):
        return [_float_tree(u) for u in v]
    return float(_parse_num(v))


class Atomic(MeasureModel):
    """Finite sum of weighted Dirac masses."""

    kind = "atomic"

    def __init__(self, points, weights, root: BoxRegion | None = None, bundle: Subspace | None = None):
        self._points_p = [[_parse_num(v) for v in _as_list(p)] for p in _as_list(points)]
        self._weights_p = [_parse_num(w) for w in _as_list(weights)]
        pts = np.array([[float(v) for v in p] for p in self._points_p], dtype=float)
        w = np.array([float(v) for v in self._weights_p], dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or w.shape != (pts.shape[0],):
            raise InvalidInput("atomic measure needs a nonempty (M, N) point list and M weights")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidInput("atom weights must be positive and finite")
        self.points = pts
        self.weights = w
        self._root_given = root is not None
        if root is None:
            span = np.maximum(pts.max(axis=0) - pts.min(axis=0), 1.0)
            root = BoxRegion(pts.min(axis=0) - 0.5 * span, pts.max(axis=0) + 0.5 * span)
        super().__init__(root, bundle)

    def _mass_arrays(self, lo, hi, mode, raw_lo, raw_hi):
        return kernels.atom_box_mass(self.points, self.weights, lo, hi, mode)

    def sample(self, rng, n):
        idx = rng.choice(len(self.weights), size=n, p=self.weights / self.weights.sum())
        return self.points[idx].copy()

    def params(self):
        out = {"points": [[_emit_num(v) for v in p] for p in self._points_p], "weights": [_emit_num(v) for v in self._weights_p]}
        if self._root_given:
            out["root"] = self.root.to_json()
        return out


class Cantor(MeasureModel):
    """Two-branch self-similar measure on ``[a, a + length]`` (one-dimensional).

    The left branch ``[a, a + rho*length]`` carries weight ``w0`` and the
    right branch ``[a + (1-rho)*length, a + length]`` carries ``w1``.
    Masses come from the CDF descent in :func:`kernels.cantor_cdf`; the
    certified error of one box query is ``query_tol``.
    """

    kind = "cantor"

    def __init__(self, rho=Fraction(1, 3), weights=(Fraction(1, 2), Fraction(1, 2)), support=(0, 1), tol: float = 1e-15, bundle: Subspace | None = None):
        self._rho_p = _parse_num(rho)
        self._w_p = [_parse_num(w) for w in weights]
        self._support_p = [_parse_num(s) for s in support]
        self.rho = float(self._rho_p)
        self.w0, self.w1 = (float(w) for w in self._w_p)
        a, b = (float(s) for s in self._support_p)
        if not (0.0 < self.rho <= 0.5):
            raise InvalidInput("contraction ratio must lie in (0, 1/2]")
        if len(self._w_p) != 2 or abs(self.w0 + self.w1 - 1.0) > 1e-14:
            raise InvalidInput("branch weights must be two numbers summing to 1")
        if self.w0 <= 0 or self.w1 <= 0:
            raise InvalidInput("branch weights must be positive (a zero weight degenerates to an atom)")
        if b <= a:
            raise InvalidInput("support interval must have positive length")
        self.a, self.length = a, b - a
        self.tol = float(tol)
        self.depth = kernels.depth_for_tol(max(self.w0, self.w1), self.tol / 2)
        self.query_tol = 2 * max(self.w0, self.w1) ** self.depth
        super().__init__(BoxRegion([a], [b]), bundle)

    def cdf(self, t):
        return kernels.cantor_cdf(t, self.a, self.length, self.rho, self.w0, self.w1, self.depth)

    def _mass_arrays(self, lo, hi, mode, raw_lo, raw_hi):
        fh, _ = self.cdf(hi[:, 0])
        fl, _ = self.cdf(lo[:, 0])
        return fh - fl

    def mass_error(self, lo, hi) -> np.ndarray:
        _, eh = self.cdf(np.atleast_1d(hi))
        _, el = self.cdf(np.atleast_1d(lo))
        return eh + el

    def sample(self, rng, n, depth: int = 60):
        s = np.full(n, self.a)
        L = self.length
        for _ in range(depth):
            right = rng.random(n) < self.w1
            s = s + right * (L - self.rho * L)
            L *= self.rho
        return (s + rng.random(n) * L)[:, None]

    def params(self):
        return {"rho": _emit_num(self._rho_p), "weights": [_emit_num(w) for w in self._w_p], "support": [_emit_num(s) for s in self._support_p], "tol": self.tol}


class Product(MeasureModel):
    """Product of one-dimensional models, one per coordinate axis.

    Unless declared otherwise the bundle is spanned by the axes carrying a
    Lebesgue-density factor (for ``L^k x nu`` this is the first ``k`` axes).
    """

    kind = "product"

    def __init__(self, components: Sequence[MeasureModel], bundle: Subspace | None = None):
        if not components or any(c.dim != 1 for c in components):
            raise InvalidInput("product components must be a nonempty list of 1-D models")
        self.components = list(components)
        root = BoxRegion([c.root.lo[0] for c in components], [c.root.hi[0] for c in components])
        self._bundle_declared = bundle is not None
        if bundle is None:
            axes = [i for i, c in enumerate(components) if isinstance(c, LebesgueDensity)]
            bundle = Subspace.coordinate(axes, len(components))
        self.query_tol = sum(c.query_tol for c in components)
        super().__init__(root, bundle)

    def _mass_arrays(self, lo, hi, mode, raw_lo, raw_hi):
        mode_name = {v: k for k, v in kernels.MODES.items()}[mode]
        out = np.ones(lo.shape[0])
        for d, comp in enumerate(self.components):
            out *= comp.mass_many(lo[:, d:d + 1], hi[:, d:d + 1], mode_name)
        return out

    def sample(self, rng, n):
        return np.hstack([c.sample(rng, n) for c in self.components])

    def params(self):
        return {"components": [c.to_spec() for c in self.components]}


# ---------------------------------------------------------------------------
# spec files


def measure_from_spec(spec: dict) -> MeasureModel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInput("measure spec must be an object with a 'kind' key")
    kind = spec["kind"]
    bundle = None
    if spec.get("bundle") is not None:
        b = spec["bundle"]
        basis = np.asarray(b["basis"], dtype=float)
        ambient = basis.shape[1] if basis.ndim == 2 and basis.size else int(b.get("ambient", 0))
        bundle = Subspace(basis.reshape(-1, ambient) if ambient else basis, ambient)
    try:
        if kind == "lebesgue_density":
            return LebesgueDensity(list(spec["lo"]), list(spec["hi"]), spec.get("density"), bundle=bundle)
        if kind == "atomic":
            root = None
            if "root" in spec:
                root = BoxRegion(spec["root"]["lo"], spec["root"]["hi"])
            return Atomic(spec["points"], list(spec["weights"]), root=root, bundle=bundle)
        if kind == "cantor":
            return Cantor(spec.get("rho", [1, 3]), spec.get("weights", [[1, 2], [1, 2]]), spec.get("support", [0, 1]), tol=spec.get("tol", 1e-15), bundle=bundle)
        if kind == "product":
            return Product([measure_from_spec(c) for c in spec["components"]], bundle=bundle)
    except KeyError as exc:
        raise InvalidInput(f"measure spec of kind {kind!r} is missing {exc}") from None
    raise InvalidInput(f"unknown measure kind {kind!r}")


def load_measure(path) -> MeasureModel:
    with open(path, encoding="utf-8") as fh:
        return measure_from_spec(json.load(fh))


# ---------------------------------------------------------------------------
# operations


def mass(m: MeasureModel, b: BoxRegion, mode: str = "closed") -> float:
    """``mu(b & root)`` for a closed box (or open/charge, see module doc)."""
    if not isinstance(b, BoxRegion):
        raise InvalidInput("mass query needs a BoxRegion")
    return m.mass(b, mode)


def frame_mass(m: MeasureModel, x, r: float, eps: float) -> float:
    """Mass of the frame: points of ``Bx(x, r)`` with some ``|x_i - y_i| >= (1-eps) r``."""
    if not (0.0 < eps < 1.0):
        raise InvalidInput("frame fraction eps must lie in (0, 1)")
    if r <= 0:
        raise InvalidInput("radius must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    outer = m.mass_many((x - r)[None], (x + r)[None], "closed")[0]
    inner = m.mass_many((x - (1 - eps) * r)[None], (x + (1 - eps) * r)[None], "open")[0]
    return max(0.0, float(outer - inner))


def frame_mass_many(m: MeasureModel, centers, radii, eps) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (cube mass, frame mass) for many cubes."""
    c = np.atleast_2d(centers)
    r = np.asarray(radii, dtype=float).reshape(-1, 1)
    e = np.broadcast_to(np.asarray(eps, dtype=float), (c.shape[0],)).reshape(-1, 1)
    outer = m.mass_many(c - r, c + r, "closed")
    inner = m.mass_many(c - (1 - e) * r, c + (1 - e) * r, "open")
    return outer, np.maximum(outer - inner, 0.0)


@dataclass
class GridMeasure:
    """Cellwise masses of a rescaled measure on ``[-1, 1]^N``."""

    edges: np.ndarray
    masses: np.ndarray
    x: np.ndarray = field(default=None)
    r: float = 0.0

    @property
    def total(self) -> float:
        return float(self.masses.sum())


def tangent_measure(m: MeasureModel, x, r: float, res: int = 16) -> GridMeasure:
    """Cell masses of ``T_{x,r} mu`` restricted to the unit sup-ball, divided by ``r^N``."""
    if r <= 0:
        raise InvalidInput("radius must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = m.dim
    edges = np.linspace(-1.0, 1.0, res + 1)
    idx = np.array(np.meshgrid(*([np.arange(res)] * n), indexing="ij")).reshape(n, -1).T
    lo = x + r * edges[idx]
    hi = x + r * edges[idx + 1]
    masses = m.mass_many(lo, hi, "charge").reshape((res,) * n) / r ** n
    # the outermost lower faces are excluded by the charge rule; add them back
    lo_face = np.zeros_like(masses)
    if isinstance(m, (Atomic, Product)):
        closed = m.mass_many(lo, hi, "closed").reshape((res,) * n) / r ** n
        lo_face = closed - masses
        first = np.zeros((res,) * n, dtype=bool)
        for d in range(n):
            sl = [slice(None)] * n
            sl[d] = 0
            first[tuple(sl)] = True
        lo_face = np.where(first, lo_face, 0.0)
    return GridMeasure(edges=edges, masses=masses + lo_face, x=x, r=float(r))


def dyadic_partition(box: BoxRegion, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the ``2^(depth*N)`` dyadic sub-boxes of ``box``."""
    k = 2 ** depth
    n = box.dim
    idx = np.array(np.meshgrid(*([np.arange(k)] * n), indexing="ij")).reshape(n, -1).T
    w = (box.hi - box.lo) / k
    lo = box.lo + idx * w
    hi = lo + w
    return lo, hi


def integrate(m: MeasureModel, fn, box: BoxRegion, depth: int = 4) -> np.ndarray:
    """Midpoint quadrature of ``fn`` against ``mu`` restricted to ``box``.

    ``fn`` maps an ``(M, N)`` array of points to ``(M, ...)`` values.  The
    box is split into ``2^depth`` pieces per axis; each piece contributes its
    mass times ``fn`` at its center.
    """
    lo, hi = dyadic_partition(box, depth)
    w = m.mass_many(lo, hi, "charge")
    keep = w > 0
    if not keep.any():
        return None
    vals = np.asarray(fn(0.5 * (lo[keep] + hi[keep])))
    return np.tensordot(w[keep], vals, axes=(0, 0))


def num_digits_for(tol: float) -> int:
    return max(1, int(math.ceil(-math.log10(tol))))
