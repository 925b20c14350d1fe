"""Measure-adaptive coverings.

* :func:`find_good_offset` -- a shift of the ``2r``-cubulation whose cubes with
  light frames capture at least 3/4 of a compact set's mass.
* :func:`cover_good_cubes` -- disjoint good cubes inside an open region, up to
  a mass tolerance.
* :func:`cover_good_rectangles` -- disjoint anisotropic rectangles whose thin
  cores carry a definite share of their mass.
* :func:`cover_centered_intervals` -- 1-D intervals whose small centers carry
  a ``1/(16 n)`` share of the covered mass.

Regions are finite unions of closed boxes with disjoint interiors.  Masses
of pieces of a partition are taken with the ``"charge"`` face rule, so they
add up.  Every cover object has a ``verify`` method that rechecks its
invariants from raw mass queries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, InvalidInput, SearchFailure
from .measures import BoxRegion, MeasureModel, frame_mass_many
from .reports import csv_text

FRAME_CONST = 16  # good cube: frame <= 16 N 2^N eps mass


def good_ratio(dim: int, eps: float) -> float:
    return FRAME_CONST * dim * 2 ** dim * eps


def rect_core_constant(dim: int, n0: int, sigma: float) -> float:
    """Lower bound on core/rectangle mass ratio for a good rectangle."""
    return sigma ** (dim - n0) / 3.0 * 2.0 ** (-2 * dim - n0 - 1) / (1.0 + 1.0 / 6.0)


def _as_boxes(region) -> list[BoxRegion]:
    if isinstance(region, BoxRegion):
        return [region]
    boxes = list(region)
    if not boxes or not all(isinstance(b, BoxRegion) for b in boxes):
        raise InvalidInput("region must be a BoxRegion or a nonempty list of BoxRegions")
    return boxes


def _region_arrays(region):
    boxes = _as_boxes(region)
    return np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes])


def _expand_ranges(kmin, kmax):
    """All integer vectors k with kmin[b] <= k <= kmax[b]; returns (owner box, k)."""
    counts = np.maximum(kmax - kmin + 1, 0)
    per_box = np.prod(counts, axis=1)
    total = int(per_box.sum())
    if total == 0:
        return np.zeros(0, dtype=int), np.zeros((0, kmin.shape[1]), dtype=np.int64)
    owner = np.repeat(np.arange(kmin.shape[0]), per_box)
    starts = np.concatenate([[0], np.cumsum(per_box)[:-1]])
    j = np.arange(total) - starts[owner]
    k = np.empty((total, kmin.shape[1]), dtype=np.int64)
    for d in range(kmin.shape[1] - 1, -1, -1):
        c = counts[owner, d]
        k[:, d] = kmin[owner, d] + j % c
        j = j // c
    return owner, k


def _tiles_inside(rlo, rhi, half, omega, max_tiles):
    """Tiles ``omega_b + 2 half k + [-half, half]`` lying inside region box ``b``.

    ``omega`` has one row per region box.
    """
    step = 2.0 * half
    kmin = np.ceil((rlo + half - omega) / step - 1e-12).astype(np.int64)
    kmax = np.floor((rhi - half - omega) / step + 1e-12).astype(np.int64)
    counts = np.maximum(kmax - kmin + 1, 0)
    total = int(np.prod(counts, axis=1).sum())
    if total > max_tiles:
        raise BudgetExhausted(f"a covering pass would need {total} tiles (budget {max_tiles})")
    owner, k = _expand_ranges(kmin, kmax)
    centers = omega[owner] + step * k
    return owner, centers, centers - half, centers + half, kmin, kmax


def _slabs(lo, hi, qlo, qhi):
    """Closed boxes covering ``[lo,hi] \\ (qlo,qhi)`` (at most 2N of them)."""
    out = []
    lo = lo.copy()
    hi = hi.copy()
    for d in range(lo.shape[0]):
        if lo[d] < qlo[d]:
            h2 = hi.copy()
            h2[d] = qlo[d]
            out.append((lo.copy(), h2))
        if qhi[d] < hi[d]:
            l2 = lo.copy()
            l2[d] = qhi[d]
            out.append((l2, hi.copy()))
        lo[d] = max(lo[d], qlo[d])
        hi[d] = min(hi[d], qhi[d])
    return out


def _sweep_overlaps(lo, hi, tol=0.0):
    """Index pairs of boxes whose interiors overlap (sweep along axis 0)."""
    order = np.argsort(lo[:, 0], kind="stable")
    slo, shi = lo[order], hi[order]
    bad = []
    for a in range(len(order)):
        b = a + 1
        while b < len(order) and slo[b, 0] < shi[a, 0] - tol:
            if np.all(np.minimum(shi[a], shi[b]) - np.maximum(slo[a], slo[b]) > tol):
                bad.append((int(order[a]), int(order[b])))
            b += 1
    return bad


# ---------------------------------------------------------------------------
# good offsets


@dataclass
class OffsetResult:
    omega: np.ndarray
    captured: float
    target_mass: float
    draws: int
    centers: np.ndarray
    good: np.ndarray

    @property
    def fraction(self) -> float:
        return self.captured / self.target_mass if self.target_mass > 0 else 0.0


def _captured_mass(m, centers, r, good, klo, khi):
    if not good.any():
        return 0.0
    c = centers[good]
    total = 0.0
    for b in range(klo.shape[0]):
        lo = np.maximum(c - r, klo[b])
        hi = np.minimum(c + r, khi[b])
        ok = np.all(hi > lo, axis=1)
        if ok.any():
            total += float(m.mass_many(lo[ok], hi[ok], "charge").sum())
    return total


def _evaluate_offset(m, klo, khi, r, eps, omega, max_cells):
    n = m.dim
    step = 2.0 * r
    kmin = np.ceil((klo - r - omega) / step).astype(np.int64)
    kmax = np.floor((khi + r - omega) / step).astype(np.int64)
    total = int(np.prod(np.maximum(kmax - kmin + 1, 0), axis=1).sum())
    if total > max_cells:
        raise BudgetExhausted(f"cubulation meets K in {total} cubes (budget {max_cells})")
    _, k = _expand_ranges(kmin, kmax)
    k = np.unique(k, axis=0) if len(k) else k
    centers = omega + step * k
    mass_c, frame_c = frame_mass_many(m, centers, np.full(len(centers), r), eps)
    good = frame_c <= good_ratio(n, eps) * mass_c
    return centers, good, _captured_mass(m, centers, r, good, klo, khi)


def find_good_offset(m: MeasureModel, K, r: float, eps: float, seed: int | None = 0, budget: int = 64,
                     require: float = 0.75, fallback_grid: bool = True, max_cells: int = 2_000_000) -> OffsetResult:
    """Shift ``omega`` in ``Bx(0, r)`` so good cubes meeting ``K`` capture ``require * mu(K)``.

    Offsets are drawn uniformly from a seeded generator (``budget`` draws),
    then from a regular grid of ``8^N`` offsets.  The captured mass is
    recomputed from mass queries before returning.  Raises
    :class:`SearchFailure` carrying the best offset seen when nothing
    qualifies.
    """
    if r <= 0 or not (0 < eps < 1):
        raise InvalidInput("need r > 0 and eps in (0, 1)")
    klo, khi = _region_arrays(K)
    target = float(m.mass_many(klo, khi, "charge").sum())
    if not target > 0:
        raise InvalidInput("K must carry positive mass")
    rng = np.random.default_rng(seed)
    n = m.dim
    best = None
    draws = 0

    def candidates():
        for _ in range(budget):
            yield rng.uniform(-r, r, n)
        if fallback_grid:
            ticks = -r + (2 * np.arange(8) + 1) * r / 8
            for idx in np.ndindex(*([8] * n)):
                yield ticks[list(idx)]

    for omega in candidates():
        draws += 1
        centers, good, captured = _evaluate_offset(m, klo, khi, r, eps, omega, max_cells)
        res = OffsetResult(omega, captured, target, draws, centers, good)
        if best is None or captured > best.captured:
            best = res
        if captured >= require * target:
            return res
    raise SearchFailure(f"no offset captured {require:.3g} of mu(K); best fraction {best.fraction:.4g}", best=best.omega, achieved=best.fraction)


# ---------------------------------------------------------------------------
# covers


@dataclass
class CubeCover:
    centers: np.ndarray
    radii: np.ndarray
    eps: float
    masses: np.ndarray
    frame_masses: np.ndarray
    region_mass: float
    uncovered_mass: float
    mass_tol: float
    r0: float
    seed: int | None
    omegas: list = field(default_factory=list)
    passes: int = 0

    @property
    def dim(self) -> int:
        return self.centers.shape[1] if self.centers.ndim == 2 else 0

    def __len__(self):
        return len(self.radii)

    def cells(self) -> list[BoxRegion]:
        return [BoxRegion.cube(c, r) for c, r in zip(self.centers, self.radii)]

    def verify(self, m: MeasureModel, region) -> dict:
        """Recheck every invariant from raw mass queries."""
        rlo, rhi = _region_arrays(region)
        n = m.dim
        lo = self.centers - self.radii[:, None]
        hi = self.centers + self.radii[:, None]
        out = {}
        if len(self):
            mass_c, frame_c = frame_mass_many(m, self.centers, self.radii, self.eps)
            slack = 1e-12 * max(1.0, float(np.max(np.abs(rhi))), float(np.max(np.abs(rlo))))
            inside = np.array([np.any(np.all(lo[i] >= rlo - slack, axis=1) & np.all(hi[i] <= rhi + slack, axis=1)) for i in range(len(self))])
            out["all_inside"] = bool(inside.all())
            out["all_good"] = bool(np.all(frame_c <= good_ratio(n, self.eps) * mass_c))
            out["max_frame_ratio"] = float(np.max(np.where(mass_c > 0, frame_c / np.where(mass_c > 0, mass_c, 1), 0)))
            out["radii_ok"] = bool(np.all(self.radii <= self.r0))
            covered = float(m.mass_many(lo, hi, "charge").sum())
        else:
            out.update(all_inside=True, all_good=True, max_frame_ratio=0.0, radii_ok=True)
            covered = 0.0
        out["disjoint"] = not _sweep_overlaps(lo, hi, tol=1e-12 * max(1.0, float(np.max(np.abs(rhi)))))
        total = float(m.mass_many(rlo, rhi, "charge").sum())
        out["uncovered_mass"] = max(0.0, total - covered)
        out["uncovered_ok"] = out["uncovered_mass"] <= self.mass_tol + 1e-12 * max(total, 1.0) + len(self) * m.query_tol
        out["ok"] = all(out[k] for k in ("all_inside", "all_good", "radii_ok", "disjoint", "uncovered_ok"))
        return out

    def to_json(self):
        return {
            "kind": "cube_cover",
            "eps": self.eps,
            "r0": self.r0,
            "omega": [np.asarray(o).tolist() for o in self.omegas],
            "uncovered_mass": self.uncovered_mass,
            "region_mass": self.region_mass,
            "mass_tol": self.mass_tol,
            "truncated": True,
            "seed": self.seed,
            "cells": [
                {"center": c.tolist(), "r": float(r), "mass": float(mm), "frame_mass": float(fm)}
                for c, r, mm, fm in zip(self.centers, self.radii, self.masses, self.frame_masses)
            ],
        }

    def to_csv(self) -> str:
        n = self.centers.shape[1] if len(self) else 0
        header = [f"c{d}" for d in range(n)] + ["r", "mass", "frame_mass"]
        rows = [list(c) + [r, mm, fm] for c, r, mm, fm in zip(self.centers, self.radii, self.masses, self.frame_masses)]
        return csv_text(header, rows)

    @classmethod
    def from_json(cls, d):
        cells = d["cells"]
        dim = len(cells[0]["center"]) if cells else 0
        return cls(
            centers=np.array([c["center"] for c in cells], dtype=float).reshape(-1, dim),
            radii=np.array([c["r"] for c in cells], dtype=float),
            eps=d["eps"],
            masses=np.array([c["mass"] for c in cells], dtype=float),
            frame_masses=np.array([c["frame_mass"] for c in cells], dtype=float),
            region_mass=d["region_mass"],
            uncovered_mass=d["uncovered_mass"],
            mass_tol=d["mass_tol"],
            r0=d["r0"],
            seed=d["seed"],
            omegas=[np.array(o) for o in d["omega"]],
        )


def _exhaust(m, region, half_fn, good_fn, scale0, mass_tol, seed, draws_per_pass, max_passes, max_tiles):
    """Shared exhaustion loop for cube and rectangle covers.

    Each pass tiles every box of the uncovered remainder at the current
    scale.  The tiling of a box is anchored at its lower corner and shifted
    by one of ``draws_per_pass`` seeded offsets (the first is no shift); each
    box keeps the offset whose good tiles carry the most mass.  Good tiles
    are accepted, the scale halves, and the remainder becomes each box minus
    its block of tiles plus the rejected tiles.  Zero-mass pieces are dropped.
    """
    rlo, rhi = _region_arrays(region)
    n = rlo.shape[1]
    rng = np.random.default_rng(seed)
    total = float(m.mass_many(rlo, rhi, "charge").sum())
    rem_lo, rem_hi = rlo.copy(), rhi.copy()
    rem_mass = m.mass_many(rem_lo, rem_hi, "charge")
    keep = rem_mass > 0
    rem_lo, rem_hi, rem_mass = rem_lo[keep], rem_hi[keep], rem_mass[keep]
    accepted = []
    shifts = []
    scale = scale0
    passes = 0
    while rem_mass.sum() > mass_tol:
        if passes >= max_passes:
            raise BudgetExhausted(
                f"uncovered mass {rem_mass.sum():.3g} > tol {mass_tol:.3g} after {passes} passes",
                best=(accepted, shifts, passes), achieved=float(rem_mass.sum()))
        passes += 1
        half = half_fn(scale)
        step = 2.0 * half
        nb = len(rem_lo)
        us = np.vstack([np.zeros(n), rng.uniform(0.0, 1.0, (max(draws_per_pass, 1) - 1, n))])
        shifts.append(us)
        trials = []
        scores = np.full((len(us), nb), -1.0)
        for t, u in enumerate(us):
            omega = rem_lo + half + u * step
            owner, centers, lo, hi, kmin, kmax = _tiles_inside(rem_lo, rem_hi, half, omega, max_tiles)
            if len(centers):
                good, tile_mass, extra = good_fn(lo, hi, centers, scale)
                good &= tile_mass > 0
                scores[t] = np.bincount(owner[good], weights=tile_mass[good], minlength=nb)
            else:
                good, tile_mass, extra = np.zeros(0, bool), np.zeros(0), np.zeros(0)
                scores[t] = 0.0
            trials.append((omega, owner, centers, lo, hi, kmin, kmax, good, tile_mass, extra))
        choice = np.argmax(scores, axis=0)
        new_lo, new_hi = [], []
        got_c, got_m, got_x = [], [], []
        for t, (omega, owner, centers, lo, hi, kmin, kmax, good, tile_mass, extra) in enumerate(trials):
            boxes = np.flatnonzero(choice == t)
            if len(boxes) == 0:
                continue
            sel = np.isin(owner, boxes)
            acc = sel & good
            got_c.append(centers[acc])
            got_m.append(tile_mass[acc])
            got_x.append(extra[acc])
            rejected = sel & ~good & (tile_mass > 0)
            new_lo.extend(lo[rejected])
            new_hi.extend(hi[rejected])
            counts = np.maximum(kmax - kmin + 1, 0)
            for b in boxes:
                if np.any(counts[b] == 0):
                    new_lo.append(rem_lo[b])
                    new_hi.append(rem_hi[b])
                    continue
                qlo = np.maximum(omega[b] + step * kmin[b] - half, rem_lo[b])
                qhi = np.minimum(omega[b] + step * kmax[b] + half, rem_hi[b])
                for a, z in _slabs(rem_lo[b], rem_hi[b], qlo, qhi):
                    if np.all(z > a):
                        new_lo.append(a)
                        new_hi.append(z)
        if got_c:
            accepted.append((np.vstack(got_c), scale, np.concatenate(got_m), np.concatenate(got_x)))
        if new_lo:
            rem_lo, rem_hi = np.array(new_lo), np.array(new_hi)
            rem_mass = m.mass_many(rem_lo, rem_hi, "charge")
            keep = rem_mass > 0
            rem_lo, rem_hi, rem_mass = rem_lo[keep], rem_hi[keep], rem_mass[keep]
        else:
            rem_lo = rem_hi = np.zeros((0, n))
            rem_mass = np.zeros(0)
        scale /= 2.0
    return accepted, shifts, passes, total, float(rem_mass.sum()), (rem_lo, rem_hi)


def cover_good_cubes(m: MeasureModel, U, eps: float, r0: float, mass_tol: float, seed: int | None = 0,
                     draws_per_pass: int = 8, max_passes: int = 60, max_cells: int = 4_000_000) -> CubeCover:
    """Disjoint cubes inside ``U`` with light frames covering all but ``mass_tol``.

    Every returned cube satisfies ``frame <= 16 N 2^N eps * mass`` and has
    radius at most ``r0``.  ``U`` is a box or list of boxes with disjoint
    interiors.  The infinite exhaustion of the covering argument is cut at
    ``mass_tol``.
    """
    if not (0 < eps < 1) or r0 <= 0 or mass_tol <= 0:
        raise InvalidInput("need eps in (0, 1), r0 > 0, mass_tol > 0")
    n = m.dim
    rlo, rhi = _region_arrays(U)
    if rlo.shape[1] != n:
        raise InvalidInput("region dimension does not match the measure")
    if not np.isfinite(m.mass_many(rlo, rhi).sum()):
        raise InvalidInput("region mass is not finite")
    ratio = good_ratio(n, eps)

    def good_fn(lo, hi, centers, r):
        mass_c, frame_c = frame_mass_many(m, centers, np.full(len(centers), r), eps)
        return frame_c <= ratio * mass_c, mass_c, frame_c

    accepted, omegas, passes, total, uncovered, _ = _exhaust(
        m, U, lambda r: np.full(n, r), good_fn, r0, mass_tol, seed, draws_per_pass, max_passes, max_cells)
    return _assemble_cubes(accepted, omegas, passes, total, uncovered, eps, mass_tol, r0, seed, n)


def _assemble_cubes(accepted, omegas, passes, total, uncovered, eps, mass_tol, r0, seed, n):
    cs = [a[0] for a in accepted if len(a[0])]
    centers = np.vstack(cs) if cs else np.zeros((0, n))
    radii = np.concatenate([np.full(len(a[0]), a[1]) for a in accepted]) if accepted else np.zeros(0)
    masses = np.concatenate([a[2] for a in accepted]) if accepted else np.zeros(0)
    frames = np.concatenate([a[3] for a in accepted]) if accepted else np.zeros(0)
    return CubeCover(centers, radii, eps, masses, frames, total, uncovered, mass_tol, r0, seed, omegas, passes)


# ---------------------------------------------------------------------------
# rectangles


@dataclass
class RectCover:
    """Rectangles ``E(x_i, r_i)`` with cores ``S(x_i, r_i)``.

    ``axes`` lists the long (plane) coordinates; the others are transverse.
    """

    centers: np.ndarray
    radii: np.ndarray
    L: float
    sigma: float
    axes: list
    region_mass: float
    uncovered_mass: float
    core_masses: np.ndarray
    masses: np.ndarray
    seed: int | None
    tol: float
    omegas: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def n0(self) -> int:
        return len(self.axes)

    def __len__(self):
        return len(self.radii)

    def long_mask(self):
        mask = np.zeros(self.dim, dtype=bool)
        mask[self.axes] = True
        return mask

    def rect_half(self, r):
        return np.where(self.long_mask(), self.L ** 2 * r / 2.0, 2.0 * r)

    def core_half(self, r):
        return np.where(self.long_mask(), self.L ** 2 * r / 2.0 - self.L * r / 2.0, 2.0 * self.sigma * r)

    def bounds(self):
        half = np.array([self.rect_half(r) for r in self.radii]).reshape(-1, self.dim)
        return self.centers - half, self.centers + half

    def core_bounds(self):
        half = np.array([self.core_half(r) for r in self.radii]).reshape(-1, self.dim)
        return self.centers - half, self.centers + half

    def verify(self, m: MeasureModel, K, r0: float) -> dict:
        klo, khi = _region_arrays(K)
        lo, hi = self.bounds()
        clo, chi = self.core_bounds()
        c = rect_core_constant(self.dim, self.n0, self.sigma)
        e_mass = _mass_in_region(m, lo, hi, klo, khi)
        s_mass = _mass_in_region(m, clo, chi, klo, khi)
        total = float(m.mass_many(klo, khi, "charge").sum())
        out = {
            "disjoint": not _sweep_overlaps(lo, hi, tol=1e-12),
            "radii_ok": bool(np.all((self.radii > 0) & (self.radii <= r0))),
            "cores_ok": bool(np.all((s_mass >= c * e_mass) & (s_mass > 0))),
            "min_core_ratio": float(np.min(s_mass / e_mass)) if len(self) else float("nan"),
            "constant": c,
            "uncovered_mass": max(0.0, total - float(e_mass.sum())),
        }
        out["uncovered_ok"] = out["uncovered_mass"] <= self.tol * total + 1e-12 * max(total, 1.0) + len(self) * m.query_tol
        out["ok"] = all(out[k] for k in ("disjoint", "radii_ok", "cores_ok", "uncovered_ok"))
        return out

    def to_json(self):
        return {
            "kind": "rect_cover",
            "L": self.L,
            "sigma": self.sigma,
            "axes": list(self.axes),
            "uncovered_mass": self.uncovered_mass,
            "region_mass": self.region_mass,
            "tol": self.tol,
            "truncated": True,
            "seed": self.seed,
            "omega": [np.asarray(o).tolist() for o in self.omegas],
            "rects": [
                {"center": c.tolist(), "r": float(r), "mass": float(mm), "core_mass": float(cm)}
                for c, r, mm, cm in zip(self.centers, self.radii, self.masses, self.core_masses)
            ],
        }

    def to_csv(self) -> str:
        header = [f"c{d}" for d in range(self.dim)] + ["r", "mass", "core_mass"]
        rows = [list(c) + [r, mm, cm] for c, r, mm, cm in zip(self.centers, self.radii, self.masses, self.core_masses)]
        return csv_text(header, rows)

    @classmethod
    def from_json(cls, d, dim: int):
        rects = d["rects"]
        return cls(
            centers=np.array([c["center"] for c in rects], dtype=float).reshape(-1, dim),
            radii=np.array([c["r"] for c in rects], dtype=float),
            L=d["L"],
            sigma=d["sigma"],
            axes=list(d["axes"]),
            region_mass=d["region_mass"],
            uncovered_mass=d["uncovered_mass"],
            core_masses=np.array([c["core_mass"] for c in rects], dtype=float),
            masses=np.array([c["mass"] for c in rects], dtype=float),
            seed=d["seed"],
            tol=d["tol"],
            omegas=[np.array(o) for o in d["omega"]],
        )


def _mass_in_region(m, lo, hi, klo, khi):
    out = np.zeros(len(lo))
    for b in range(len(klo)):
        a = np.maximum(lo, klo[b])
        z = np.minimum(hi, khi[b])
        ok = np.all(z > a, axis=1)
        if ok.any():
            out[ok] += m.mass_many(a[ok], z[ok], "charge")
    return out


def cover_good_rectangles(m: MeasureModel, K, L: float, sigma: float, N0: int, r0: float, tol: float = 0.05,
                          seed: int | None = 0, axes=None, draws_per_pass: int = 8, max_passes: int = 40,
                          max_tiles: int = 4_000_000) -> RectCover:
    """Disjoint good rectangles inside ``K`` leaving at most ``tol * mu(K)`` uncovered.

    The long axes default to the measure's declared bundle when it has
    dimension ``N0``, else the first ``N0`` coordinates.  A rectangle at
    scale ``r`` is good when ``mu(S & K) >= c mu(E & K) > 0`` with
    ``c = sigma^(N-N0) / 3 * 2^(-2N-N0-1) * 6/7``.  Rectangles come from
    shifted tilings by ``E``-shaped tiles, keeping good tiles and retrying
    the rest at half the scale.
    """
    n = m.dim
    if L < 8 or not (0 < sigma < 0.5) or not (0 < N0 < n) or r0 <= 0:
        raise InvalidInput("need L >= 8, sigma in (0, 1/2), 0 < N0 < N, r0 > 0")
    klo, khi = _region_arrays(K)
    total = float(m.mass_many(klo, khi, "charge").sum())
    if not total > 0:
        raise InvalidInput("K must carry positive mass")
    if axes is None:
        axes = m.bundle.coordinate_axes() if (m.bundle is not None and m.bundle.dim == N0) else None
        if axes is None:
            axes = list(range(N0))
    axes = sorted(int(a) for a in axes)
    if len(axes) != N0:
        raise InvalidInput("number of long axes must equal N0")
    long = np.zeros(n, dtype=bool)
    long[axes] = True
    c = rect_core_constant(n, N0, sigma)

    def rect_half(r):
        return np.where(long, L ** 2 * r / 2.0, 2.0 * r)

    def core_half(r):
        return np.where(long, L ** 2 * r / 2.0 - L * r / 2.0, 2.0 * sigma * r)

    def good_fn(lo, hi, centers, r):
        e_mass = m.mass_many(lo, hi, "charge")
        s_mass = m.mass_many(centers - core_half(r), centers + core_half(r), "closed")
        return (s_mass >= c * e_mass) & (s_mass > 0), e_mass, s_mass

    extent = float(np.min((khi - klo)[:, long].max(axis=0) / (L ** 2)))
    scale0 = min(r0, extent)
    accepted, omegas, passes, total, uncovered, _ = _exhaust(
        m, K, rect_half, good_fn, scale0, tol * total, seed, draws_per_pass, max_passes, max_tiles)
    cs = [a[0] for a in accepted if len(a[0])]
    centers = np.vstack(cs) if cs else np.zeros((0, n))
    radii = np.concatenate([np.full(len(a[0]), a[1]) for a in accepted]) if accepted else np.zeros(0)
    masses = np.concatenate([a[2] for a in accepted]) if accepted else np.zeros(0)
    cores = np.concatenate([a[3] for a in accepted]) if accepted else np.zeros(0)
    return RectCover(centers, radii, L, sigma, axes, total, uncovered, cores, masses, seed, tol, omegas)


# ---------------------------------------------------------------------------
# 1-D intervals with heavy centers

CENTER_EPS = 2.0 ** -6
N_SUB = 2 ** 7 - 1  # sub-intervals per cube, one more than 2^7 - 2 so the shifted centers tile the inner part


@dataclass
class IntervalCover:
    """Closed intervals ``[x_j - r_j, x_j + r_j]`` with centers of half-width ``r_j / (8 n)``."""

    x: np.ndarray
    r: np.ndarray
    n: int
    region_mass: float
    uncovered_mass: float
    mass_tol: float
    r0: float
    seed: int | None
    shifts: np.ndarray = None
    fallback_cells: int = 0

    def __len__(self):
        return len(self.r)

    @property
    def center_half(self) -> np.ndarray:
        return self.r / (8.0 * self.n)

    def interval_bounds(self):
        return self.x - self.r, self.x + self.r

    def center_bounds(self):
        h = self.center_half
        return self.x - h, self.x + h

    def verify(self, m: MeasureModel, U) -> dict:
        rlo, rhi = _region_arrays(U)
        lo, hi = self.interval_bounds()
        clo, chi = self.center_bounds()
        i_mass = float(m.mass_many(lo[:, None], hi[:, None], "charge").sum()) if len(self) else 0.0
        c_mass = float(m.mass_many(clo[:, None], chi[:, None], "charge").sum()) if len(self) else 0.0
        total = float(m.mass_many(rlo, rhi, "charge").sum())
        slack = 1e-12 * max(1.0, float(np.max(np.abs(rhi))), float(np.max(np.abs(rlo))))
        inside = np.array([np.any((lo[i] >= rlo[:, 0] - slack) & (hi[i] <= rhi[:, 0] + slack)) for i in range(len(self))])
        out = {
            "disjoint": not _sweep_overlaps(lo[:, None], hi[:, None], tol=1e-15),
            "all_inside": bool(inside.all()) if len(self) else True,
            "radii_ok": bool(np.all(self.r <= self.r0)),
            "center_mass": c_mass,
            "interval_mass": i_mass,
            "center_ratio": c_mass / i_mass if i_mass > 0 else float("nan"),
            "uncovered_mass": max(0.0, total - i_mass),
        }
        out["centers_ok"] = c_mass >= i_mass / (16.0 * self.n) * (1 - 1e-12) - len(self) * m.query_tol
        out["uncovered_ok"] = out["uncovered_mass"] <= self.mass_tol + 1e-12 * max(total, 1.0) + len(self) * m.query_tol
        out["ok"] = all(out[k] for k in ("disjoint", "all_inside", "radii_ok", "centers_ok", "uncovered_ok"))
        return out

    def to_json(self):
        return {
            "kind": "interval_cover",
            "n": self.n,
            "r0": self.r0,
            "uncovered_mass": self.uncovered_mass,
            "region_mass": self.region_mass,
            "mass_tol": self.mass_tol,
            "truncated": True,
            "seed": self.seed,
            "fallback_cells": self.fallback_cells,
            "intervals": [{"x": float(a), "r": float(b)} for a, b in zip(self.x, self.r)],
        }

    def to_csv(self) -> str:
        lo, hi = self.center_bounds()
        return csv_text(["x", "r", "center_lo", "center_hi"], zip(self.x, self.r, lo, hi))

    @classmethod
    def from_json(cls, d):
        iv = d["intervals"]
        return cls(
            x=np.array([a["x"] for a in iv], dtype=float),
            r=np.array([a["r"] for a in iv], dtype=float),
            n=int(d["n"]),
            region_mass=d["region_mass"],
            uncovered_mass=d["uncovered_mass"],
            mass_tol=d["mass_tol"],
            r0=d["r0"],
            seed=d["seed"],
            fallback_cells=d.get("fallback_cells", 0),
        )


def cover_centered_intervals(m: MeasureModel, U, r0: float, n: int, mass_tol: float | None = None,
                             seed: int | None = 0, cube_cover: CubeCover | None = None, **cube_kw) -> IntervalCover:
    """Intervals inside ``U`` whose centers carry ``>= mu(union) / (16 n)``.

    Starts from a good-cube cover with ``eps = 2^-6`` (so each inner part
    keeps half the mass), splits each inner part into sub-intervals of
    half-width ``2^-7 r``, and among the ``8 n`` shifted families of center
    pieces (half-width ``2^-10 r / n``) keeps the first shift whose centers
    carry ``1/(16 n)`` of the cube's mass.  The two end pieces left over in
    each cube become intervals too.  Zero-mass intervals are dropped.
    """
    if m.dim != 1:
        raise InvalidInput("centered interval covers are one-dimensional")
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    rlo, rhi = _region_arrays(U)
    total = float(m.mass_many(rlo, rhi, "charge").sum())
    if mass_tol is None:
        mass_tol = 1e-3 * total
    if cube_cover is None:
        cube_cover = cover_good_cubes(m, U, CENTER_EPS, r0, mass_tol, seed=seed, **cube_kw)
    z = cube_cover.centers[:, 0]
    rr = cube_cover.radii
    cube_mass = m.mass_many((z - rr)[:, None], (z + rr)[:, None], "charge")
    P = CENTER_EPS * rr  # sub-interval length
    s = P / (8 * n)  # shift step (= center length)
    delta = s / 2  # center half-width
    left = z - (1 - CENTER_EPS) * rr
    i = np.arange(N_SUB)
    j = np.arange(8 * n)
    xs, rs, j0s = [], [], []
    fallback = 0
    chunk = max(1, 2_000_000 // (8 * n * N_SUB))
    for c0 in range(0, len(z), chunk):
        sl = slice(c0, c0 + chunk)
        Pc, sc, dc = P[sl], s[sl], delta[sl]
        sub_c = left[sl, None] - Pc[:, None] / 2 + i[None, :] * Pc[:, None]  # (cells, N_SUB)
        shifted = sub_c[:, None, :] + j[None, :, None] * sc[:, None, None]  # (cells, 8n, N_SUB)
        cm = m.mass_many((shifted - dc[:, None, None]).reshape(-1, 1), (shifted + dc[:, None, None]).reshape(-1, 1), "charge")
        fam = cm.reshape(shifted.shape).sum(axis=2)  # (cells, 8n)
        ok = fam >= (cube_mass[sl] / (16.0 * n))[:, None]
        j0 = np.where(ok.any(axis=1), np.argmax(ok, axis=1), np.argmax(fam, axis=1))
        fallback += int((~ok.any(axis=1)).sum())
        centers = sub_c + (j0 * sc)[:, None]
        a_end = centers[:, 0] - Pc / 2
        b_end = centers[:, -1] + Pc / 2
        lo_c, hi_c = z[sl] - rr[sl], z[sl] + rr[sl]
        x = np.concatenate([centers.ravel(), (lo_c + a_end) / 2, (b_end + hi_c) / 2])
        r = np.concatenate([np.repeat(Pc / 2, N_SUB), (a_end - lo_c) / 2, (hi_c - b_end) / 2])
        keep = r > 0
        x, r = x[keep], r[keep]
        w = m.mass_many((x - r)[:, None], (x + r)[:, None], "closed")
        xs.append(x[w > 0])
        rs.append(r[w > 0])
        j0s.append(j0)
    x = np.concatenate(xs) if xs else np.zeros(0)
    r = np.concatenate(rs) if rs else np.zeros(0)
    j0 = np.concatenate(j0s) if j0s else np.zeros(0, dtype=int)
    order = np.argsort(x, kind="stable")
    x, r = x[order], r[order]
    return IntervalCover(x, r, n, total, cube_cover.uncovered_mass, mass_tol, r0, seed, shifts=j0, fallback_cells=fallback)


def default_region(m: MeasureModel, pad_frac: float = 0.125) -> BoxRegion:
    """The root box padded by ``pad_frac`` of its width on every side."""
    return m.root.dilate(pad_frac * (m.root.hi - m.root.lo))

