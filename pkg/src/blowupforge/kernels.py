"""Hot inner loops.

Each kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorized numpy version. Set ``BLOWUPFORGE_DISABLE_JIT=1`` to force the
numpy path (the numba path is also skipped when numba is not importable).
Both paths must agree to rounding; ``tests/test_kernels.py`` pins that.

``BLOWUPFORGE_THREADS`` caps numba's thread pool.
"""

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and os.environ.get("BLOWUPFORGE_DISABLE_JIT", "0") not in ("1", "true", "yes")

if HAVE_NUMBA and os.environ.get("BLOWUPFORGE_THREADS"):
    try:
        numba.set_num_threads(max(1, min(int(os.environ["BLOWUPFORGE_THREADS"]), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass

# box modes: which faces of [lo, hi] count as inside
CLOSED, OPEN, CHARGE = 0, 1, 2
MODES = {"closed": CLOSED, "open": OPEN, "charge": CHARGE}


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# self-similar Cantor CDF


def _cantor_cdf_loop(t, a, length, rho, w0, w1, depth):
    n = t.shape[0]
    out = np.empty(n)
    err = np.empty(n)
    for k in range(n):
        x = t[k]
        acc = 0.0
        s = a
        L = length
        W = 1.0
        for _ in range(depth):
            if x < s:
                W = 0.0
                break
            if x >= s + L:
                acc += W
                W = 0.0
                break
            left_end = s + rho * L
            right_start = s + L - rho * L
            if x <= left_end:
                L = rho * L
                W = W * w0
            elif x < right_start:
                acc += W * w0
                W = 0.0
                break
            else:
                acc += W * w0
                s = right_start
                L = rho * L
                W = W * w1
        if W > 0.0:
            frac = (x - s) / L if L > 0.0 else 0.5
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            acc += W * frac
        out[k] = acc
        err[k] = W
    return out, err


cantor_cdf_numba = _njit(_cantor_cdf_loop)


def cantor_cdf_numpy(t, a, length, rho, w0, w1, depth):
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    s = np.full_like(t, a)
    L = np.full_like(t, length)
    W = np.ones_like(t)
    live = np.ones(t.shape, dtype=bool)
    for _ in range(depth):
        if not live.any():
            break
        below = live & (t < s)
        W[below] = 0.0
        live &= ~below
        above = live & (t >= s + L)
        acc[above] += W[above]
        W[above] = 0.0
        live &= ~above
        left_end = s + rho * L
        right_start = s + L - rho * L
        go_left = live & (t <= left_end)
        in_gap = live & ~go_left & (t < right_start)
        go_right = live & ~go_left & ~in_gap
        acc[in_gap] += W[in_gap] * w0
        W[in_gap] = 0.0
        live &= ~in_gap
        acc[go_right] += W[go_right] * w0
        s[go_right] = right_start[go_right]
        step = go_left | go_right
        L[step] *= rho
        W[go_left] *= w0
        W[go_right] *= w1
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(L > 0, (t - s) / np.where(L > 0, L, 1.0), 0.5)
    frac = np.clip(frac, 0.0, 1.0)
    out = acc + np.where(W > 0, W * frac, 0.0)
    return out, W.copy()


def cantor_cdf(t, a, length, rho, w0, w1, depth):
    """CDF of the two-branch self-similar measure on ``[a, a+length]``.

    Returns ``(value, err)``: the true CDF lies within ``err`` of ``value``
    (``err`` is the weight of the unresolved cylinder, zero when the descent
    resolves exactly).
    """
    t = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=float)))
    if USE_JIT:
        return cantor_cdf_numba(t, float(a), float(length), float(rho), float(w0), float(w1), int(depth))
    return cantor_cdf_numpy(t, a, length, rho, w0, w1, depth)


# ---------------------------------------------------------------------------
# atom-in-box sums


def _atom_box_loop(points, weights, lo, hi, mode):
    m = lo.shape[0]
    n_atoms, dim = points.shape
    out = np.zeros(m)
    for q in range(m):
        total = 0.0
        for k in range(n_atoms):
            inside = True
            for d in range(dim):
                p = points[k, d]
                if mode == 0:
                    if p < lo[q, d] or p > hi[q, d]:
                        inside = False
                        break
                elif mode == 1:
                    if p <= lo[q, d] or p >= hi[q, d]:
                        inside = False
                        break
                else:
                    if p <= lo[q, d] or p > hi[q, d]:
                        inside = False
                        break
            if inside:
                total += weights[k]
        out[q] = total
    return out


atom_box_numba = _njit(_atom_box_loop)


def atom_box_numpy(points, weights, lo, hi, mode, chunk=4096):
    out = np.empty(lo.shape[0])
    for start in range(0, lo.shape[0], chunk):
        l = lo[start:start + chunk, None, :]
        h = hi[start:start + chunk, None, :]
        p = points[None, :, :]
        if mode == CLOSED:
            inside = (p >= l) & (p <= h)
        elif mode == OPEN:
            inside = (p > l) & (p < h)
        else:
            inside = (p > l) & (p <= h)
        out[start:start + chunk] = inside.all(axis=2) @ weights
    return out


def atom_box_mass(points, weights, lo, hi, mode):
    """Total atom weight inside each box ``[lo[q], hi[q]]`` under ``mode``."""
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    if USE_JIT:
        return atom_box_numba(np.ascontiguousarray(points, dtype=float), np.ascontiguousarray(weights, dtype=float), lo, hi, int(mode))
    return atom_box_numpy(points, weights, lo, hi, mode)


# ---------------------------------------------------------------------------
# bump sums  g(x) = sum_i phi_i(x) <a_i, x - c_i>


def _bump_loop(x, centers, radii, eps, coef):
    n_pts, dim = x.shape
    n_terms = centers.shape[0]
    val = np.zeros(n_pts)
    grad = np.zeros((n_pts, dim))
    rho = np.empty(dim)
    drho = np.empty(dim)
    for p in range(n_pts):
        for i in range(n_terms):
            r = radii[i]
            outside = False
            for d in range(dim):
                if abs(x[p, d] - centers[i, d]) >= r:
                    outside = True
                    break
            if outside:
                continue
            e = eps[i]
            for d in range(dim):
                diff = x[p, d] - centers[i, d]
                u = abs(diff) / r
                s = (1.0 - u) / e
                if s >= 1.0:
                    rho[d] = 1.0
                    drho[d] = 0.0
                else:
                    rho[d] = s * s * (3.0 - 2.0 * s)
                    sgn = 1.0 if diff > 0 else (-1.0 if diff < 0 else 0.0)
                    drho[d] = -6.0 * s * (1.0 - s) / e * sgn / r
            phi = 1.0
            for d in range(dim):
                phi *= rho[d]
            lin = 0.0
            for d in range(dim):
                lin += coef[i, d] * (x[p, d] - centers[i, d])
            val[p] += phi * lin
            for d in range(dim):
                dphi = drho[d]
                for k in range(dim):
                    if k != d:
                        dphi *= rho[k]
                grad[p, d] += phi * coef[i, d] + lin * dphi
    return val, grad


bump_numba = _njit(_bump_loop)


def bump_numpy(x, centers, radii, eps, coef):
    n_pts, dim = x.shape
    val = np.zeros(n_pts)
    grad = np.zeros((n_pts, dim))
    for i in range(centers.shape[0]):
        diff = x - centers[i]
        hit = np.all(np.abs(diff) < radii[i], axis=1)
        if not hit.any():
            continue
        d = diff[hit]
        s = (1.0 - np.abs(d) / radii[i]) / eps[i]
        flat = s >= 1.0
        rho = np.where(flat, 1.0, s * s * (3.0 - 2.0 * s))
        drho = np.where(flat, 0.0, -6.0 * s * (1.0 - s) / eps[i] * np.sign(d) / radii[i])
        phi = np.prod(rho, axis=1)
        lin = d @ coef[i]
        dphi = np.empty_like(d)
        for k in range(dim):
            others = np.prod(np.delete(rho, k, axis=1), axis=1) if dim > 1 else 1.0
            dphi[:, k] = drho[:, k] * others
        val[hit] += phi * lin
        grad[hit] += phi[:, None] * coef[i][None, :] + lin[:, None] * dphi
    return val, grad


def bump_eval(x, centers, radii, eps, coef):
    """Value and exact gradient of a bump sum at the rows of ``x``."""
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
    args = (
        np.ascontiguousarray(centers, dtype=float).reshape(-1, x.shape[1]),
        np.ascontiguousarray(radii, dtype=float).ravel(),
        np.ascontiguousarray(eps, dtype=float).ravel(),
        np.ascontiguousarray(coef, dtype=float).reshape(-1, x.shape[1]),
    )
    if USE_JIT:
        return bump_numba(x, *args)
    return bump_numpy(x, *args)


def depth_for_tol(wmax, tol, cap=400):
    """Descent depth after which an unresolved cylinder weighs at most ``tol``."""
    if wmax <= 0.0 or wmax >= 1.0:
        return cap
    return int(min(cap, max(1, math.ceil(math.log(tol) / math.log(wmax)))))
