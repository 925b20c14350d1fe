import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowupforge.blowup import (
    GridFunction,
    admissible_decompose,
    estimate_En_mass,
    grid_points,
    rescale,
    scan_blowups,
    sup_distance,
)
from blowupforge.errors import InvalidInput
from blowupforge.measures import Atomic, Cantor, LebesgueDensity, Subspace
from blowupforge.oned import BlowupTarget, PwlFunction


def lip1_pwl(rng, knots=7, lo=-1.0, hi=1.0):
    t = np.sort(np.concatenate([[lo, hi], rng.uniform(lo, hi, knots)]))
    s = rng.uniform(-1, 1, len(t) - 1)
    v = np.concatenate([[0.0], np.cumsum(s * np.diff(t))])
    return PwlFunction(t, v, (lo, hi))


def grid_of(fn, res=33):
    return GridFunction.from_callable(fn, 1, res, lip=1.0)


def test_rescale_identity():
    g = PwlFunction([-5, 5], [-5, 5], (-5, 5))
    t = rescale(g, [0.3], 0.01)
    np.testing.assert_allclose(t.values, grid_points(1, t.res)[:, 0], atol=1e-12)


def test_rescale_homogeneous():
    g = BlowupTarget.abs()
    t = rescale(g, [0.0], 0.5)
    np.testing.assert_allclose(t.values, np.abs(grid_points(1, t.res)[:, 0]), atol=1e-15)


def test_rescale_leaves_domain():
    with pytest.raises(InvalidInput):
        rescale(BlowupTarget.abs(), [0.9], 0.5)


def test_sup_distance_identity_abs():
    a = BlowupTarget.identity().to_grid()
    b = BlowupTarget.abs().to_grid()
    d, e = sup_distance(a, b)
    assert d == 2.0
    assert e >= 0


def test_sup_distance_self():
    a = BlowupTarget.abs().to_grid()
    assert sup_distance(a, a)[0] == 0.0


def test_refinement_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f, g = lip1_pwl(rng), lip1_pwl(rng)
        a, b = grid_of(f, 17), grid_of(g, 17)
        d, e = sup_distance(a, b)
        dense = np.linspace(-1, 1, 1601)
        true = np.max(np.abs(f(dense) - g(dense)))
        assert d <= true + 1e-12
        assert true <= d + e + 1e-12


def test_refinement_never_loosens():
    rng = np.random.default_rng(1)
    for _ in range(20):
        f, g = lip1_pwl(rng), lip1_pwl(rng)
        d1, e1 = sup_distance(grid_of(f, 17), grid_of(g, 17))
        d2, e2 = sup_distance(grid_of(f, 33), grid_of(g, 33))
        assert d2 + e2 <= d1 + e1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (grid_of(lip1_pwl(rng)) for _ in range(3))
    ab = sup_distance(a, b)[0]
    assert ab == sup_distance(b, a)[0]
    assert ab <= sup_distance(a, c)[0] + sup_distance(c, b)[0] + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-0.4, 0.4), st.floats(0.01, 0.5))
def test_rescale_lipschitz(seed, x, r):
    g = lip1_pwl(np.random.default_rng(seed))
    t = rescale(g, [x], r)
    slopes = np.abs(np.diff(t.values)) / t.spacing
    assert slopes.max() <= 1 + 1e-9


def test_scan_linear_vs_linear():
    g = PwlFunction([-3, 3], [-1.5, 1.5], (-3, 3))
    target = BlowupTarget.identity(0.5).to_grid()
    rows = scan_blowups(g, [0.2], [0.5, 0.1, 0.01], target)
    assert all(d <= 1e-12 for _, d, _ in rows)


def test_scan_radii_must_decrease():
    with pytest.raises(InvalidInput):
        scan_blowups(BlowupTarget.abs(), [0.0], [0.1, 0.2], BlowupTarget.abs().to_grid())


def test_en_mass_exact_match():
    m = LebesgueDensity([-1], [1])
    g = PwlFunction([-3, 3], [-3, 3], (-3, 3))
    target = BlowupTarget.identity().to_grid()
    probes = [([0.0], [0.1])]
    frac, rep = estimate_En_mass(m, g, target, 4, probes)
    k, r, d, up, ball, best = rep.rows[0]
    assert d <= 1e-12
    # the ball has radius rho (1/n - certified distance) / (2 Lip)
    assert ball == pytest.approx(r * (0.25 - up) / 2, rel=1e-12)
    assert frac == pytest.approx(2 * ball / 2, rel=1e-12)


def test_en_mass_nothing_certified():
    m = LebesgueDensity([-1], [1])
    g = BlowupTarget.abs()
    target = BlowupTarget.identity().to_grid()
    frac, _ = estimate_En_mass(m, g, target, 4, [([0.0], [0.1])])
    assert frac == 0.0


def test_en_mass_atoms():
    m = Atomic([[0.0], [0.5]], [1, 1])
    g = PwlFunction([-3, 3], [0, 0], (-3, 3))
    target = PwlFunction.zero((-1, 1))
    target = BlowupTarget.from_pwl(target).to_grid()
    frac, _ = estimate_En_mass(m, g, target, 2, [([0.0], [0.1]), ([0.5], [0.1])])
    assert frac == 1.0


def test_en_mass_monotone_in_probes(cantor):
    g = PwlFunction([-3, 3], [0, 0], (-3, 3))
    target = BlowupTarget.from_pwl(PwlFunction.zero((-1, 1))).to_grid()
    xs = np.random.default_rng(2).uniform(0, 1, 40)
    prev = 0.0
    for k in range(1, 41, 5):
        frac, _ = estimate_En_mass(cantor, g, target, 4, [([x], [0.05]) for x in xs[:k]])
        assert frac >= prev - 1e-15
        prev = frac


def test_en_mass_2d():
    m = LebesgueDensity([0, 0], [1, 1])
    g = GridFunction.from_callable(lambda y: np.zeros(len(y)), 2, 65, lip=0.0)

    class Zero:
        lip = 1.0
        dim = 2

        @staticmethod
        def eval(x):
            return np.zeros(len(np.atleast_2d(x)))

    frac, rep = estimate_En_mass(m, Zero(), g, 4, [([0.5, 0.5], [0.2])])
    half = rep.rows[0][4] / math.sqrt(2)
    assert half > 0
    assert frac == pytest.approx((2 * half) ** 2, rel=1e-9)


def _h2(fn, res=17):
    return GridFunction.from_callable(fn, 2, res, lip=math.sqrt(2))


def test_decompose_exact_split():
    h = _h2(lambda y: y[:, 0] + np.abs(y[:, 1]))
    dec = admissible_decompose(h, Subspace.coordinate([0], 2))
    assert dec.L[0] == pytest.approx(1.0, abs=1e-9)
    assert dec.residual <= 1e-9
    ys = grid_points(2, 17)
    np.testing.assert_allclose(dec.m.values.ravel(), np.abs(ys[:, 1]), atol=1e-15)


def test_decompose_abs_not_admissible():
    h = _h2(lambda y: np.abs(y[:, 0]))
    dec = admissible_decompose(h, Subspace.coordinate([0], 2))
    assert dec.residual >= 0.5 - dec.error_bound


def test_decompose_linear():
    h = _h2(lambda y: 0.3 * y[:, 0] - 0.2 * y[:, 1])
    dec = admissible_decompose(h, Subspace.coordinate([0], 2))
    assert dec.residual <= 1e-9
    np.testing.assert_allclose(dec.m.values.ravel(), -0.2 * grid_points(2, 17)[:, 1], atol=1e-15)


def test_decompose_beats_random_candidates():
    rng = np.random.default_rng(4)
    h = _h2(lambda y: np.sin(2 * y[:, 0]) / 2 + np.abs(y[:, 1]) * 0.5)
    dec = admissible_decompose(h, Subspace.coordinate([0], 2))
    ys = grid_points(2, 17)
    base = (h.values - dec.m.values).ravel()
    for L in rng.uniform(-2, 2, 1000):
        assert dec.residual <= np.max(np.abs(base - L * ys[:, 0])) + 1e-12
