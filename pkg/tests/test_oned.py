import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowupforge.blowup import grid_points, rescale
from blowupforge.errors import InvalidInput
from blowupforge.measures import Atomic, Cantor
from blowupforge.oned import BlowupTarget, PwlFunction, collapse, insert_target, prescribe_blowup_1d


def collapse_oracle(h, intervals, x):
    """h(x - length of (-inf, x) covered by the intervals), straight from the definition."""
    covered = np.zeros_like(x)
    for a, b in intervals:
        covered += np.clip(x, a, b) - a
    return h(x - covered)


def test_collapse_line():
    h = PwlFunction([0, 3], [0, 3])
    c = collapse(h, [[1, 2]])
    np.testing.assert_allclose(c([0, 1, 1.5, 2, 3]), [0, 1, 1, 1, 2])


def test_collapse_empty():
    h = PwlFunction([0, 1, 3], [0, 1, 0])
    c = collapse(h, [])
    np.testing.assert_array_equal(c.t, h.t)
    np.testing.assert_array_equal(c.v, h.v)


def test_collapse_tent_oracle():
    h = PwlFunction([0, 2, 4, 6], [0, 2, 0, 1])
    iv = [[0.5, 1.25], [2.5, 3.0]]
    x = np.linspace(0, 6, 2001)
    np.testing.assert_allclose(collapse(h, iv)(x), collapse_oracle(h, iv, x), atol=1e-12)


def test_collapse_rejects_overlap():
    with pytest.raises(InvalidInput):
        collapse(PwlFunction([0, 3], [0, 3]), [[0.5, 1.5], [1.0, 2.0]])


def test_insert_abs():
    base = PwlFunction.zero((-3, 3))
    r = insert_target(base, 0.0, 1.0, BlowupTarget.abs())
    x = np.linspace(-3, 3, 601)
    want = np.where(np.abs(x) <= 1, np.abs(x), np.maximum(0, 2 - np.abs(x)))
    np.testing.assert_allclose(r(x), want, atol=1e-15)


def test_insert_zero_target():
    base = PwlFunction([-3, -2, 2, 3], [0, 1, 1, 0])
    r = insert_target(base, 0.0, 0.5, BlowupTarget.from_pwl(PwlFunction.zero((-1, 1))))
    x = np.linspace(-3, 3, 601)
    np.testing.assert_allclose(r(x), base(x), atol=1e-15)


def test_insert_identity_rescales_exactly():
    base = PwlFunction.zero((-1, 2))
    f = BlowupTarget.identity()
    r = insert_target(base, 0.5, 1 / 8, f)
    t = rescale(r, [0.5], 1 / 8, res=101)
    np.testing.assert_allclose(t.values, grid_points(1, 101)[:, 0], atol=1e-15)


def test_insert_needs_flat_base():
    with pytest.raises(InvalidInput):
        insert_target(PwlFunction([-3, 3], [-3, 3]), 0.0, 0.5, BlowupTarget.abs())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_surgery_keeps_lipschitz(seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 10, 12))
    v = np.concatenate([[0.0], np.cumsum(rng.uniform(-1, 1, 11) * np.diff(t))])
    h = PwlFunction(t, v, (t[0], t[-1]))
    cuts = np.sort(rng.uniform(t[0], t[-1], 6)).reshape(3, 2)
    c = collapse(h, cuts)
    assert c.is_1_lipschitz()
    f = BlowupTarget.random(rng)
    for a, b in cuts:
        ell = (b - a) / 4
        c = insert_target(c, (a + b) / 2, ell, f, flat_tol=1e-12)
    assert c.is_1_lipschitz()


def test_prescribe_atoms():
    m = Atomic([[0.2], [0.5], [0.8]], [1, 1, 2])
    h, rep = prescribe_blowup_1d(m, BlowupTarget.abs(), 4, 0.1)
    assert rep.complete
    assert rep.achieved > 0.75
    assert rep.drift_total < 0.1
    assert h.is_1_lipschitz()
    for lv in rep.levels:
        assert lv.lipschitz_ok
        assert lv.drift <= lv.drift_bound + 1e-15


def test_prescribe_schedule():
    m = Atomic([[0.1], [0.35], [0.6]], [1, 1, 1])
    h, rep = prescribe_blowup_1d(m, BlowupTarget.abs(), 8, 0.2)
    alphas = [lv.alpha for lv in rep.levels]
    assert all(a >= 2 * b for a, b in zip(alphas, alphas[1:]))
    bounds = [lv.drift_bound for lv in rep.levels]
    assert all(bounds[j] >= sum(bounds[j + 1:]) for j in range(len(bounds)))


def test_prescribe_already_good():
    m = Atomic([[0.3]], [1.0])
    g0 = PwlFunction([-5, 5], [-5, 5])
    h, rep = prescribe_blowup_1d(m, BlowupTarget.identity(), 4, 0.1, g0=g0)
    assert rep.complete and not rep.levels
    assert rep.drift_total == 0.0


def test_prescribe_cantor_budget_reported(cantor):
    h, rep = prescribe_blowup_1d(cantor, BlowupTarget.abs(), 4, 0.1, max_windows=1000)
    assert not rep.complete
    assert "windows" in rep.stop_reason
    assert h.is_1_lipschitz()


def test_pwl_roundtrip():
    h = PwlFunction([0, 1, 2], [0, 0.5, 0.25], (0, 2))
    again = PwlFunction.from_json(h.to_json())
    np.testing.assert_array_equal(again.t, h.t)
    np.testing.assert_array_equal(again.v, h.v)
