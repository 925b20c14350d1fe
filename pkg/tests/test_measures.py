import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowupforge.errors import InvalidInput
from blowupforge.measures import (
    Atomic,
    BoxRegion,
    Cantor,
    LebesgueDensity,
    Product,
    Subspace,
    box_difference,
    dyadic_partition,
    frame_mass,
    integrate,
    load_measure,
    mass,
    measure_from_spec,
    tangent_measure,
)

from conftest import cantor_leaves


def test_lebesgue_box_volume(lebesgue2):
    assert mass(lebesgue2, BoxRegion.cube([0.25, 0.25], 0.25)) == pytest.approx(0.25, abs=1e-15)


def test_cantor_first_third(cantor):
    assert mass(cantor, BoxRegion([0], [1 / 3])) == 0.5


def test_atoms_in_box(atoms):
    assert mass(atoms, BoxRegion([0], [0.5])) == pytest.approx(0.7)


def test_cantor_middle_gap_is_empty(cantor):
    assert mass(cantor, BoxRegion([1 / 3], [2 / 3]), "open") == 0.0
    assert mass(cantor, BoxRegion([0.34], [0.66])) == 0.0


def test_cantor_triadic_endpoints_exact(cantor):
    # [0, 3^-k] carries 2^-k
    for k in range(1, 15):
        assert mass(cantor, BoxRegion([0], [3.0 ** -k])) == pytest.approx(2.0 ** -k, rel=1e-12)


def test_cantor_matches_leaf_enumeration(cantor):
    left, w, size = cantor_leaves(14)
    rng = np.random.default_rng(3)
    a = rng.uniform(-0.1, 1.1, 200)
    b = a + rng.uniform(0, 0.5, 200)
    got = cantor.mass_many(a[:, None], b[:, None])
    # a leaf straddling an endpoint is off by at most its weight
    full = np.array([w[(left >= lo) & (left + size <= hi)].sum() for lo, hi in zip(a, b)])
    part = np.array([w[(left + size >= lo) & (left <= hi)].sum() for lo, hi in zip(a, b)])
    assert np.all(got >= full - 1e-12)
    assert np.all(got <= part + 1e-12)


def test_weighted_cantor_total():
    m = Cantor(rho=Fraction(1, 4), weights=(Fraction(1, 3), Fraction(2, 3)))
    assert m.total_mass == pytest.approx(1.0)
    assert mass(m, BoxRegion([0], [0.25])) == pytest.approx(1 / 3)


def test_cantor_rejects_zero_weight():
    with pytest.raises(InvalidInput):
        Cantor(weights=(0, 1))


def test_frame_mass_lebesgue_closed_form():
    m = LebesgueDensity([-3, -3], [3, 3])
    assert frame_mass(m, [0.1, -0.2], 1.0, 0.1) == pytest.approx(4 * (1 - 0.81), rel=1e-12)


def test_frame_mass_atoms():
    m = Atomic([[0.0, 0.0]], [2.0])
    assert frame_mass(m, [0.0, 0.0], 0.5, 0.1) == 0.0
    m = Atomic([[0.5, 0.0]], [2.0])
    assert frame_mass(m, [0.0, 0.0], 0.5, 0.1) == 2.0


def test_product_factorizes(leb_cantor):
    lo = np.array([[0.1, 0.0], [0.3, 0.5]])
    hi = np.array([[0.6, 1 / 3], [0.9, 1.0]])
    got = leb_cantor.mass_many(lo, hi)
    c = Cantor()
    want = (hi[:, 0] - lo[:, 0]) * c.mass_many(lo[:, 1:], hi[:, 1:])
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_product_default_bundle(leb_cantor):
    assert leb_cantor.bundle.coordinate_axes() == [0]


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.2, 1.0), st.floats(0.01, 0.6), st.integers(0, 2))
def test_charge_mode_is_additive(a, w, which):
    m = [Cantor(), Atomic([[0.25], [0.5], [0.75]], [1, 2, 3]), LebesgueDensity([0], [1], [1, 3])][which]
    lo, hi = np.array([[a]]), np.array([[a + w]])
    mid = np.array([[a + w / 2]])
    parent = m.mass_many(lo, hi, "charge")[0]
    kids = m.mass_many(lo, mid, "charge")[0] + m.mass_many(mid, hi, "charge")[0]
    assert kids == pytest.approx(parent, abs=2 * m.query_tol + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(1e-6, 1), st.floats(0, 0.3), st.floats(0, 0.3))
def test_monotone(a, w, da, db):
    m = Cantor()
    lo, hi = a, a + w
    inner = m.mass(BoxRegion([lo], [hi]))
    outer = m.mass(BoxRegion([lo - da], [hi + db]))
    assert inner <= outer + m.query_tol


def test_dyadic_partition_sums(leb_cantor):
    box = BoxRegion([0, 0], [1, 1])
    lo, hi = dyadic_partition(box, 3)
    assert len(lo) == 64
    assert leb_cantor.mass_many(lo, hi, "charge").sum() == pytest.approx(1.0, abs=1e-12)


def test_integrate_constant(cantor):
    v = integrate(cantor, lambda p: np.ones(len(p)), BoxRegion([0], [1]), depth=5)
    assert v == pytest.approx(1.0)


def test_tangent_measure_lebesgue_uniform():
    m = LebesgueDensity([0, 0], [1, 1])
    g = tangent_measure(m, [0.5, 0.5], 0.1, res=4)
    np.testing.assert_allclose(g.masses, 0.25, rtol=1e-12)


def test_tangent_measure_far_from_atoms(atoms):
    g = tangent_measure(atoms, [0.5], 0.01, res=8)
    assert g.total == 0.0


def test_tangent_measure_cantor_recursion(cantor):
    left, w, size = cantor_leaves(16)
    for k in (2, 3, 4):
        r = 3.0 ** -k
        g = tangent_measure(cantor, [0.25], r, res=4)
        edges = 0.25 + r * g.edges
        want = np.array([w[(left >= edges[i]) & (left + size <= edges[i + 1])].sum() for i in range(4)]) / r
        np.testing.assert_allclose(g.masses, want, atol=2.0 ** -16 / r * 2)


def test_box_difference_covers_exactly():
    a = BoxRegion([0, 0], [1, 1])
    b = BoxRegion([0.25, 0.5], [0.5, 2.0])
    parts = box_difference(a, b)
    assert sum(p.volume for p in parts) == pytest.approx(1 - 0.125)


def test_subspace_complement():
    v = Subspace.coordinate([0], 3)
    c = v.complement()
    assert c.dim == 2
    np.testing.assert_allclose(v.projector + c.projector, np.eye(3), atol=1e-12)


def test_spec_roundtrip(tmp_path, leb_cantor):
    spec = leb_cantor.to_spec()
    p = tmp_path / "m.json"
    p.write_text(json.dumps(spec))
    m2 = load_measure(p)
    assert m2.spec_hash() == leb_cantor.spec_hash()


def test_bad_spec():
    with pytest.raises(InvalidInput):
        measure_from_spec({"kind": "nope"})
    with pytest.raises(InvalidInput):
        measure_from_spec({"kind": "lebesgue_density", "lo": [0]})
