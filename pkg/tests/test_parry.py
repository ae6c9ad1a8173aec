import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoext.base_dynamics import CAT_MAP, step, torus_distance
from isoext.errors import LeafRadiusExceeded
from isoext.extension import Cocycle, SkewProduct
from isoext.fiber_groups import CircleElement, RotationElement, bi_invariant_distance, circle_dist, haar_sample
from isoext.parry import (ParryWord, anchor_element, classify_closure, conjugation_identity_check,
                          enumerate_homoclinic, generate_group, long_product_element, orbit_and_isotropy,
                          parry_element, principal_flags, word_element)
from isoext.trig import TrigPoly

TWO_PI = 2 * np.pi
GOLDEN = 0.6180339887
CIRC = SkewProduct(CAT_MAP, Cocycle.circle(0.9, [(1, 0, 0.3, 0.0)]))
ROT = SkewProduct(CAT_MAP, Cocycle.rotation([TrigPoly(0.4, [(1, 0, 0.3, 0.0), (0, 1, 0.0, 0.2)]),
                                             TrigPoly(-0.2, [(0, 1, 0.25, 0.0)]),
                                             TrigPoly(0.7, [(1, 1, 0.0, 0.15)])]))
R1 = enumerate_homoclinic(CAT_MAP, 1)
R2 = enumerate_homoclinic(CAT_MAP, 2)


def zrot(a):
    return RotationElement.from_axis_angle((0, 0, 1), a)


def test_homoclinic_radius_zero_is_empty():
    assert enumerate_homoclinic(CAT_MAP, 0) == []


def test_homoclinic_r1_against_linear_solve():
    # oracle: p = t v_u = k + s v_s for every nonzero k with |k|_inf <= 1
    E = np.column_stack([CAT_MAP.v_u, CAT_MAP.v_s])
    want = {}
    for k in itertools.product(range(-1, 2), repeat=2):
        if k != (0, 0):
            t, ms = np.linalg.solve(E, np.array(k, dtype=float))
            want[k] = (t, -ms)
    assert len(R1) == 8
    got = {tuple(int(v) for v in h.k): (h.t, h.s) for h in R1}
    assert set(got) == set(want)
    for k, (t, s) in want.items():
        assert got[k][0] == pytest.approx(t, abs=1e-13) and got[k][1] == pytest.approx(s, abs=1e-13)
    # frozen golden values
    assert sorted(round(abs(h.t), 10) for h in R1) == [0.3249196962, 0.3249196962, 0.5257311121, 0.5257311121,
                                                       0.8506508084, 0.8506508084, 1.3763819205, 1.3763819205]
    assert all(h.transit == 3 for h in R1)
    assert len(R2) == 24


@pytest.mark.parametrize("h", R2)
def test_homoclinic_orbit_contracts_to_anchor(h):
    p = h.p
    d6 = torus_distance(step(CAT_MAP, p, 6), (0, 0))
    d12 = torus_distance(step(CAT_MAP, p, 12), (0, 0))
    assert d12 < d6 * CAT_MAP.lambda_s ** 5 * 1.01
    assert torus_distance(step(CAT_MAP, p, -12), (0, 0)) < torus_distance(step(CAT_MAP, p, -6), (0, 0))


def test_constant_cocycle_parry_elements():
    a = 0.77
    sp = SkewProduct(CAT_MAP, Cocycle.constant("circle", a))
    assert anchor_element(sp).theta == pytest.approx(a)
    for h in R2:
        assert circle_dist(parry_element(sp, h, 1e-10).theta, (h.transit * a) % TWO_PI) < 1e-12


@pytest.mark.parametrize("sp", [CIRC, ROT], ids=["circle", "rotation"])
def test_parry_against_long_product(sp):
    for h in R2[:10]:
        g = parry_element(sp, h, 1e-12)
        assert bi_invariant_distance(g, long_product_element(sp, h, 400)) < 1e-11


def test_parry_tolerance_is_cauchy():
    for h in R1:
        for tol in (1e-4, 1e-6, 1e-8):
            assert bi_invariant_distance(parry_element(ROT, h, tol), parry_element(ROT, h, tol / 2)) < tol


def test_words():
    assert bi_invariant_distance(word_element(ROT, ParryWord(), R1, 1e-10), RotationElement([1, 0, 0, 0])) == 0
    g = word_element(CIRC, ParryWord(((0, 2), ("*", 1))), R1, 1e-10)
    want = (2 * parry_element(CIRC, R1[0], 1e-10).theta + anchor_element(CIRC).theta) % TWO_PI
    assert circle_dist(g.theta, want) < 1e-12


def test_conjugation_identity():
    tol = 1e-8
    const = SkewProduct(CAT_MAP, Cocycle.constant("circle", 1.1))
    checked = 0
    for h in R2[:10]:
        assert conjugation_identity_check(ROT, h, (0, 0), tol) == 0.0
        for k in [(1, -1), (2, -1), (1, 1), (3, -3)]:
            # a shift may push a representative outside the local leaf radius
            try:
                dc = conjugation_identity_check(const, h, k, tol)
                dr = conjugation_identity_check(ROT, h, k, tol)
            except LeafRadiusExceeded:
                continue
            assert dc < 1e-13 and dr <= 5 * tol
            checked += 1
    assert checked >= 20


def test_generate_group_golden_counts():
    assert len(generate_group([CircleElement(0.0)], 5, 1e-7)) == 1
    for L in (4, 5, 30):
        assert len(generate_group([CircleElement(TWO_PI / 5)], L, 1e-7)) == 5
    # two generic rotations generate a free group: 1 + 4 (3^8 - 1) / 2 reduced words of length <= 8
    for seed in (0, 1, 2):
        S = generate_group(haar_sample("rotation", seed, 2), 8, 1e-7, 20000)
        assert len(S) == 13121 and not S.saturated
    S = generate_group(haar_sample("rotation", 0, 2), 8, 1e-7, 500)
    assert len(S) == 500


def test_constant_cocycle_law():
    a = TWO_PI * 0.1234567
    L = 25
    S = generate_group([CircleElement(a)], L, 1e-9)
    want = np.sort(np.mod(a * np.arange(-L, L + 1), TWO_PI))
    assert len(S) == len(want)
    assert np.max(np.abs(np.sort(S.elements) - want)) < 1e-9


def test_trichotomy():
    def label(S, eps=0.05, ctl=1e-6):
        return classify_closure(S, density_eps=eps, closure_tol=ctl).label()
    three = generate_group([CircleElement(TWO_PI / 3)], 10, 1e-7)
    gold = generate_group([CircleElement(TWO_PI * GOLDEN)], 200, 1e-7)
    axial = generate_group([zrot(TWO_PI * 0.61803), zrot(TWO_PI * 0.31831)], 40, 1e-7)
    assert label(three) == "Finite(3, cyclic)"
    assert label(gold) == "FullGroup"
    assert label(axial) == "OneParameterSubgroup(0.000000, 0.000000, 1.000000)"
    for S in (three, gold, axial):
        assert label(S, 0.025, 5e-7) == label(S)
    short = generate_group([CircleElement(TWO_PI * GOLDEN)], 5, 1e-7)
    assert label(short) == "Indeterminate"


@given(n=st.integers(1, 12), kind=st.sampled_from(["circle", "rotation"]))
@settings(max_examples=20, deadline=None)
def test_finite_cyclic_verdict_is_stable(n, kind):
    g = CircleElement(TWO_PI / n) if kind == "circle" else RotationElement.from_axis_angle((1, 2, 2), TWO_PI / n)
    S = generate_group([g], n + 2, 1e-7)
    a = classify_closure(S, density_eps=0.05, closure_tol=1e-6)
    b = classify_closure(S, density_eps=0.025, closure_tol=5e-7)
    assert a.verdict == b.verdict == "Finite" and a.order == b.order == n


def test_rotation_finite_groups():
    i = RotationElement.from_axis_angle((0, 0, 1), np.pi / 2)
    j = RotationElement.from_axis_angle((1, 0, 0), np.pi / 2)
    rep = classify_closure(generate_group([i, j], 12, 1e-7))
    assert rep.label() == "Finite(24, octahedral)"
    k = RotationElement.from_axis_angle((1, 0, 0), np.pi)
    rep = classify_closure(generate_group([RotationElement.from_axis_angle((0, 0, 1), TWO_PI / 5), k], 12, 1e-7))
    assert rep.label() == "Finite(10, dihedral)"


def test_orbit_and_isotropy():
    ident = generate_group([RotationElement([1, 0, 0, 0])], 3, 1e-7)
    r = orbit_and_isotropy(ident, np.array([0.0, 0.6, 0.8]))
    assert len(r.orbit) == 1 and r.principal
    S = generate_group([zrot(TWO_PI * GOLDEN)], 60, 1e-7, 1000)
    pole = orbit_and_isotropy(S, np.array([0.0, 0.0, 1.0]))
    assert len(pole.orbit) == 1 and len(pole.stabilizer) == len(S) and not pole.principal
    eq = orbit_and_isotropy(S, np.array([1.0, 0.0, 0.0]))
    assert len(eq.stabilizer) == 1 and eq.principal
    assert np.allclose(np.asarray(eq.orbit)[:, 2], 0.0, atol=1e-12)


def test_principal_points_fill_sphere():
    S = generate_group([zrot(TWO_PI * GOLDEN)], 60, 1e-7, 1000)
    v = np.random.default_rng(4).standard_normal((2000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert principal_flags(S, v).mean() > 0.999
