import numpy as np
import pytest

from isoext.acceptance import CIRCLE_TWIST, SPHERE_TWIST, axial_sphere, parry_generators, z_rotations
from isoext.base_dynamics import CAT_MAP
from isoext.errors import NotInvariant, ValidationError
from isoext.extension import Cocycle, SkewProduct
from isoext.fiber_groups import CircleElement, RotationElement, haar_sample_array, qmul, qrotate
from isoext.parry import classify_closure, generate_group
from isoext.ergodic_lab.harmonics import gauss_sphere_grid, sph_harm
from isoext.ergodic_lab.invariants import (anchor_transport, base_grid, build_Q_bundle, distinct_count,
                                           extend_invariant, fixed_vector_space, hausdorff, wigner_matrix)
from isoext.ergodic_lab.observables import Observable
from isoext.trig import TrigPoly

TWO_PI = 2 * np.pi
GOLDEN = 0.6180339887


@pytest.fixture(scope="module")
def axial():
    sp = axial_sphere()
    _, gens = parry_generators(sp, 1, 1e-10)
    return sp, generate_group(gens, 12, 1e-7, 5000)


def test_constant_function_extends_exactly(axial):
    sp, S = axial
    r = extend_invariant(sp, Observable(), S, base_grid_size=4, fiber_grid=8)
    assert r.path_defect == 0 and r.invariance_defect == 0
    assert r.norm_defect < 1e-14 and r.orbit_variation == 0


def test_polar_harmonic_defects(axial):
    sp, S = axial
    r = extend_invariant(sp, Observable(vertical=(1, 0)), S, base_grid_size=4, fiber_grid=32)
    assert r.max_defect < 1e-3
    assert abs(r.norm_reference - 1) < 1e-12


def test_non_invariant_harmonic_rejected(axial):
    sp, S = axial
    with pytest.raises(NotInvariant):
        extend_invariant(sp, Observable(vertical=(1, 1)), S, base_grid_size=2, fiber_grid=4)


def test_coboundary_transport_is_route_independent():
    # A = e^{beta(Tx)} e^{-beta(x)}: every holonomy is a coboundary, so both routes give e^{beta(x)}
    sp = SkewProduct(CAT_MAP, Cocycle.rotation([TrigPoly(0.0)] * 3, twist=SPHERE_TWIST), fiber="sphere")
    K = base_grid(4)
    a = anchor_transport(sp, K, 1e-10, "us")
    b = anchor_transport(sp, K, 1e-10, "su")
    d = np.minimum(np.abs(a - b).max(axis=1), np.abs(a + b).max(axis=1))
    assert d.max() < 1e-8
    with pytest.raises(ValidationError):
        anchor_transport(sp, K, 1e-10, "sideways")


def test_wigner_matrices_are_unitary_representations():
    rng = np.random.default_rng(2)
    g = RotationElement.from_axis_angle(rng.normal(size=3), 0.8).q
    h = RotationElement.from_axis_angle(rng.normal(size=3), 2.1).q
    for l in (1, 2, 3):
        D = wigner_matrix(g, l)
        assert np.allclose(D.conj().T @ D, np.eye(2 * l + 1), atol=1e-12)
        assert np.allclose(wigner_matrix(qmul(g, h), l), D @ wigner_matrix(h, l), atol=1e-12)


def test_fixed_dimensions_circle():
    L = 3
    triv = generate_group([CircleElement(0.0)], 4, 1e-7, 100)
    full = generate_group([CircleElement(TWO_PI * GOLDEN)], 200, 1e-7, 20000)
    third = generate_group([CircleElement(TWO_PI / 3)], 10, 1e-7, 100)
    assert fixed_vector_space(triv, "circle", L).dimension == 2 * L + 1
    assert fixed_vector_space(full, "circle", L).dimension == 1
    # C_3 fixes the characters k = 0, +-3
    assert fixed_vector_space(third, "circle", L).labels == [-3, -2, -1, 0, 1, 2, 3]
    assert fixed_vector_space(third, "circle", L).per_degree == {0: 1, 1: 0, 2: 0, 3: 2}


def test_axial_fixed_space_is_zonal():
    S = generate_group(z_rotations([TWO_PI * 0.61803, TWO_PI * 0.31831]), 12, 1e-7, 20000)
    fs = fixed_vector_space(S, "sphere", 2)
    assert fs.dimension == 3 and fs.per_degree == {0: 1, 1: 1, 2: 1}
    zonal = np.array([m == 0 for _, m in fs.labels])
    assert np.all(np.abs(fs.basis[~zonal]) < 1e-10)
    # explicit averaging oracle: the group average of Y_l^m is (m == 0) Y_l^m
    P, _ = gauss_sphere_grid(8)
    for l, m in fs.labels:
        avg = np.mean([sph_harm(l, m, qrotate(q[None, :], P)) for q in S.elements[:2000]], axis=0)
        assert np.allclose(avg, sph_harm(l, m, P) if m == 0 else 0, atol=0.02)


def test_polyhedral_invariant_counts():
    # Molien counts: octahedral invariants in degrees 0 and 4, tetrahedral in 0, 3 and 4
    up = RotationElement.from_axis_angle((0, 0, 1), TWO_PI / 4)
    side = RotationElement.from_axis_angle((1, 0, 0), TWO_PI / 4)
    O = generate_group([up, side], 12, 1e-7, 1000)
    assert len(O) == 24
    assert fixed_vector_space(O, "sphere", 4).per_degree == {0: 1, 1: 0, 2: 0, 3: 0, 4: 1}
    corner = RotationElement.from_axis_angle((1, 1, 1), TWO_PI / 3)
    flip = RotationElement.from_axis_angle((0, 0, 1), np.pi)
    T = generate_group([corner, flip], 12, 1e-7, 1000)
    assert len(T) == 12
    assert fixed_vector_space(T, "sphere", 4).per_degree == {0: 1, 1: 0, 2: 0, 3: 1, 4: 1}


def test_hausdorff_and_distinct_count():
    a = np.array([0.0, 1.0, 2.0])
    assert hausdorff("circle", a, a + TWO_PI) < 1e-12
    assert abs(hausdorff("circle", a, np.array([0.0, 1.0])) - 1.0) < 1e-12
    assert distinct_count("circle", np.array([0.5, 0.5 + 1e-9, 0.5 + TWO_PI, 3.0])) == 2


def circle_bundle(alpha):
    sp = SkewProduct(CAT_MAP, Cocycle.circle(alpha, [], twist=CIRCLE_TWIST))
    hs, gens = parry_generators(sp, 1, 1e-10)
    S = generate_group(gens, 200, 1e-7, 20000)
    rep = classify_closure(S, density_eps=0.05, closure_tol=1e-6)
    return sp, hs, S, rep


def test_bundle_trivial_cocycle():
    sp = SkewProduct(CAT_MAP, Cocycle.constant("circle", 0.0))
    hs, gens = parry_generators(sp, 1, 1e-10)
    S = generate_group(gens, 4, 1e-7, 100)
    B = build_Q_bundle(sp, 0.7, hs, S, 1e-8, classify_closure(S), 20)
    assert np.all(B.hausdorff == 0) and all(c == 1 for c in B.cardinality)
    assert all(np.allclose(q, 0.7) for q in B.unstable_route)


def test_bundle_finite_three():
    sp, hs, S, rep = circle_bundle(TWO_PI / 3)
    assert rep.verdict == "Finite" and len(S) == 3
    B = build_Q_bundle(sp, 0.7, hs, S, 1e-8, rep, 20)
    assert B.passed and all(c == 3 for c in B.cardinality)
    assert B.resolution == 0


def test_bundle_full_circle():
    sp, hs, S, rep = circle_bundle(TWO_PI * GOLDEN)
    assert rep.verdict == "FullGroup"
    B = build_Q_bundle(sp, 0.7, hs, S, 1e-8, rep, 20)
    assert B.passed and 0 < B.resolution < 0.05


def test_bundle_full_group_on_sphere():
    comps = [TrigPoly(1.1, [(1, 0, 0.6, 0.0)]), TrigPoly(-0.4, [(0, 1, 0.7, 0.0)]),
             TrigPoly(0.8, [(1, 1, 0.0, 0.5)])]
    sp = SkewProduct(CAT_MAP, Cocycle.rotation(comps), fiber="sphere")
    hs, gens = parry_generators(sp, 1, 1e-10)
    # one Parry element and the anchor element; an eps = 0.3 net of SO(3) fits under the cap
    S = generate_group([gens[0], gens[-1]], 200, 1e-7, 20000)
    rep = classify_closure(S, density_eps=0.3, closure_tol=1e-6)
    assert rep.verdict == "FullGroup"
    p = np.array([0.3, -0.5, 0.81])
    p /= np.linalg.norm(p)
    B = build_Q_bundle(sp, p, hs, S, 1e-8, rep, 20)
    assert B.passed
    # oracle: orbit of p under fresh Haar rotations, i.e. (a dense sample of) the whole sphere
    fresh = qrotate(haar_sample_array("rotation", np.random.default_rng(8), 20000), p[None, :])
    for Q in B.unstable_route + B.stable_route:
        assert hausdorff("sphere", Q, fresh) < 0.3


def test_bundle_needs_points():
    sp, hs, S, rep = circle_bundle(TWO_PI / 3)
    with pytest.raises(ValidationError):
        build_Q_bundle(sp, 0.7, [], S, 1e-8, rep, 20)
    with pytest.raises(ValidationError):
        build_Q_bundle(sp, 0.7, hs[:1], S, 1e-8, rep, 1000)
