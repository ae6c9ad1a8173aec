import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoext.base_dynamics import CAT_MAP, TorusPoint, leaf_point, step
from isoext.errors import NotOnStableLeaf, ValidationError
from isoext.extension import (Cocycle, SkewProduct, central_holonomy, circle_increment, extend_step,
                              holonomy_partials, leaf_holonomy, stable_holonomy, unstable_holonomy)
from isoext.fiber_groups import (CircleElement, RotationElement, bi_invariant_distance, circle_dist, compose,
                                 haar_sample, qdist, qrotate)
from isoext.trig import TrigPoly

TAU = Cocycle.circle(0.0, [(1, 0, 0.3, 0.0)])
CIRC = SkewProduct(CAT_MAP, TAU)
ROT = SkewProduct(CAT_MAP, Cocycle.rotation([TrigPoly(0.4, [(1, 0, 0.3, 0.0), (0, 1, 0.0, 0.2)]),
                                             TrigPoly(-0.2, [(0, 1, 0.25, 0.0)]),
                                             TrigPoly(0.7, [(1, 1, 0.0, 0.15)])]))
TWISTED = SkewProduct(CAT_MAP, Cocycle.circle(0.5, [(1, 0, 0.3, 0.0)], twist=TrigPoly(0.0, [(0, 1, 0.0, 0.4)])))


def mp_holonomy(x, s, which, depth=80):
    """High-precision partial sum of tau(T^j y) - tau(T^j x) along the exact leaf."""
    with mp.workdps(60):
        r5 = mp.sqrt(5)
        lam = (3 - r5) / 2 if which == "stable" else (3 + r5) / 2
        # eigenvector of [[2,1],[1,1]] for lam: (1, lam - 2), normalised
        v = mp.matrix([1, lam - 2])
        v = v / mp.norm(v)
        if which == "stable":
            ref = CAT_MAP.v_s
        else:
            ref = CAT_MAP.v_u
        if float(v[0]) * ref[0] + float(v[1]) * ref[1] < 0:
            v = -v
        X = mp.matrix([mp.mpf(x[0]), mp.mpf(x[1])])
        total = mp.mpf(0)
        for j in range(depth):
            if which == "stable":
                Xj = X
                Yj = X + s * lam ** j * v
                X = mp.matrix([(2 * X[0] + X[1]) % 1, (X[0] + X[1]) % 1])
                total += 0.3 * mp.cos(2 * mp.pi * Xj[0]) - 0.3 * mp.cos(2 * mp.pi * Yj[0])
            else:
                X = mp.matrix([(X[0] - X[1]) % 1, (-X[0] + 2 * X[1]) % 1])
                Yj = X + s * lam ** (-(j + 1)) * v
                total += 0.3 * mp.cos(2 * mp.pi * Yj[0]) - 0.3 * mp.cos(2 * mp.pi * X[0])
        return float(total % (2 * mp.pi))


def test_extend_step_trivial_cases():
    w = (TorusPoint(0.2, 0.3), CircleElement(1.0))
    assert extend_step(CIRC, w, 0) == w
    const = SkewProduct(CAT_MAP, Cocycle.constant("circle", 0.7))
    x, th = extend_step(const, (TorusPoint(0, 0), CircleElement(0.4)), 9)
    assert x == TorusPoint(0, 0)
    assert th.theta == pytest.approx((0.4 + 9 * 0.7) % (2 * np.pi), abs=1e-12)


def test_rotation_two_steps_compose():
    p = np.array([0.0, 0.6, 0.8])
    x = TorusPoint(0.1, 0.2)
    _, p2 = extend_step(SkewProduct(ROT.base, ROT.cocycle, "sphere"), (x, p), 2)
    A0 = RotationElement(ROT.A(x.as_array()))
    A1 = RotationElement(ROT.A(step(CAT_MAP, x, 1).as_array()))
    assert np.allclose(p2, compose(A1, A0).matrix @ p, atol=1e-14)
    x2, p_back = extend_step(SkewProduct(ROT.base, ROT.cocycle, "sphere"), (step(CAT_MAP, x, 2), p2), -2)
    assert x2 == x and np.allclose(p_back, p, atol=1e-14)


def test_holonomy_trivial_cases():
    x = TorusPoint(0.3, 0.4)
    h = stable_holonomy(CIRC, x, x, 1e-10)
    assert h.depth == 0 and h.element.theta == 0.0
    const = SkewProduct(CAT_MAP, Cocycle.constant("rotation", (0.1, 0.2, 0.3)))
    y = leaf_point(CAT_MAP, x, "stable", 0.2)
    assert qdist(stable_holonomy(const, x, y, 1e-10).element.q, [1, 0, 0, 0]) < 1e-14
    y = leaf_point(CAT_MAP, x, "unstable", 0.2)
    assert qdist(unstable_holonomy(const, x, y, 1e-10).element.q, [1, 0, 0, 0]) < 1e-14


def test_off_leaf_rejected():
    with pytest.raises(NotOnStableLeaf):
        stable_holonomy(CIRC, TorusPoint(0.1, 0.1), TorusPoint(0.2, 0.1), 1e-8)
    with pytest.raises(ValidationError):
        leaf_holonomy(CIRC, TorusPoint(0.1, 0.1), 0.1, "stable", 0.0)


@pytest.mark.parametrize("which", ["stable", "unstable"])
@pytest.mark.parametrize("x", [(0.0, 0.0), (0.37, 0.11)])
def test_holonomy_against_high_precision_sum(which, x):
    tol = 1e-12
    h = leaf_holonomy(CIRC, TorusPoint(*x), 0.1, which, tol)
    want = mp_holonomy(x, mp.mpf("0.1"), which)
    assert circle_dist(h.element.theta, want) <= tol + 1e-14
    assert h.residual <= h.certified_error


def test_central_holonomy():
    x = TorusPoint(0.1, 0.2)
    assert central_holonomy(ROT, x, 0).q.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert np.allclose(central_holonomy(ROT, x, 1).q, RotationElement(ROT.A(x.as_array())).q)
    g = RotationElement([1, 0, 0, 0])
    y = x
    for _ in range(5):
        _, g = extend_step(ROT, (y, g), 1)
        y = step(CAT_MAP, y, 1)
    assert qdist(central_holonomy(ROT, x, 5).q, g.q) < 1e-14


def test_increment_matches_difference():
    rng = np.random.default_rng(0)
    X = rng.random((100, 2))
    D = rng.normal(scale=0.01, size=(100, 2))
    for sp in (CIRC, TWISTED):
        want = np.angle(np.exp(1j * (sp.A(X + D) - sp.A(X))))
        assert np.allclose(circle_increment(sp, X, D), want, atol=1e-13)


@given(a=st.floats(0, 1, exclude_max=True), b=st.floats(0, 1, exclude_max=True),
       s1=st.floats(-0.12, 0.12), s2=st.floats(-0.12, 0.12), which=st.sampled_from(["stable", "unstable"]))
@settings(max_examples=30, deadline=None)
def test_holonomy_composes_along_leaf(a, b, s1, s2, which):
    tol = 1e-9
    x = TorusPoint(a, b)
    for sp in (CIRC, ROT, TWISTED):
        xy = leaf_holonomy(sp, x, s1, which, tol).element
        xz = leaf_holonomy(sp, x, s1 + s2, which, tol).element
        y = x.as_array() + s1 * (CAT_MAP.v_s if which == "stable" else CAT_MAP.v_u)
        yz = leaf_holonomy(sp, np.mod(y, 1.0), s2, which, tol).element
        assert bi_invariant_distance(xz, compose(yz, xy)) <= 3 * tol


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_holonomy_is_isometric_and_right_equivariant(seed):
    rng = np.random.default_rng(seed)
    x = TorusPoint(*rng.random(2))
    g = leaf_holonomy(ROT, x, rng.uniform(-0.2, 0.2), "stable", 1e-9).element
    a, b = haar_sample("rotation", rng, 2)
    assert bi_invariant_distance(compose(g, a), compose(g, b)) == pytest.approx(bi_invariant_distance(a, b),
                                                                               abs=1e-9)
    # left translation by the holonomy commutes with right translation R_h
    h = haar_sample("rotation", rng, 1)[0]
    lhs = compose(compose(g, a), h)
    rhs = compose(g, compose(a, h))
    assert bi_invariant_distance(lhs, rhs) < 1e-12
    P = np.array([[0, 0, 1.0], [0.6, 0.8, 0]])
    Q = qrotate(g.q, P)
    assert np.dot(Q[0], Q[1]) == pytest.approx(np.dot(P[0], P[1]), abs=1e-12)


def test_residual_below_certified_many_pairs():
    rng = np.random.default_rng(3)
    for sp in (CIRC, ROT, TWISTED):
        for _ in range(40):
            x = TorusPoint(*rng.random(2))
            for which in ("stable", "unstable"):
                h = leaf_holonomy(sp, x, rng.uniform(-0.25, 0.25), which, 1e-8)
                assert h.residual <= h.certified_error < 1e-8


def test_partials_rotation_shape():
    X = np.random.default_rng(1).random((5, 3, 2))
    H = holonomy_partials(ROT, X, np.array([0.1, 0.0, -0.1]), "stable")
    assert H.shape == (6, 3, 4)
    assert np.allclose(H[:, 1], [1, 0, 0, 0])
    assert np.allclose(np.linalg.norm(H, axis=-1), 1.0)
