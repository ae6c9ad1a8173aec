import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoext.errors import KindMismatch, ValidationError
from isoext.ergodic_lab.harmonics import (MAX_DEGREE, degree_basis, gauss_sphere_grid, midpoint_sphere_grid,
                                          sph_harm)
from isoext.ergodic_lab.observables import Observable
from isoext.trig import TrigPoly

LM = [(l, m) for l in range(MAX_DEGREE + 1) for m in range(-l, l + 1)]


def test_harmonics_orthonormal_on_gauss_grid():
    P, W = gauss_sphere_grid(2 * MAX_DEGREE + 2)
    assert abs(W.sum() - 1) < 1e-14
    Y = np.stack([sph_harm(l, m, P) for l, m in LM])
    G = (np.conj(Y) * W) @ Y.T
    assert np.max(np.abs(G - np.eye(len(LM)))) < 1e-12


def test_low_degree_closed_forms():
    rng = np.random.default_rng(3)
    P = rng.normal(size=(50, 3))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    x, y, z = P.T
    assert np.allclose(sph_harm(0, 0, P), 1.0)
    assert np.allclose(sph_harm(1, 0, P), np.sqrt(3) * z)
    # Condon-Shortley phase
    assert np.allclose(sph_harm(1, 1, P), -np.sqrt(1.5) * (x + 1j * y))
    assert np.allclose(sph_harm(2, 0, P), np.sqrt(5) * (3 * z * z - 1) / 2)


@given(st.sampled_from(LM))
def test_negative_order_conjugation(lm):
    l, m = lm
    P, _ = midpoint_sphere_grid(6)
    assert np.allclose(sph_harm(l, -m, P), (-1) ** m * np.conj(sph_harm(l, m, P)), atol=1e-12)


def test_degree_cap():
    with pytest.raises(ValueError):
        sph_harm(MAX_DEGREE + 1, 0, np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValidationError):
        Observable(vertical=(9, 0))
    assert len(degree_basis(3)) == 7


def test_midpoint_grid_weights():
    P, W = midpoint_sphere_grid(16)
    assert P.shape == (512, 3) and abs(W.sum() - 1) < 1e-14
    assert np.allclose(np.linalg.norm(P, axis=1), 1)


@settings(max_examples=60)
@given(st.integers(-3, 3), st.integers(-3, 3), st.sampled_from([0.0, 0.5, -1.25, 2.0]),
       st.one_of(st.none(), st.integers(-3, 3)), st.sampled_from([0.0, 0.3, -0.7]))
def test_zero_average_flag_matches_quadrature(c1, c2, a0, vert, b):
    # mean over torus x circle by an exact grid quadrature
    base = TrigPoly(a0, [(1, 0, b, 0.0)])
    u = Observable(base, (c1, c2), vert)
    g = (np.arange(16) + 0.25) / 16
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    th = 2 * np.pi * np.arange(16) / 16
    vals = u(X[:, None, :], th[None, :], "circle")
    mean = abs(vals.mean())
    assert u.zero_average == (mean < 1e-12)


def test_vertical_kinds():
    th = np.array([0.3, 1.1])
    assert np.allclose(Observable(vertical=2).vertical_values(th, "circle"), np.exp(2j * th))
    with pytest.raises(KindMismatch):
        Observable(vertical=(1, 0)).vertical_values(th, "circle")
    with pytest.raises(KindMismatch):
        Observable(vertical=1).vertical_values(np.array([[0, 0, 1.0]]), "sphere")
    # torus coordinate of a z rotation by psi is psi
    psi = 0.9
    q = np.array([np.cos(psi / 2), 0, 0, np.sin(psi / 2)])
    assert np.isclose(Observable(vertical=1).vertical_values(q, "rotation"), np.exp(1j * psi))


def test_observable_dict_round_trip():
    u = Observable(TrigPoly(0.5, [(1, 2, 0.1, -0.2)]), (1, -1), (2, 1), 3)
    assert Observable.from_dict(u.to_dict()) == u
