"""Spherical harmonics normalised to the probability measure on S^2.

Y_l^m(theta, phi) = q_l^m(cos theta) e^{i m phi} with the Condon-Shortley
phase and mean(|Y_l^m|^2) = 1.  q is built by the standard three-term
recurrence in l at fixed m, which is stable for the degrees used here.
"""
from __future__ import annotations

import numpy as np

MAX_DEGREE = 8


def _check(l: int, m: int):
    if not (0 <= l <= MAX_DEGREE) or abs(m) > l:
        raise ValueError(f"need 0 <= l <= {MAX_DEGREE} and |m| <= l, got (l, m) = ({l}, {m})")


def legendre_normalised(l: int, m: int, x) -> np.ndarray:
    """q_l^m(x) for m >= 0."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    c = np.sqrt(np.prod([(2 * k - 1) / (2 * k) for k in range(1, m + 1)])) if m else 1.0
    qmm = (-1) ** m * np.sqrt(2 * m + 1) * c * s ** m
    if l == m:
        return qmm
    prev, cur = qmm, np.sqrt(2 * m + 3) * x * qmm
    for ll in range(m + 2, l + 1):
        a = np.sqrt((4 * ll * ll - 1) / (ll * ll - m * m))
        a_prev = np.sqrt((4 * (ll - 1) ** 2 - 1) / ((ll - 1) ** 2 - m * m))
        prev, cur = cur, a * (x * cur - prev / a_prev)
    return cur


def sph_harm(l: int, m: int, P) -> np.ndarray:
    """Y_l^m at unit vectors P (..., 3)."""
    _check(l, m)
    P = np.asarray(P, dtype=float)
    z = np.clip(P[..., 2], -1.0, 1.0)
    phi = np.arctan2(P[..., 1], P[..., 0])
    q = legendre_normalised(l, abs(m), z)
    y = q * np.exp(1j * abs(m) * phi)
    if m < 0:
        y = (-1) ** m * np.conj(y)
    return y


def degree_basis(l: int) -> list[tuple[int, int]]:
    return [(l, m) for m in range(-l, l + 1)]


def gauss_sphere_grid(degree: int):
    """Nodes and weights (summing to 1) exact for polynomials of total degree <= degree."""
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    nphi = degree + 1
    phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
    s = np.sqrt(1 - x * x)
    P = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                  np.repeat(x[:, None], nphi, axis=1)], axis=-1).reshape(-1, 3)
    W = np.repeat(w / 2, nphi) / nphi
    return P, W


def midpoint_sphere_grid(n_theta: int):
    """Midpoint rule in theta times uniform phi (2 n_theta nodes); weights normalised to 1."""
    th = np.pi * (np.arange(n_theta) + 0.5) / n_theta
    nphi = 2 * n_theta
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sin(th)
    P = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                  np.repeat(np.cos(th)[:, None], nphi, axis=1)], axis=-1).reshape(-1, 3)
    W = np.repeat(st, nphi)
    return P, W / W.sum()
