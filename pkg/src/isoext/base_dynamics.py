"""Hyperbolic toral automorphisms, their leaves, and suspension flows.

Points of the torus are stored exactly as rationals ``num/den`` so that
iterating the map never amplifies rounding error.  Large Monte-Carlo
clouds use the ``dyadic_*`` helpers instead: coordinates are integers
modulo 2**64 and the integer matrix acts on them with wrap-around
arithmetic, which is again exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import NotHyperbolic, ValidationError
from .trig import TrigPoly

__all__ = [
    "TorusPoint",
    "HyperbolicToralMap",
    "RoofFunction",
    "SuspensionState",
    "CAT_MAP",
    "cat_map",
    "eigendata",
    "step",
    "step_array",
    "leaf_point",
    "leaf_coordinates",
    "torus_distance",
    "torus_displacement",
    "suspension_flow",
    "sample_lebesgue",
    "sample_lebesgue_array",
    "dyadic_sample",
    "dyadic_step",
    "dyadic_to_float",
    "reduce_unit",
]

SEAM_EPS = 1e-15
_DYADIC_BITS = 64
_DYADIC_DEN = 1 << _DYADIC_BITS


def reduce_unit(x):
    """Reduce to [0,1); values within 1e-15 of 1.0 become 0.0.

    Works elementwise on arrays.  floor() sends exact halves down to the
    lower representative, so 0.5 stays 0.5 and 1.5 becomes 0.5.
    """
    r = np.asarray(x, dtype=float) - np.floor(x)
    r = np.where(r >= 1.0 - SEAM_EPS, 0.0, r)
    return r if r.ndim else float(r)


def _as_ratio(v) -> tuple[int, int]:
    if isinstance(v, Fraction):
        return v.numerator, v.denominator
    if isinstance(v, (int, np.integer)):
        return int(v), 1
    f = float(v)
    if not math.isfinite(f):
        raise ValidationError(f"torus coordinate must be finite, got {v!r}")
    return f.as_integer_ratio()


class TorusPoint:
    """A point of R^2/Z^2 with exact rational coordinates.

    ``x1`` and ``x2`` are float views in [0,1).  Arithmetic done through
    :func:`step` stays exact, so semigroup identities hold bit for bit.
    """

    __slots__ = ("_n1", "_n2", "_den")

    def __init__(self, x1=0.0, x2=0.0):
        p1, q1 = _as_ratio(x1)
        p2, q2 = _as_ratio(x2)
        den = q1 * q2 // math.gcd(q1, q2)
        self._n1 = (p1 * (den // q1)) % den
        self._n2 = (p2 * (den // q2)) % den
        self._den = den

    @classmethod
    def _raw(cls, n1: int, n2: int, den: int) -> "TorusPoint":
        p = cls.__new__(cls)
        p._n1, p._n2, p._den = n1 % den, n2 % den, den
        return p

    @property
    def x1(self) -> float:
        return reduce_unit(self._n1 / self._den)

    @property
    def x2(self) -> float:
        return reduce_unit(self._n2 / self._den)

    @property
    def exact(self) -> tuple[Fraction, Fraction]:
        return Fraction(self._n1, self._den), Fraction(self._n2, self._den)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def __iter__(self):
        yield self.x1
        yield self.x2

    def __eq__(self, other):
        if not isinstance(other, TorusPoint):
            return NotImplemented
        return (self._n1 * other._den == other._n1 * self._den
                and self._n2 * other._den == other._n2 * self._den)

    def __hash__(self):
        return hash(self.exact)

    def __repr__(self):
        return f"TorusPoint({self.x1!r}, {self.x2!r})"


def _as_point(p) -> TorusPoint:
    return p if isinstance(p, TorusPoint) else TorusPoint(*p)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.hypot(v[0], v[1])


def _eigvec(m11, m12, m21, m22, lam) -> np.ndarray:
    c1 = np.array([m12, lam - m11], dtype=float)
    c2 = np.array([lam - m22, m21], dtype=float)
    v = c1 if np.hypot(*c1) >= np.hypot(*c2) else c2
    return _unit(v)


def eigendata(matrix) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Expanding/contracting eigenvalues and unit eigenvectors.

    Orientation: v_u has a nonnegative first component (second component
    positive if the first vanishes) and det[v_u | v_s] > 0.
    """
    if isinstance(matrix, HyperbolicToralMap):
        return matrix.lambda_u, matrix.lambda_s, matrix.v_u.copy(), matrix.v_s.copy()
    a = np.asarray(matrix)
    if a.shape != (2, 2) or not np.all(a == np.round(a)):
        raise NotHyperbolic("expected an integer 2x2 matrix")
    m11, m12, m21, m22 = (int(v) for v in a.ravel())
    det = m11 * m22 - m12 * m21
    tr = m11 + m22
    if abs(det) != 1:
        raise NotHyperbolic(f"determinant {det} is not +-1")
    if abs(tr) <= 2:
        raise NotHyperbolic(f"|trace| = {abs(tr)} <= 2, not hyperbolic")
    disc = math.sqrt(tr * tr - 4 * det)
    r1 = (tr + disc) / 2 if tr >= 0 else (tr - disc) / 2
    r2 = det / r1  # the small root, computed without cancellation
    lam_u, lam_s = r1, r2
    vu = _eigvec(m11, m12, m21, m22, lam_u)
    if vu[0] < 0 or (vu[0] == 0 and vu[1] < 0):
        vu = -vu
    vs = _eigvec(m11, m12, m21, m22, lam_s)
    if vu[0] * vs[1] - vu[1] * vs[0] < 0:
        vs = -vs
    return lam_u, lam_s, vu, vs


@dataclass(frozen=True, eq=False)
class HyperbolicToralMap:
    m11: int
    m12: int
    m21: int
    m22: int
    lambda_u: float = field(init=False)
    lambda_s: float = field(init=False)
    v_u: np.ndarray = field(init=False, repr=False)
    v_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lu, ls, vu, vs = eigendata(self.matrix)
        object.__setattr__(self, "lambda_u", lu)
        object.__setattr__(self, "lambda_s", ls)
        object.__setattr__(self, "v_u", vu)
        object.__setattr__(self, "v_s", vs)

    @classmethod
    def from_matrix(cls, matrix) -> "HyperbolicToralMap":
        a = np.asarray(matrix)
        if a.shape != (2, 2) or not np.all(a == np.round(a)):
            raise NotHyperbolic("expected an integer 2x2 matrix")
        return cls(*(int(v) for v in a.ravel()))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=np.int64)

    @property
    def det(self) -> int:
        return self.m11 * self.m22 - self.m12 * self.m21

    @property
    def eigenbasis(self) -> np.ndarray:
        """Columns v_u, v_s."""
        return np.column_stack([self.v_u, self.v_s])

    def __eq__(self, other):
        if not isinstance(other, HyperbolicToralMap):
            return NotImplemented
        return (self.m11, self.m12, self.m21, self.m22) == (other.m11, other.m12, other.m21, other.m22)

    def __hash__(self):
        return hash((self.m11, self.m12, self.m21, self.m22))

    def int_power(self, n: int) -> tuple[int, int, int, int]:
        """Entries of M**n as Python integers (negative n uses the exact inverse)."""
        a, b, c, d = self.m11, self.m12, self.m21, self.m22
        if n < 0:
            s = self.det  # inverse of a unimodular matrix = adj / det
            a, b, c, d = d * s, -b * s, -c * s, a * s
            n = -n
        ra, rb, rc, rd = 1, 0, 0, 1
        while n:
            if n & 1:
                ra, rb, rc, rd = a * ra + b * rc, a * rb + b * rd, c * ra + d * rc, c * rb + d * rd
            a, b, c, d = a * a + b * c, a * b + b * d, c * a + d * c, c * b + d * d
            n >>= 1
        return ra, rb, rc, rd

    def apply_float(self, X, n: int = 1) -> np.ndarray:
        """Float image of an array of points (..., 2), reduced mod 1 after each step."""
        X = np.asarray(X, dtype=float)
        inv = n < 0
        A = self.matrix.astype(float)
        if inv:
            A = np.round(np.linalg.inv(A))
        for _ in range(abs(n)):
            X = reduce_unit(X @ A.T)
        return X


def cat_map() -> HyperbolicToralMap:
    return HyperbolicToralMap(2, 1, 1, 1)


CAT_MAP = cat_map()


def step(tmap: HyperbolicToralMap, p, n: int) -> TorusPoint:
    """M**n p mod 1, computed exactly."""
    p = _as_point(p)
    a, b, c, d = tmap.int_power(int(n))
    return TorusPoint._raw(a * p._n1 + b * p._n2, c * p._n1 + d * p._n2, p._den)


def step_array(tmap: HyperbolicToralMap, X, n: int) -> np.ndarray:
    """Float iteration of a point cloud; cheap but inexact for large n."""
    return tmap.apply_float(X, n)


def torus_displacement(p, q) -> np.ndarray:
    """Shortest lift of q - p, in [-0.5, 0.5)^2."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(p, q) -> float | np.ndarray:
    """Flat distance on R^2/Z^2 (minimum over lattice translates)."""
    if isinstance(p, TorusPoint):
        p = p.as_array()
    if isinstance(q, TorusPoint):
        q = q.as_array()
    d = torus_displacement(p, q)
    r = np.hypot(d[..., 0], d[..., 1])
    return r if np.ndim(r) else float(r)


def leaf_point(tmap: HyperbolicToralMap, base, which: str, s: float) -> TorusPoint:
    """base + s*v mod 1 with v the stable or unstable unit eigenvector."""
    if which not in ("stable", "unstable"):
        raise ValueError("which must be 'stable' or 'unstable'")
    if abs(s) > 0.5:
        raise ValidationError("leaf parameter |s| must be at most 0.5")
    base = _as_point(base)
    v = tmap.v_s if which == "stable" else tmap.v_u
    b = base.as_array()
    return TorusPoint(*reduce_unit(b + s * v))


def leaf_coordinates(tmap: HyperbolicToralMap, p, q) -> tuple[float, float]:
    """Coordinates (a, b) of the shortest lift of q - p in the basis (v_u, v_s)."""
    if isinstance(p, TorusPoint):
        p = p.as_array()
    if isinstance(q, TorusPoint):
        q = q.as_array()
    d = torus_displacement(p, q)
    a, b = np.linalg.solve(tmap.eigenbasis, d)
    return float(a), float(b)


# ---------------------------------------------------------------- suspension

@dataclass(frozen=True)
class RoofFunction:
    c0: float
    fourier_terms: tuple = ()

    def __post_init__(self):
        poly = TrigPoly(self.c0, tuple(self.fourier_terms))
        object.__setattr__(self, "c0", poly.a0)
        object.__setattr__(self, "fourier_terms", poly.terms)
        object.__setattr__(self, "_poly", poly)
        if not self.c0 > 0:
            raise ValidationError(f"roof.c0 must be positive, got {self.c0}")
        mn = poly.grid_min(256)
        if not mn > 0:
            raise ValidationError(f"roof minimum {mn:.6g} on the 256x256 grid is not positive")

    @property
    def poly(self) -> TrigPoly:
        return self._poly

    @property
    def is_constant(self) -> bool:
        return self._poly.is_constant

    def __call__(self, x):
        if isinstance(x, TorusPoint):
            x = x.as_array()
        return self._poly(x)


@dataclass(frozen=True)
class SuspensionState:
    base: TorusPoint
    height: float


def suspension_flow(tmap: HyperbolicToralMap, roof: RoofFunction, st: SuspensionState,
                    t: float) -> SuspensionState:
    """Flow for time t under dh/dt = 1 with (x, r(x)) ~ (Tx, 0).

    The vertical speed is constant, so each ceiling crossing happens after
    exactly r(x) - h units of time and the event times are closed form.
    """
    if not math.isfinite(t):
        raise ValidationError("flow time must be finite")
    x = _as_point(st.base)
    h = float(st.height) + float(t)
    r = float(roof(x))
    while h >= r:
        h -= r
        x = step(tmap, x, 1)
        r = float(roof(x))
    while h < 0.0:
        x = step(tmap, x, -1)
        h += float(roof(x))
    if h >= float(roof(x)):  # guard against h == r after the backward loop
        h -= float(roof(x))
        x = step(tmap, x, 1)
    return SuspensionState(x, h)


# ---------------------------------------------------------------- sampling

def dyadic_sample(rng: np.random.Generator, n: int) -> np.ndarray:
    """n uniform points as uint64 numerators over 2**64, shape (n, 2)."""
    return rng.integers(0, np.iinfo(np.uint64).max, size=(n, 2), dtype=np.uint64, endpoint=True)


def _u64(m: int) -> np.uint64:
    return np.uint64(m % _DYADIC_DEN)


def dyadic_step(tmap: HyperbolicToralMap, K: np.ndarray, n: int = 1) -> np.ndarray:
    """Exact M**n action on dyadic points (uint64 wrap-around arithmetic)."""
    a, b, c, d = (_u64(v) for v in tmap.int_power(int(n)))
    k1, k2 = K[..., 0], K[..., 1]
    with np.errstate(over="ignore"):
        out = np.empty_like(K)
        out[..., 0] = a * k1 + b * k2
        out[..., 1] = c * k1 + d * k2
    return out


def dyadic_to_float(K: np.ndarray) -> np.ndarray:
    """Float view in [0,1) (truncates the low 11 bits)."""
    return (K >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def dyadic_points(K: np.ndarray) -> list[TorusPoint]:
    return [TorusPoint._raw(int(k1), int(k2), _DYADIC_DEN) for k1, k2 in K]


def sample_lebesgue(seed: int, n: int) -> list[TorusPoint]:
    """n Lebesgue-distributed torus points (exact dyadic rationals)."""
    if n <= 0:
        return []
    rng = np.random.default_rng(seed)
    return dyadic_points(dyadic_sample(rng, n))


def sample_lebesgue_array(seed: int, n: int) -> np.ndarray:
    """Float version of :func:`sample_lebesgue` (same points up to float rounding)."""
    if n <= 0:
        return np.zeros((0, 2))
    rng = np.random.default_rng(seed)
    return dyadic_to_float(dyadic_sample(rng, n))
