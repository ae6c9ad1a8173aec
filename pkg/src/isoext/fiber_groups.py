"""Circle and rotation-group arithmetic, metrics, sampling and catalogs.

Rotations are unit quaternions (w, x, y, z) with the canonical sign
w >= 0 (first nonzero of x, y, z positive when w == 0).  compose(g, h)
is the map p -> g(h(p)), i.e. the quaternion product q_g q_h.

Every scalar operation has an array twin (``q*`` functions, and plain
angle arrays for the circle) used by the vectorised code elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CutLocus, KindMismatch

__all__ = [
    "CircleElement",
    "RotationElement",
    "SpherePoint",
    "FiniteSubgroupCatalog",
    "CATALOG",
    "compose",
    "inverse",
    "identity",
    "bi_invariant_distance",
    "exp_map",
    "log_map",
    "act",
    "haar_sample",
    "qmul",
    "qconj",
    "qcanon",
    "qnormalize",
    "qdist",
    "qangle",
    "qexp",
    "qlog",
    "qmatrix",
    "qrotate",
    "quat_from_matrix",
    "circle_dist",
    "wrap_angle",
    "rotation_angle",
]

TWO_PI = 2.0 * np.pi
CUT_EPS = 1e-9


# ------------------------------------------------------------- array kernels

def wrap_angle(theta):
    """Reduce angles to [0, 2pi)."""
    r = np.mod(theta, TWO_PI)
    r = np.where(r >= TWO_PI, 0.0, r)
    return r if np.ndim(r) else float(r)


def circle_dist(a, b):
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), TWO_PI))
    d = np.minimum(d, TWO_PI - d)
    return d if np.ndim(d) else float(d)


def qmul(p, q) -> np.ndarray:
    """Hamilton product, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def qconj(q) -> np.ndarray:
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return q


def qnormalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def qcanon(q) -> np.ndarray:
    """Renormalise and pick the canonical sign."""
    q = qnormalize(q)
    neg = q[..., 0] < 0
    zero = q[..., 0] == 0
    if np.any(zero):
        v = q[..., 1:]
        nz = v != 0
        first = np.argmax(nz, axis=-1)
        lead = np.take_along_axis(v, first[..., None], axis=-1)[..., 0]
        neg = neg | (zero & (lead < 0))
    return np.where(neg[..., None], -q, q)


def qangle(q) -> np.ndarray:
    """Rotation angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def qdist(p, q) -> np.ndarray:
    """Geodesic angle of p^{-1} q; equal to 2*arccos|<p,q>| but stable near 0.

    The vector part p0 q_v - q0 p_v - p_v x q_v is formed term by term so
    that it cancels exactly when p == q.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pv, qv = p[..., 1:], q[..., 1:]
    w = p[..., :1] * q[..., :1] + np.sum(pv * qv, axis=-1, keepdims=True)
    v = (p[..., :1] * qv - q[..., :1] * pv) - np.cross(pv, qv)
    return 2.0 * np.arctan2(np.linalg.norm(v, axis=-1), np.abs(w[..., 0]))


def qexp(v) -> np.ndarray:
    """Axis-angle vector -> quaternion."""
    v = np.asarray(v, dtype=float)
    ang = np.linalg.norm(v, axis=-1)
    half = 0.5 * ang
    # sin(a/2)/a, with the Taylor branch for tiny angles
    small = ang < 1e-8
    safe = np.where(small, 1.0, ang)
    k = np.where(small, 0.5 - ang * ang / 48.0, np.sin(half) / safe)
    q = np.concatenate([np.cos(half)[..., None], k[..., None] * v], axis=-1)
    return qcanon(q)


def qlog(q, check: bool = True) -> np.ndarray:
    """Quaternion -> axis-angle vector with angle in [0, pi)."""
    q = qcanon(q)
    s = np.linalg.norm(q[..., 1:], axis=-1)
    ang = 2.0 * np.arctan2(s, q[..., 0])
    if check and np.any(ang >= np.pi - CUT_EPS):
        raise CutLocus("log undefined at rotation angle pi")
    small = s < 1e-12
    k = np.where(small, 2.0 / np.maximum(q[..., 0], 1e-300), ang / np.where(small, 1.0, s))
    return k[..., None] * q[..., 1:]


def qmatrix(q) -> np.ndarray:
    """Rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def qrotate(q, p) -> np.ndarray:
    """Rotate 3-vectors p by quaternions q (broadcasting)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, p)
    return p + w * t + np.cross(u, t)


def quat_from_matrix(R) -> np.ndarray:
    """Inverse of :func:`qmatrix` (Shepperd's branch selection)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    cands = np.array([1 + tr, 1 + 2 * R[0, 0] - tr, 1 + 2 * R[1, 1] - tr, 1 + 2 * R[2, 2] - tr])
    i = int(np.argmax(cands))
    q = np.empty(4)
    s = np.sqrt(cands[i])
    q[i] = 0.5 * s
    f = 0.5 / s
    if i == 0:
        q[1:] = f * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    elif i == 1:
        q[0], q[2], q[3] = f * (R[2, 1] - R[1, 2]), f * (R[0, 1] + R[1, 0]), f * (R[0, 2] + R[2, 0])
    elif i == 2:
        q[0], q[1], q[3] = f * (R[0, 2] - R[2, 0]), f * (R[0, 1] + R[1, 0]), f * (R[1, 2] + R[2, 1])
    else:
        q[0], q[1], q[2] = f * (R[1, 0] - R[0, 1]), f * (R[0, 2] + R[2, 0]), f * (R[1, 2] + R[2, 1])
    return qcanon(q)


def rotation_angle(kind: str, values) -> np.ndarray:
    """Rotation angle in [0, pi] of angle arrays (circle) or quaternion arrays."""
    if kind == "circle":
        return circle_dist(values, 0.0)
    return qangle(values)


# ------------------------------------------------------------- value types

@dataclass(frozen=True)
class CircleElement:
    theta: float

    kind = "circle"

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def value(self) -> float:
        return self.theta


@dataclass(frozen=True, eq=False)
class RotationElement:
    q: np.ndarray

    kind = "rotation"

    def __post_init__(self):
        q = qcanon(np.asarray(self.q, dtype=float).reshape(4))
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "RotationElement":
        a = np.asarray(axis, dtype=float)
        return cls(qexp(a / np.linalg.norm(a) * angle))

    @property
    def value(self) -> np.ndarray:
        return self.q

    @property
    def matrix(self) -> np.ndarray:
        return qmatrix(self.q)

    def __eq__(self, other):
        if not isinstance(other, RotationElement):
            return NotImplemented
        return bool(np.array_equal(self.q, other.q))

    def __hash__(self):
        return hash(self.q.tobytes())

    def __repr__(self):
        w, x, y, z = self.q
        return f"RotationElement(q=({w:.12g}, {x:.12g}, {y:.12g}, {z:.12g}))"


@dataclass(frozen=True, eq=False)
class SpherePoint:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(3)
        n = np.linalg.norm(v)
        if not n > 0:
            raise ValueError("sphere point must be nonzero")
        v = v / n
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return bool(np.array_equal(self.v, other.v))

    def __hash__(self):
        return hash(self.v.tobytes())


Element = CircleElement | RotationElement


def _kind(g) -> str:
    k = getattr(g, "kind", None)
    if k is None:
        raise KindMismatch(f"not a group element: {g!r}")
    return k


def _same_kind(g, h) -> str:
    kg, kh = _kind(g), _kind(h)
    if kg != kh:
        raise KindMismatch(f"cannot combine {kg} and {kh} elements")
    return kg


def identity(kind: str) -> Element:
    if kind == "circle":
        return CircleElement(0.0)
    if kind == "rotation":
        return RotationElement(np.array([1.0, 0.0, 0.0, 0.0]))
    raise KindMismatch(f"unknown group kind {kind!r}")


def compose(g, h) -> Element:
    """g after h."""
    if _same_kind(g, h) == "circle":
        return CircleElement(g.theta + h.theta)
    return RotationElement(qmul(g.q, h.q))


def inverse(g) -> Element:
    if _kind(g) == "circle":
        return CircleElement(-g.theta)
    return RotationElement(qconj(g.q))


def power(g, n: int) -> Element:
    """g**n for any integer n (square-and-multiply)."""
    out = identity(_kind(g))
    base = g if n >= 0 else inverse(g)
    n = abs(int(n))
    while n:
        if n & 1:
            out = compose(out, base)
        base = compose(base, base)
        n >>= 1
    return out


def bi_invariant_distance(g, h) -> float:
    if _same_kind(g, h) == "circle":
        return circle_dist(g.theta, h.theta)
    return float(qdist(g.q, h.q))


def exp_map(kind: str, tangent) -> Element:
    if kind == "circle":
        return CircleElement(float(np.asarray(tangent).reshape(-1)[0]) if np.ndim(tangent) else float(tangent))
    if kind == "rotation":
        return RotationElement(qexp(np.asarray(tangent, dtype=float).reshape(3)))
    raise KindMismatch(f"unknown group kind {kind!r}")


def log_map(g):
    """Tangent vector of g; the circle log lies in (-pi, pi)."""
    if _kind(g) == "circle":
        t = g.theta if g.theta < np.pi else g.theta - TWO_PI
        if abs(t) >= np.pi - CUT_EPS:
            raise CutLocus("log undefined at angle pi")
        return float(t)
    return qlog(g.q)


def act(g, p):
    """Action on a fiber point.

    circle on circle (float angle): translation; rotation on rotation: left
    translation; rotation on sphere (SpherePoint or 3-vector): rotation.
    """
    k = _kind(g)
    if k == "circle":
        if isinstance(p, CircleElement):
            return compose(g, p)
        if isinstance(p, (RotationElement, SpherePoint)):
            raise KindMismatch("circle elements act only on the circle")
        return wrap_angle(g.theta + float(p))
    if isinstance(p, RotationElement):
        return compose(g, p)
    if isinstance(p, CircleElement):
        raise KindMismatch("rotations do not act on the circle")
    if isinstance(p, SpherePoint):
        return SpherePoint(qrotate(g.q, p.v))
    v = np.asarray(p, dtype=float)
    if v.shape != (3,):
        raise KindMismatch("rotation acts on 3-vectors, sphere points or rotations")
    return qrotate(g.q, v)


def haar_sample_array(kind: str, rng: np.random.Generator, n: int) -> np.ndarray:
    if kind == "circle":
        return rng.uniform(0.0, TWO_PI, size=n)
    if kind == "rotation":
        u1, u2, u3 = rng.random((3, n))
        a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
        q = np.stack([a * np.sin(TWO_PI * u2), a * np.cos(TWO_PI * u2),
                      b * np.sin(TWO_PI * u3), b * np.cos(TWO_PI * u3)], axis=-1)
        return qcanon(q)
    raise KindMismatch(f"unknown group kind {kind!r}")


def haar_sample(kind: str, seed, n: int) -> list:
    """n Haar-distributed elements (uniform angles / Shoemake quaternions)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    arr = haar_sample_array(kind, rng, n)
    if kind == "circle":
        return [CircleElement(t) for t in arr]
    return [RotationElement(q) for q in arr]


def uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def elements_to_array(kind: str, elements) -> np.ndarray:
    if kind == "circle":
        return np.array([e.theta if isinstance(e, CircleElement) else float(e) for e in elements], dtype=float)
    return np.array([e.q if isinstance(e, RotationElement) else qcanon(e) for e in elements],
                    dtype=float).reshape(-1, 4)


def array_to_elements(kind: str, arr) -> list:
    if kind == "circle":
        return [CircleElement(t) for t in np.asarray(arr).reshape(-1)]
    return [RotationElement(q) for q in np.asarray(arr).reshape(-1, 4)]


# ------------------------------------------------------------- catalog

def _fold(a):
    a = np.mod(a, TWO_PI)
    return np.minimum(a, TWO_PI - a)


@dataclass(frozen=True)
class CatalogEntry:
    family: str
    n: int | None
    order: int
    angles: tuple

    @property
    def name(self) -> str:
        return f"{self.family}{self.n}" if self.n is not None else self.family


class FiniteSubgroupCatalog:
    """Finite subgroups of SO(3) by order and rotation-angle multiset."""

    families = ("cyclic", "dihedral", "tetrahedral", "octahedral", "icosahedral")

    def cyclic(self, n: int) -> CatalogEntry:
        return CatalogEntry("cyclic", n, n, tuple(np.sort(_fold(TWO_PI * np.arange(n) / n))))

    def dihedral(self, n: int) -> CatalogEntry:
        base = list(_fold(TWO_PI * np.arange(n) / n)) + [np.pi] * n
        return CatalogEntry("dihedral", n, 2 * n, tuple(np.sort(base)))

    @staticmethod
    def _polyhedral(name, counts) -> CatalogEntry:
        angles = [a for a, c in counts for _ in range(c)]
        return CatalogEntry(name, None, len(angles), tuple(np.sort(angles)))

    @property
    def tetrahedral(self) -> CatalogEntry:
        return self._polyhedral("tetrahedral", [(0.0, 1), (TWO_PI / 3, 8), (np.pi, 3)])

    @property
    def octahedral(self) -> CatalogEntry:
        return self._polyhedral("octahedral", [(0.0, 1), (TWO_PI / 3, 8), (np.pi / 2, 6), (np.pi, 9)])

    @property
    def icosahedral(self) -> CatalogEntry:
        return self._polyhedral("icosahedral", [(0.0, 1), (TWO_PI / 5, 12), (2 * TWO_PI / 5, 12),
                                                (TWO_PI / 3, 20), (np.pi, 15)])

    def orders(self, max_n: int = 12) -> list[tuple[str, int]]:
        out = [(f"cyclic{n}", n) for n in range(1, max_n + 1)]
        out += [(f"dihedral{n}", 2 * n) for n in range(2, max_n + 1)]
        out += [("tetrahedral", 12), ("octahedral", 24), ("icosahedral", 60)]
        return out

    def candidates(self, kind: str, order: int) -> list[CatalogEntry]:
        if kind == "circle":
            return [self.cyclic(order)]
        c = [self.cyclic(order)]
        if order % 2 == 0 and order >= 4:
            c.append(self.dihedral(order // 2))
        for e in (self.tetrahedral, self.octahedral, self.icosahedral):
            if e.order == order:
                c.append(e)
        return c

    def match(self, kind: str, angles, tol: float) -> CatalogEntry | None:
        """Catalog entry whose sorted angle multiset agrees within tol."""
        a = np.sort(np.asarray(angles, dtype=float))
        for e in self.candidates(kind, len(a)):
            if np.max(np.abs(a - np.asarray(e.angles)), initial=0.0) <= tol:
                return e
        return None


CATALOG = FiniteSubgroupCatalog()
