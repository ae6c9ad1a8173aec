"""Skew products over toral automorphisms and their holonomies.

Conventions
-----------
A^(n)(x) = A(T^{n-1}x) ... A(x) acts on the left of the fiber.

stable:    Hol^s_{x->y} = lim [A^(n)(y)]^{-1} A^(n)(x)
unstable:  Hol^u_{x->y} = lim A^(n)(T^{-n}y) [A^(n)(T^{-n}x)]^{-1}

Both satisfy Hol_{Tx->Ty} A(x) = A(y) Hol_{x->y}.  For the circle the
stable holonomy is the angle sum_j tau(T^j x) - tau(T^j y).

The leaf partner of x is never iterated on its own: T^j y is taken as
T^j x + s lambda^j v, which is exact for a linear map and keeps the
expanding direction from amplifying rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .base_dynamics import (HyperbolicToralMap, TorusPoint, _as_point, leaf_coordinates, step,
                            dyadic_step, dyadic_to_float)
from .errors import KindMismatch, NoConvergence, NotOnStableLeaf, NotOnUnstableLeaf, ValidationError
from .fiber_groups import (CircleElement, RotationElement, SpherePoint, TWO_PI, circle_dist, qcanon,
                           qconj, qdist, qexp, qmul, qrotate, wrap_angle)
from .trig import TrigPoly

__all__ = [
    "Cocycle",
    "SkewProduct",
    "HolonomyResult",
    "cocycle_values",
    "extend_step",
    "stable_holonomy",
    "unstable_holonomy",
    "central_holonomy",
    "leaf_holonomy",
    "g_mul",
    "g_inv",
    "g_dist",
    "g_identity",
    "as_element",
    "element_value",
    "LEAF_TOL",
    "LEAF_RADIUS",
]

LEAF_TOL = 1e-8
LEAF_RADIUS = 0.25
MAX_DEPTH = 10_000


# ----------------------------------------------------------- kind-generic arrays

def g_identity(kind: str, shape=()):
    if kind == "circle":
        return np.zeros(shape)
    q = np.zeros(tuple(shape) + (4,))
    q[..., 0] = 1.0
    return q


def g_mul(kind: str, a, b):
    """a after b."""
    if kind == "circle":
        return np.mod(np.asarray(a) + np.asarray(b), TWO_PI)
    return qmul(a, b)


def g_inv(kind: str, a):
    if kind == "circle":
        return np.mod(-np.asarray(a), TWO_PI)
    return qconj(a)


def g_dist(kind: str, a, b):
    if kind == "circle":
        return circle_dist(a, b)
    return qdist(a, b)


def as_element(kind: str, v):
    if kind == "circle":
        return CircleElement(float(v))
    return RotationElement(np.asarray(v))


def element_value(g):
    if isinstance(g, CircleElement):
        return g.theta
    if isinstance(g, RotationElement):
        return g.q
    return g


# ----------------------------------------------------------- cocycles

def _polys(comps) -> tuple:
    out = []
    for c in comps:
        out.append(c if isinstance(c, TrigPoly) else TrigPoly.from_dict(c))
    return tuple(out)


def _combined_lipschitz(polys) -> float:
    return float(np.sqrt(sum(p.lipschitz() ** 2 for p in polys)))


@dataclass(frozen=True)
class Cocycle:
    """A(x) = exp(beta(Tx)) exp(omega(x)) exp(beta(x))^{-1}.

    ``components`` holds omega (one trig polynomial tau for the circle,
    three axis-angle components for rotations).  The optional ``twist``
    beta is a transfer function: it changes A by a coboundary, which keeps
    the transitivity group while making holonomies position dependent.
    """

    kind: str
    components: tuple
    twist: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "rotation"):
            raise ValidationError(f"cocycle.kind must be 'circle' or 'rotation', got {self.kind!r}")
        comps = _polys(self.components)
        need = 1 if self.kind == "circle" else 3
        if len(comps) != need:
            raise ValidationError(f"{self.kind} cocycle needs {need} component(s), got {len(comps)}")
        object.__setattr__(self, "components", comps)
        if self.twist is not None:
            tw = _polys(self.twist)
            if len(tw) != need:
                raise ValidationError(f"twist needs {need} component(s), got {len(tw)}")
            object.__setattr__(self, "twist", tw)

    @classmethod
    def circle(cls, a0: float = 0.0, terms=(), twist=None) -> "Cocycle":
        tw = None if twist is None else (twist if isinstance(twist, TrigPoly) else TrigPoly(*twist),)
        return cls("circle", (TrigPoly(a0, tuple(terms)),), tw)

    @classmethod
    def rotation(cls, components, twist=None) -> "Cocycle":
        return cls("rotation", tuple(components), None if twist is None else tuple(twist))

    @classmethod
    def constant(cls, kind: str, value) -> "Cocycle":
        if kind == "circle":
            return cls.circle(float(value))
        v = np.asarray(value, dtype=float).reshape(3)
        return cls.rotation([TrigPoly(c) for c in v])

    @property
    def tau(self) -> TrigPoly:
        if self.kind != "circle":
            raise KindMismatch("tau is defined for circle cocycles only")
        return self.components[0]

    def base_lipschitz(self) -> float:
        return _combined_lipschitz(self.components)

    def lipschitz(self, tmap: HyperbolicToralMap | None = None) -> float:
        """L_A with respect to the flat torus metric and the bi-invariant metric.

        exp is 1-Lipschitz on R^3 -> SO(3), so component bounds combine in
        quadrature.  A twist adds L_beta (||M|| + 1).
        """
        L = self.base_lipschitz()
        if self.twist is not None:
            if tmap is None:
                raise ValidationError("twisted cocycle needs the base map for its Lipschitz bound")
            normM = float(np.linalg.norm(tmap.matrix.astype(float), 2))
            L += _combined_lipschitz(self.twist) * (normM + 1.0)
        return L

    @property
    def is_constant(self) -> bool:
        return all(p.is_constant for p in self.components) and (
            self.twist is None or all(p.is_constant for p in self.twist))

    def _omega(self, X):
        if self.kind == "circle":
            return self.components[0](X)
        return np.stack([np.broadcast_to(c(X), np.shape(X)[:-1]) for c in self.components], axis=-1)

    def _beta(self, X):
        if self.kind == "circle":
            return self.twist[0](X)
        return np.stack([np.broadcast_to(c(X), np.shape(X)[:-1]) for c in self.twist], axis=-1)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "components": [c.to_dict() for c in self.components]}
        if self.twist is not None:
            d["twist"] = [c.to_dict() for c in self.twist]
        return d

    @classmethod
    def from_dict(cls, d) -> "Cocycle":
        return cls(d["kind"], tuple(d["components"]), None if d.get("twist") is None else tuple(d["twist"]))


def cocycle_values(tmap: HyperbolicToralMap, coc: Cocycle, X) -> np.ndarray:
    """A at an array of points (..., 2): angles (...) or quaternions (..., 4)."""
    X = np.asarray(X, dtype=float)
    if coc.kind == "circle":
        v = coc._omega(X)
        if coc.twist is not None:
            TX = X @ tmap.matrix.T.astype(float)
            v = v + coc._beta(TX) - coc._beta(X)
        return np.mod(np.broadcast_to(v, X.shape[:-1]), TWO_PI)
    q = qexp(coc._omega(X))
    if coc.twist is not None:
        TX = X @ tmap.matrix.T.astype(float)
        q = qmul(qmul(qexp(coc._beta(TX)), q), qconj(qexp(coc._beta(X))))
    return q


@dataclass(frozen=True)
class SkewProduct:
    base: HyperbolicToralMap
    cocycle: Cocycle
    fiber: str = "group"

    def __post_init__(self):
        if self.fiber not in ("group", "sphere"):
            raise ValidationError(f"fiber must be 'group' or 'sphere', got {self.fiber!r}")
        if self.fiber == "sphere" and self.cocycle.kind != "rotation":
            raise ValidationError("sphere fibers need a rotation cocycle")

    @property
    def kind(self) -> str:
        return self.cocycle.kind

    @property
    def fiber_kind(self) -> str:
        """'circle', 'rotation' (group acting on itself) or 'sphere'."""
        return "sphere" if self.fiber == "sphere" else self.cocycle.kind

    @property
    def lipschitz(self) -> float:
        return self.cocycle.lipschitz(self.base)

    def A(self, X):
        return cocycle_values(self.base, self.cocycle, X)

    def act_array(self, g, P):
        """Fiber action on arrays of fiber points."""
        if self.fiber_kind == "circle":
            return np.mod(np.asarray(g) + np.asarray(P), TWO_PI)
        if self.fiber_kind == "rotation":
            return qmul(g, P)
        return qrotate(g, P)


# ----------------------------------------------------------- stepping

def _fiber_value(sp: SkewProduct, p):
    fk = sp.fiber_kind
    if fk == "circle":
        return float(p.theta) if isinstance(p, CircleElement) else float(p)
    if fk == "rotation":
        return p.q if isinstance(p, RotationElement) else qcanon(np.asarray(p, dtype=float))
    return p.v if isinstance(p, SpherePoint) else np.asarray(p, dtype=float)


def _fiber_wrap(sp: SkewProduct, old, v):
    fk = sp.fiber_kind
    if isinstance(old, CircleElement) or (fk == "circle" and not isinstance(old, np.ndarray)):
        return CircleElement(v) if isinstance(old, CircleElement) else wrap_angle(v)
    if isinstance(old, RotationElement):
        return RotationElement(v)
    if isinstance(old, SpherePoint):
        return SpherePoint(v)
    return qcanon(v) if fk == "rotation" else v


def extend_step(sp: SkewProduct, w, n: int):
    """n iterates of (x, p) -> (Tx, A(x) p); negative n runs backward."""
    x, p = w
    x = _as_point(x)
    v = _fiber_value(sp, p)
    n = int(n)
    if n >= 0:
        for _ in range(n):
            v = sp.act_array(sp.A(x.as_array()), v)
            x = step(sp.base, x, 1)
    else:
        for _ in range(-n):
            x = step(sp.base, x, -1)
            v = sp.act_array(g_inv(sp.kind, sp.A(x.as_array())), v)
    return x, _fiber_wrap(sp, p, v)


def central_holonomy(sp: SkewProduct, x, m: int):
    """A^(m)(x) as a group element."""
    if m < 0:
        raise ValidationError("central holonomy length must be >= 0")
    x = _as_point(x)
    g = g_identity(sp.kind)
    for _ in range(int(m)):
        g = g_mul(sp.kind, sp.A(x.as_array()), g)
        x = step(sp.base, x, 1)
    return as_element(sp.kind, g)


def orbit_floats(tmap: HyperbolicToralMap, x, n: int, backward: bool = False) -> np.ndarray:
    """Exact orbit x, Tx, ..., T^{n-1}x (or T^{-1}x, ..., T^{-n}x), as floats."""
    x = _as_point(x)
    out = np.empty((n, 2))
    if backward:
        for j in range(n):
            x = step(tmap, x, -1)
            out[j] = x.as_array()
    else:
        for j in range(n):
            out[j] = x.as_array()
            x = step(tmap, x, 1)
    return out


# ----------------------------------------------------------- holonomy

@dataclass(frozen=True)
class HolonomyResult:
    element: object
    depth: int
    residual: float
    certified_error: float


def _rate(sp: SkewProduct, which: str) -> float:
    return abs(sp.base.lambda_s) if which == "stable" else 1.0 / abs(sp.base.lambda_u)


def certified_depth(L: float, s: float, rate: float, tol: float) -> int:
    """First n with L |s| rate^n / (1 - rate) < tol."""
    c = L * abs(s) / (1.0 - rate)
    if c < tol:
        return 0
    n = int(np.ceil(np.log(tol / c) / np.log(rate)))
    while c * rate ** n >= tol:
        n += 1
    while n > 0 and c * rate ** (n - 1) < tol:
        n -= 1
    return n


def circle_increment(sp: SkewProduct, X, D) -> np.ndarray:
    """A(X + D) - A(X) for a circle cocycle, as a real number (not reduced mod 2pi).

    Leaf displacements D are tiny at depth, and differencing two O(1) angles
    would lose them below rounding; the product formulas keep relative precision.
    """
    coc = sp.cocycle
    d = coc.components[0].increment(X, D)
    if coc.twist is not None:
        MT = sp.base.matrix.T.astype(float)
        d = d + coc.twist[0].increment(np.asarray(X) @ MT, np.asarray(D) @ MT) - coc.twist[0].increment(X, D)
    return d


def holonomy_partials(sp: SkewProduct, Xorb: np.ndarray, s, which: str) -> np.ndarray:
    """Partial holonomies H_0..H_n along precomputed orbits.

    Xorb has shape (n, N, 2): for 'stable' rows are T^j x (j = 0..n-1), for
    'unstable' T^{-j}x (j = 1..n).  Returns (n+1, N) angles or (n+1, N, 4).
    """
    kind = sp.kind
    n, N = Xorb.shape[:2]
    s = np.broadcast_to(np.asarray(s, dtype=float), (N,))
    if which == "stable":
        v, lam, j0 = sp.base.v_s, sp.base.lambda_s, 0
    else:
        v, lam, j0 = sp.base.v_u, 1.0 / sp.base.lambda_u, 1
    j = np.arange(j0, j0 + n)
    disp = (s[None, :] * (lam ** j)[:, None])[..., None] * v
    if kind == "circle":
        d = circle_increment(sp, Xorb, disp)
        if which == "stable":
            d = -d
        H = np.concatenate([np.zeros((1, N)), np.cumsum(d, axis=0)])
        return np.mod(H, TWO_PI)
    Ax = sp.A(Xorb)
    Ay = sp.A(Xorb + disp)
    H = np.empty((n + 1, N, 4))
    H[0] = g_identity("rotation", (N,))
    Px = g_identity("rotation", (N,))
    Py = g_identity("rotation", (N,))
    for k in range(n):
        if which == "stable":
            Px = qmul(Ax[k], Px)
            Py = qmul(Ay[k], Py)
            H[k + 1] = qcanon(qmul(qconj(Py), Px))
        else:
            Px = qmul(Px, Ax[k])
            Py = qmul(Py, Ay[k])
            H[k + 1] = qcanon(qmul(Py, qconj(Px)))
    return H


def leaf_holonomy(sp: SkewProduct, x, s: float, which: str, tol: float) -> HolonomyResult:
    """Holonomy from x to the leaf point at parameter s (no radius check)."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    L = sp.lipschitz
    rate = _rate(sp, which)
    n = certified_depth(L, s, rate, tol)
    if n > MAX_DEPTH:
        raise NoConvergence(f"holonomy depth {n} exceeds {MAX_DEPTH}")
    cert = L * abs(s) * rate ** n / (1.0 - rate)
    if n == 0:
        return HolonomyResult(as_element(sp.kind, g_identity(sp.kind)), 0, 0.0, cert)
    Xorb = orbit_floats(sp.base, x, n, backward=(which == "unstable"))[:, None, :]
    H = holonomy_partials(sp, Xorb, s, which)[:, 0]
    res = float(g_dist(sp.kind, H[-1], H[-2]))
    return HolonomyResult(as_element(sp.kind, H[-1]), n, res, cert)


def _leaf_param(sp: SkewProduct, x, y, which: str) -> float:
    a, b = leaf_coordinates(sp.base, _as_point(x), _as_point(y))
    off, along = (a, b) if which == "stable" else (b, a)
    err = NotOnStableLeaf if which == "stable" else NotOnUnstableLeaf
    if abs(off) > LEAF_TOL:
        raise err(f"y - x has a transverse component {off:.3g} > {LEAF_TOL:g}")
    if abs(along) > LEAF_RADIUS:
        raise err(f"leaf parameter {along:.6g} outside radius {LEAF_RADIUS}")
    return along


def stable_holonomy(sp: SkewProduct, x, y, tol: float) -> HolonomyResult:
    """Hol^s_{x->y} for y on the local stable leaf of x."""
    return leaf_holonomy(sp, _as_point(x), _leaf_param(sp, x, y, "stable"), "stable", tol)


def unstable_holonomy(sp: SkewProduct, x, y, tol: float) -> HolonomyResult:
    """Hol^u_{x->y} for y on the local unstable leaf of x."""
    return leaf_holonomy(sp, _as_point(x), _leaf_param(sp, x, y, "unstable"), "unstable", tol)


def dyadic_orbits(tmap: HyperbolicToralMap, K: np.ndarray, n: int, backward: bool = False) -> np.ndarray:
    """Exact orbits of many dyadic points, shape (n, N, 2) floats."""
    out = np.empty((n,) + K.shape, dtype=float)
    cur = K
    for j in range(n):
        if backward:
            cur = dyadic_step(tmap, cur, -1)
            out[j] = dyadic_to_float(cur)
        else:
            out[j] = dyadic_to_float(cur)
            cur = dyadic_step(tmap, cur, 1)
    return out
