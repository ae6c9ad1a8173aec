"""Homoclinic points of the anchor, Parry elements and the transitivity group.

The anchor is the fixed point x* = (0,0).  A homoclinic point p solves
t v_u - s v_s = k for a lattice vector k, so its whole orbit is explicit:
T^j p = s lambda_s^j v_s for j >= 0 and t lambda_u^j v_u for j <= 0.
Every holonomy below is evaluated on these closed forms.

Representatives: x1 = T^{-a} p and x2 = T^b p with a, b the smallest
shifts bringing the leaf parameters inside LEAF_RADIUS; m = a + b.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .base_dynamics import HyperbolicToralMap, TorusPoint, reduce_unit
from .errors import KindMismatch, LeafRadiusExceeded, ValidationError
from .extension import (LEAF_RADIUS, SkewProduct, as_element, element_value, g_dist, g_identity,
                        g_inv, g_mul, leaf_holonomy)
from .fiber_groups import (CATALOG, CircleElement, RotationElement, TWO_PI, circle_dist,
                           elements_to_array, qangle, qcanon, qconj, qexp, qmatrix, qmul, qrotate,
                           uniform_sphere)
from .nets import covering_radius_circle, covering_radius_rotation, rotation_net_for

__all__ = [
    "HomoclinicPoint",
    "ParryWord",
    "GroupSample",
    "TransitivityReport",
    "OrbitIsotropy",
    "ANCHOR",
    "enumerate_homoclinic",
    "leaf_residuals",
    "principal_flags",
    "stabilizer_counts",
    "parry_element",
    "anchor_element",
    "word_element",
    "conjugation_identity_check",
    "long_product_element",
    "generate_group",
    "classify_closure",
    "orbit_and_isotropy",
]

ANCHOR = TorusPoint(0, 0)


@dataclass(frozen=True)
class HomoclinicPoint:
    t: float
    s: float
    k: tuple
    p: TorusPoint
    back: int      # a: x1 = T^{-a} p
    forward: int   # b: x2 = T^{b} p
    lambda_u: float = field(repr=False)
    lambda_s: float = field(repr=False)
    v_u: np.ndarray = field(repr=False, compare=False)
    v_s: np.ndarray = field(repr=False, compare=False)

    @property
    def transit(self) -> int:
        return self.back + self.forward

    @property
    def t1(self) -> float:
        """Unstable leaf parameter of x1."""
        return self.t * self.lambda_u ** (-self.back)

    @property
    def s2(self) -> float:
        """Stable leaf parameter of x2."""
        return self.s * self.lambda_s ** self.forward

    @property
    def x1(self) -> TorusPoint:
        return TorusPoint(*reduce_unit(self.t1 * self.v_u))

    @property
    def x2(self) -> TorusPoint:
        return TorusPoint(*reduce_unit(self.s2 * self.v_s))

    def orbit_point(self, j) -> np.ndarray:
        """Lift of T^j p from the closed forms (mod 1 not applied)."""
        j = np.asarray(j)
        st = (self.s * self.lambda_s ** np.maximum(j, 0))[..., None] * self.v_s
        un = (self.t * self.lambda_u ** np.minimum(j, 0))[..., None] * self.v_u
        return np.where((j >= 0)[..., None], st, un)


def _shift_into(param: float, lam: float, radius: float) -> int:
    n = 0
    while abs(param) * abs(lam) ** n > radius:
        n += 1
    return n


def enumerate_homoclinic(tmap: HyperbolicToralMap, R: int, radius: float = LEAF_RADIUS) -> list[HomoclinicPoint]:
    """All intersections t v_u = s v_s + k with 0 < max|k_i| <= R.

    Sorted by (max|k|, k1, k2) so the list for R is a prefix-stable
    extension of the list for R - 1.
    """
    if R < 0:
        raise ValidationError("radius R must be >= 0")
    E = tmap.eigenbasis
    out = []
    ks = [(k1, k2) for k1 in range(-R, R + 1) for k2 in range(-R, R + 1) if (k1, k2) != (0, 0)]
    ks.sort(key=lambda k: (max(abs(k[0]), abs(k[1])), k[0], k[1]))
    for k in ks:
        t, ms = np.linalg.solve(E, np.array(k, dtype=float))
        s = -ms
        p = TorusPoint(*reduce_unit(t * tmap.v_u))
        a = _shift_into(t, 1.0 / tmap.lambda_u, radius)
        b = _shift_into(s, tmap.lambda_s, radius)
        out.append(HomoclinicPoint(float(t), float(s), k, p, a, b, tmap.lambda_u, tmap.lambda_s,
                                   tmap.v_u.copy(), tmap.v_s.copy()))
    return out


def leaf_residuals(hp: HomoclinicPoint) -> tuple[float, float]:
    """Distances of p from the two anchor leaves (both ~0 for a valid point)."""
    p = np.array([hp.p.x1, hp.p.x2])
    du = p - hp.t * hp.v_u
    ds = p - hp.s * hp.v_s
    du -= np.round(du)
    ds -= np.round(ds)
    return float(np.hypot(*du)), float(np.hypot(*ds))


def anchor_element(sp: SkewProduct):
    """rho(gamma*) = A(x*)."""
    return as_element(sp.kind, sp.A(np.array([ANCHOR.x1, ANCHOR.x2])))


def _orbit_product(sp: SkewProduct, hp: HomoclinicPoint, j0: int, j1: int):
    """A(T^{j1-1}p) ... A(T^{j0}p) from the closed-form orbit."""
    g = g_identity(sp.kind)
    if j1 <= j0:
        return g
    A = sp.A(hp.orbit_point(np.arange(j0, j1)))
    for v in A:
        g = g_mul(sp.kind, v, g)
    return g


def _parry_value(sp: SkewProduct, hp: HomoclinicPoint, tol: float, k1: int = 0, k2: int = 0):
    a, b = hp.back + k1, hp.forward - k2
    t1 = hp.t * hp.lambda_u ** (-a)
    s2 = hp.s * hp.lambda_s ** b
    if abs(t1) > LEAF_RADIUS or abs(s2) > LEAF_RADIUS or a + b < 0:
        raise LeafRadiusExceeded(
            f"shift ({k1},{k2}) puts representatives at t={t1:.4g}, s={s2:.4g} (radius {LEAF_RADIUS})")
    hu = leaf_holonomy(sp, ANCHOR, t1, "unstable", tol / 2)
    hs = leaf_holonomy(sp, ANCHOR, s2, "stable", tol / 2)
    c = _orbit_product(sp, hp, -a, b)
    hs_inv = g_inv(sp.kind, element_value(hs.element))
    return g_mul(sp.kind, hs_inv, g_mul(sp.kind, c, element_value(hu.element)))


def parry_element(sp: SkewProduct, hp: HomoclinicPoint, tol: float):
    """rho(gamma) = Hol^s_{x2->x*} A^(m)(x1) Hol^u_{x*->x1}, accurate to tol."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    return as_element(sp.kind, _parry_value(sp, hp, tol))


@dataclass(frozen=True)
class ParryWord:
    """Letters (index into a homoclinic list, or '*', power >= 1); empty = identity."""
    letters: tuple = ()

    def __post_init__(self):
        for idx, pw in self.letters:
            if not (idx == "*" or isinstance(idx, (int, np.integer))) or int(pw) < 1:
                raise ValidationError(f"bad Parry letter ({idx!r}, {pw!r})")


def word_element(sp: SkewProduct, word: ParryWord, homoclinic: Sequence[HomoclinicPoint], tol: float):
    """rho of a word; letters compose left to right as written (g1 g2 ...)."""
    g = g_identity(sp.kind)
    star = element_value(anchor_element(sp))
    for idx, pw in word.letters:
        e = star if idx == "*" else _parry_value(sp, homoclinic[int(idx)], tol)
        for _ in range(int(pw)):
            g = g_mul(sp.kind, g, e)
    return as_element(sp.kind, g)


def _power(kind: str, g, n: int):
    out = g_identity(kind)
    base = g if n >= 0 else g_inv(kind, g)
    for _ in range(abs(n)):
        out = g_mul(kind, base, out)
    return out


def conjugation_identity_check(sp: SkewProduct, hp: HomoclinicPoint, shifts, tol: float) -> float:
    """d(rho'(gamma), rho*^{-k2} rho(gamma) rho*^{k1}) for x1' = T^{-k1}x1, x2' = T^{-k2}x2."""
    k1, k2 = (int(v) for v in shifts)
    rho = _parry_value(sp, hp, tol)
    rho_shift = _parry_value(sp, hp, tol, k1, k2)
    star = element_value(anchor_element(sp))
    pred = g_mul(sp.kind, _power(sp.kind, star, -k2), g_mul(sp.kind, rho, _power(sp.kind, star, k1)))
    return float(g_dist(sp.kind, rho_shift, pred))


def long_product_element(sp: SkewProduct, hp: HomoclinicPoint, n_points: int = 400):
    """Independent route: A(x*)^{-n'} A^(n+m+n')(T^{-n}x1) A(x*)^{-n} over n_points orbit points."""
    m = hp.transit
    n = max(0, (n_points - m) // 2)
    n2 = max(0, n_points - m - n)
    j0, j1 = -hp.back - n, hp.forward + n2
    prod = _orbit_product(sp, hp, j0, j1)
    star = element_value(anchor_element(sp))
    g = g_mul(sp.kind, _power(sp.kind, star, -n2), g_mul(sp.kind, prod, _power(sp.kind, star, -n)))
    return as_element(sp.kind, g)


# ----------------------------------------------------------- generated group

@dataclass
class GroupSample:
    kind: str
    elements: np.ndarray          # angles (n,) or canonical quaternions (n, 4)
    generators: np.ndarray
    max_word_len: int
    dedup_tol: float
    cap: int
    saturated: bool               # BFS stopped because nothing new appeared
    word_len_reached: int

    def __len__(self):
        return len(self.elements)

    def as_elements(self) -> list:
        if self.kind == "circle":
            return [CircleElement(t) for t in self.elements]
        return [RotationElement(q) for q in self.elements]


def _embed(kind: str, arr: np.ndarray) -> np.ndarray:
    if kind == "circle":
        return np.stack([np.cos(arr), np.sin(arr)], axis=-1)
    return arr


def _chord(kind: str, tol: float) -> float:
    # circle: chord of angle tol; rotations: quaternion half-angle tol/2
    return 2 * np.sin(tol / 2) if kind == "circle" else 2 * np.sin(tol / 4)


class _Dedup:
    def __init__(self, kind: str, tol: float):
        self.kind, self.r = kind, _chord(kind, tol)
        self.chunks: list[np.ndarray] = []
        self.tree = None

    def _pts(self, arr):
        e = _embed(self.kind, arr)
        return e if self.kind == "circle" else np.concatenate([e, -e])

    def filter_new(self, cand: np.ndarray) -> np.ndarray:
        if len(cand) == 0:
            return cand
        keep = np.ones(len(cand), dtype=bool)
        if self.tree is not None:
            d, _ = self.tree.query(_embed(self.kind, cand))
            keep = d > self.r
        cand = cand[keep]
        if len(cand) > 1:
            pts = self._pts(cand)
            n = len(cand)
            pairs = cKDTree(pts).query_pairs(self.r, output_type="ndarray")
            if len(pairs):
                pairs = np.sort(pairs % n, axis=1)
                pairs = pairs[pairs[:, 0] != pairs[:, 1]]
                pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
                removed = np.zeros(n, dtype=bool)
                for i, j in pairs:
                    if not removed[i] and not removed[j]:
                        removed[j] = True
                cand = cand[~removed]
        return cand

    def add(self, arr: np.ndarray):
        self.chunks.append(arr)
        allv = np.concatenate(self.chunks)
        self.tree = cKDTree(self._pts(allv))


def _canonical_order(kind: str, arr: np.ndarray) -> np.ndarray:
    if kind == "circle":
        return np.sort(arr)
    return arr[np.lexsort(arr.T[::-1])]


def _infer_kind(elements) -> str:
    kinds = {getattr(e, "kind", None) for e in elements}
    if len(kinds) != 1 or None in kinds:
        raise KindMismatch("generators must all be circle or all be rotation elements")
    return kinds.pop()


def generate_group(elements, max_word_len: int, dedup_tol: float, cap: int = 20000) -> GroupSample:
    """Breadth-first words of length <= max_word_len in the generators and their inverses."""
    if len(elements) == 0:
        raise ValidationError("need at least one generator")
    kind = _infer_kind(elements)
    gens = elements_to_array(kind, elements)
    if kind == "circle":
        gens = np.mod(gens, TWO_PI)
        allg = np.concatenate([gens, np.mod(-gens, TWO_PI)])
    else:
        gens = qcanon(gens)
        allg = qcanon(np.concatenate([gens, qconj(gens)]))
    dd = _Dedup(kind, dedup_tol)
    ident = g_identity(kind, (1,))
    dd.add(ident)
    frontier = ident
    total = 1
    saturated = False
    reached = 0
    for L in range(1, int(max_word_len) + 1):
        if kind == "circle":
            cand = np.mod(allg[:, None] + frontier[None, :], TWO_PI).reshape(-1)
        else:
            cand = qcanon(qmul(allg[:, None, :], frontier[None, :, :]).reshape(-1, 4))
        new = dd.filter_new(cand)
        if len(new) == 0:
            saturated = True
            break
        reached = L
        if total + len(new) >= cap:
            new = new[: cap - total]
            dd.add(new)
            total += len(new)
            break
        dd.add(new)
        total += len(new)
        frontier = new
    els = np.concatenate(dd.chunks)
    return GroupSample(kind, _canonical_order(kind, els), gens, int(max_word_len), float(dedup_tol),
                       int(cap), saturated, reached)


@dataclass(frozen=True)
class TransitivityReport:
    verdict: str                  # Finite | OneParameterSubgroup | FullGroup | Indeterminate
    order: int | None
    name: str | None
    axis: tuple | None
    evidence: dict
    generators_used: int

    def label(self) -> str:
        if self.verdict == "Finite":
            return f"Finite({self.order}, {self.name})"
        if self.verdict == "OneParameterSubgroup":
            return "OneParameterSubgroup(" + ", ".join(f"{round(a, 6) + 0.0:.6f}" for a in self.axis) + ")"
        return self.verdict


def _composition_closed(kind: str, els: np.ndarray, tol: float) -> bool:
    n = len(els)
    if kind == "circle":
        prod = np.mod(els[:, None] + els[None, :], TWO_PI).reshape(-1)
    else:
        prod = qcanon(qmul(els[:, None, :], els[None, :, :]).reshape(-1, 4))
    pts = _embed(kind, els)
    if kind == "rotation":
        pts = np.concatenate([pts, -pts])
    d, _ = cKDTree(pts).query(_embed(kind, prod))
    return bool(np.all(d <= _chord(kind, tol)))


def _axis_canon(a: np.ndarray) -> np.ndarray:
    a = a / np.linalg.norm(a)
    return -a if a[int(np.argmax(np.abs(a)))] < 0 else a


def min_net_size(eps: float) -> float:
    """Fewest points that can cover SO(3) at radius eps: Haar(ball_eps) = (eps - sin eps)/pi."""
    e = min(eps, np.pi)
    return np.pi / (e - np.sin(e))


FINITE_MAX = 1000


def classify_closure(sample: GroupSample, kind: str | None = None, density_eps: float = 0.05,
                     closure_tol: float = 1e-6) -> TransitivityReport:
    kind = kind or sample.kind
    if kind != sample.kind:
        raise KindMismatch(f"sample is {sample.kind}, asked to classify as {kind}")
    els = sample.elements
    n = len(els)
    ev = {"max_word_len": sample.max_word_len, "sample_count": n, "dedup_tol": sample.dedup_tol,
          "closure_tol": closure_tol, "density_eps": density_eps, "saturated": sample.saturated,
          "covering_radius": None}
    ngen = len(sample.generators)

    if n <= FINITE_MAX and _composition_closed(kind, els, closure_tol):
        angles = qangle(els) if kind == "rotation" else circle_dist(els, 0.0)
        entry = CATALOG.match(kind, angles, max(closure_tol, 1e-9) * 10)
        ev["closed"] = True
        if entry is not None:
            return TransitivityReport("Finite", entry.order, entry.family, None, ev, ngen)

    if kind == "circle":
        cov = covering_radius_circle(els, density_eps / 4)
        ev["covering_radius"] = cov
        if cov <= density_eps:
            return TransitivityReport("FullGroup", None, None, None, ev, ngen)
        return TransitivityReport("Indeterminate", None, None, None, ev, ngen)

    if n >= min_net_size(density_eps):
        net = rotation_net_for(density_eps / 4)
        cov = covering_radius_rotation(els, net)
        ev["covering_radius"] = cov
        ev["net_level"] = net.level
        if cov <= density_eps:
            return TransitivityReport("FullGroup", None, None, None, ev, ngen)
    else:
        ev["net_skipped"] = f"{n} points cannot cover SO(3) at radius {density_eps:g}"

    vec = els[:, 1:]
    norms = np.linalg.norm(vec, axis=1)
    if n > 1 and norms.max() > 0:
        a0 = vec[int(np.argmax(norms))]
        a0 = a0 / np.linalg.norm(a0)
        perp = np.linalg.norm(np.cross(vec, a0), axis=1)
        if np.all(perp <= np.sin(closure_tol / 2)):
            theta = 2 * np.arctan2(vec @ a0, els[:, 0])
            acov = covering_radius_circle(theta, density_eps / 4)
            ev["axis_covering_radius"] = acov
            if acov <= density_eps:
                ax = _axis_canon(a0)
                return TransitivityReport("OneParameterSubgroup", None, None, tuple(float(v) for v in ax), ev, ngen)
    return TransitivityReport("Indeterminate", None, None, None, ev, ngen)


# ----------------------------------------------------------- orbits & isotropy

@dataclass
class OrbitIsotropy:
    orbit: np.ndarray
    stabilizer: np.ndarray        # indices into the sample
    principal: bool
    perturbed_counts: list


def _act_all(kind: str, fiber: str, els: np.ndarray, p: np.ndarray) -> np.ndarray:
    if kind == "circle":
        return np.mod(els + float(p), TWO_PI)
    if fiber == "sphere":
        return qrotate(els, np.asarray(p)[None, :])
    return qcanon(qmul(els, np.asarray(p)[None, :]))


def _fiber_dist(kind: str, fiber: str, a, b):
    if kind == "circle":
        return circle_dist(a, b)
    if fiber == "sphere":
        return np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))
    return g_dist("rotation", a, b)


def _distinct_orbit(kind: str, fiber: str, orbit: np.ndarray, tol: float) -> np.ndarray:
    """Orbit points up to tol, first occurrence kept."""
    if fiber != "sphere":
        return _Dedup(kind, tol).filter_new(orbit)
    pairs = cKDTree(orbit).query_pairs(2 * np.sin(tol / 2), output_type="ndarray")
    removed = np.zeros(len(orbit), dtype=bool)
    for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else ():
        if not removed[i] and not removed[j]:
            removed[j] = True
    return orbit[~removed]


def _perturb(kind: str, fiber: str, p, rng, n: int, radius: float):
    if kind == "circle":
        return np.mod(float(p) + rng.uniform(-radius, radius, n), TWO_PI)
    if fiber == "sphere":
        p = np.asarray(p, dtype=float)
        t = uniform_sphere(rng, n)
        t -= (t @ p)[:, None] * p
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        ang = radius * np.sqrt(rng.random(n))
        out = np.cos(ang)[:, None] * p + np.sin(ang)[:, None] * t
        return out / np.linalg.norm(out, axis=1, keepdims=True)
    v = uniform_sphere(rng, n) * (radius * rng.random(n) ** (1 / 3))[:, None]
    return qcanon(qmul(qexp(v), np.asarray(p)[None, :]))


def stabilizer_counts(sample: GroupSample, points: np.ndarray, tol: float, fiber: str = "sphere") -> np.ndarray:
    """Number of sample elements fixing each point (vectorised over points)."""
    kind = sample.kind
    els = sample.elements
    if kind == "circle":
        d = circle_dist(els[None, :], 0.0)
        return np.full(len(points), int(np.sum(d < tol)))
    if fiber == "sphere":
        R = qmatrix(els)
        out = np.empty(len(points), dtype=int)
        for i0 in range(0, len(points), 512):
            P = points[i0:i0 + 512]
            img = np.einsum("gij,pj->pgi", R, P)
            d = np.linalg.norm(img - P[:, None, :], axis=-1)
            out[i0:i0 + 512] = np.sum(d < tol, axis=1)
        return out
    d = g_dist("rotation", els, g_identity("rotation"))
    return np.full(len(points), int(np.sum(d < tol)))


def orbit_and_isotropy(sample: GroupSample, p, tol: float = 1e-6, fiber: str = "sphere", seed=0,
                       n_perturb: int = 20, radius: float = 0.05) -> OrbitIsotropy:
    kind = sample.kind
    if kind == "circle":
        fiber = "group"
        p = float(p.theta if isinstance(p, CircleElement) else p)
    else:
        p = np.asarray(element_value(p) if isinstance(p, RotationElement) else p, dtype=float)
        if fiber == "sphere":
            p = p.reshape(3) / np.linalg.norm(p)
    orbit = _act_all(kind, fiber, sample.elements, p)
    d = _fiber_dist(kind, fiber, orbit, p)
    stab = np.flatnonzero(d < tol)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pert = _perturb(kind, fiber, p, rng, n_perturb, radius)
    counts = []
    for q in pert:
        oq = _act_all(kind, fiber, sample.elements, q)
        counts.append(int(np.sum(_fiber_dist(kind, fiber, oq, q) < tol)))
    principal = all(c == len(stab) for c in counts)
    return OrbitIsotropy(_distinct_orbit(kind, fiber, orbit, tol), stab, principal, counts)


def principal_flags(sample: GroupSample, points: np.ndarray, tol: float = 1e-6, seed=0,
                    n_perturb: int = 20, radius: float = 0.05) -> np.ndarray:
    """Vectorised principal test on many sphere points; True where principal."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    points = np.asarray(points, dtype=float)
    base = stabilizer_counts(sample, points, tol)
    # perturbations: n_perturb per point, same construction as orbit_and_isotropy
    P = np.repeat(points, n_perturb, axis=0)
    t = uniform_sphere(rng, len(P))
    t -= np.sum(t * P, axis=1)[:, None] * P
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    ang = radius * np.sqrt(rng.random(len(P)))
    Q = np.cos(ang)[:, None] * P + np.sin(ang)[:, None] * t
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    pc = stabilizer_counts(sample, Q, tol).reshape(len(points), n_perturb)
    return np.all(pc == base[:, None], axis=1)
