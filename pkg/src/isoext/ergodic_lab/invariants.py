"""Invariant functions built from holonomy: the map Psi, fixed vectors, Q-bundles.

Transport to a base point x uses the lift of x in [-1/2, 1/2)^2 written
as a v_u + b v_s.  Two routes leave the anchor:

    us:  x* --unstable a--> a v_u --stable--> x
    su:  x* --stable b--> b v_s --unstable--> x

Every leaf holonomy is taken from a point whose orbit is exact (the anchor
or the dyadic base point itself), the partner following the linear leaf.
Psi u(x, p) = u(H_x^{-1} p) is flow invariant once u is invariant under
the transitivity group, since the two routes and the pushed-forward route
differ by anchor loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..base_dynamics import dyadic_sample, dyadic_step, dyadic_to_float
from ..errors import KindMismatch, NotInvariant, ValidationError
from ..extension import (SkewProduct, _rate, certified_depth, dyadic_orbits, element_value, g_identity,
                         g_inv, g_mul, holonomy_partials, leaf_holonomy)
from ..fiber_groups import TWO_PI, circle_dist, haar_sample_array, qconj, qmul, qrotate, uniform_sphere
from ..parry import ANCHOR, GroupSample, HomoclinicPoint, TransitivityReport, _orbit_product
from ..seeding import stream
from .montecarlo import sample_fiber
from .harmonics import degree_basis, gauss_sphere_grid, midpoint_sphere_grid, sph_harm

INVARIANCE_TOL = 1e-6


# ----------------------------------------------------------- transport

def _to_dyadic(X: np.ndarray) -> np.ndarray:
    """Exact uint64 numerators of dyadic floats in [0, 1)."""
    return (np.asarray(X, dtype=float) * 2.0 ** 53).astype(np.uint64) << np.uint64(11)


def eigen_coordinates(sp: SkewProduct, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Xl = X - (X >= 0.5)
    ab = np.linalg.solve(sp.base.eigenbasis, Xl.T)
    return ab[0], ab[1]


def _leaf(sp: SkewProduct, K: np.ndarray | None, s: np.ndarray, which: str, tol: float):
    """Holonomy from base points (dyadic K, or the anchor if None) to their leaf partners."""
    s = np.asarray(s, dtype=float)
    rate = _rate(sp, which)
    n = certified_depth(sp.lipschitz, float(np.max(np.abs(s), initial=0.0)), rate, tol)
    if n == 0:
        return g_identity(sp.kind, (len(s),))
    if K is None:
        Xorb = np.zeros((n, len(s), 2))
    else:
        Xorb = dyadic_orbits(sp.base, K, n, backward=(which == "unstable"))
    return holonomy_partials(sp, Xorb, s, which)[-1]


def anchor_transport(sp: SkewProduct, K: np.ndarray, tol: float = 1e-10, route: str = "us"):
    """H_x: fiber over x* -> fiber over x along the given route, for dyadic points K."""
    a, b = eigen_coordinates(sp, dyadic_to_float(K))
    kind = sp.kind
    if route == "us":
        h1 = _leaf(sp, None, a, "unstable", tol / 2)       # x* -> a v_u
        h2 = _leaf(sp, K, -b, "stable", tol / 2)           # x -> a v_u
    elif route == "su":
        h1 = _leaf(sp, None, b, "stable", tol / 2)
        h2 = _leaf(sp, K, -a, "unstable", tol / 2)
    else:
        raise ValidationError(f"route must be 'us' or 'su', got {route!r}")
    return g_mul(kind, g_inv(kind, h2), h1)


def _pull(sp: SkewProduct, H, P):
    """H^{-1} p for per-point transports H and fiber points (M, ...) -> (N, M, ...)."""
    fk = sp.fiber_kind
    Hi = g_inv(sp.kind, H)
    if fk == "circle":
        return np.mod(Hi[:, None] + np.asarray(P)[None, :], TWO_PI)
    if fk == "sphere":
        return qrotate(Hi[:, None, :], np.asarray(P)[None, :, :])
    return qmul(Hi[:, None, :], np.asarray(P)[None, :, :])


# ----------------------------------------------------------- quadrature

def _euler_grid(n: int):
    """Haar quadrature on SO(3): ZYZ Euler angles, midpoint in beta, uniform in alpha, gamma."""
    be = np.pi * (np.arange(n) + 0.5) / n
    al = TWO_PI * np.arange(2 * n) / (2 * n)
    A, B, G = np.meshgrid(al, be, al, indexing="ij")
    w = np.sin(B).reshape(-1)
    A, B, G = A.reshape(-1), B.reshape(-1), G.reshape(-1)
    q = np.stack([np.cos(B / 2) * np.cos((A + G) / 2), -np.sin(B / 2) * np.sin((A - G) / 2),
                  np.sin(B / 2) * np.cos((A - G) / 2), np.cos(B / 2) * np.sin((A + G) / 2)], axis=-1)
    return q, w / w.sum()


def fiber_quadrature(fiber_kind: str, n: int):
    """Nodes and normalised weights; midpoint-type rules whose error is O(n^-2)."""
    if fiber_kind == "circle":
        th = TWO_PI * (np.arange(n) + 0.5) / n
        return th, np.full(n, 1.0 / n)
    if fiber_kind == "sphere":
        return midpoint_sphere_grid(n)
    return _euler_grid(n)


def _reference_quadrature(fiber_kind: str):
    if fiber_kind == "circle":
        return fiber_quadrature("circle", 256)
    if fiber_kind == "sphere":
        return gauss_sphere_grid(40)
    return _euler_grid(48)


def base_grid(g: int) -> np.ndarray:
    """Midpoint grid on the torus as exact dyadic numerators (g a power of two)."""
    if g < 1 or g & (g - 1):
        raise ValidationError("base grid size must be a power of two")
    c = (np.arange(g) + 0.5) / g
    X = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    return _to_dyadic(X)


# ----------------------------------------------------------- Psi

def _fiber_function(u):
    """Accept an Observable (vertical part) or a plain callable f(P, fiber_kind)."""
    if hasattr(u, "vertical_values"):
        if u.char != (0, 0) or not u.base.is_constant or u.height_mode:
            raise ValidationError("Psi takes a function of the fiber only")
        c = u.base.mean()
        return lambda P, fk: c * np.asarray(u.vertical_values(P, fk)) * np.ones(np.shape(P)[:1 if fk == "circle" else -1])
    return lambda P, fk: np.asarray(u(P, fk))


def check_invariant(sp: SkewProduct, u, sample: GroupSample, n_points: int = 32, seed: int = 0,
                    tol: float = INVARIANCE_TOL) -> float:
    """max |u(h p) - u(p)| over the group sample and random fiber points."""
    f = _fiber_function(u)
    fk = sp.fiber_kind
    if sample.kind != sp.kind:
        raise KindMismatch("group sample and skew product differ in kind")
    rng = stream(seed, "psi-invariance", 0)
    if fk == "circle":
        P = rng.uniform(0, TWO_PI, n_points)
        moved = np.mod(sample.elements[:, None] + P[None, :], TWO_PI)
    elif fk == "sphere":
        P = uniform_sphere(rng, n_points)
        moved = qrotate(sample.elements[:, None, :], P[None, :, :])
    else:
        P = haar_sample_array("rotation", rng, n_points)
        moved = qmul(sample.elements[:, None, :], P[None, :, :])
    base = f(P, fk)
    var = float(np.max(np.abs(f(moved.reshape((-1,) + np.shape(P)[1:]), fk).reshape(len(sample), -1) - base[None, :])))
    if var >= tol:
        raise NotInvariant(f"u varies by {var:.3g} along group orbits (limit {tol:g})")
    return var


@dataclass
class PsiReport:
    path_defect: float
    invariance_defect: float
    norm_defect: float
    norm_estimate: float
    norm_reference: float
    base_grid: int
    fiber_grid: int
    orbit_variation: float
    volume_factor: str = "vol(M) = 1"

    @property
    def max_defect(self) -> float:
        return max(self.path_defect, self.invariance_defect, self.norm_defect)


def extend_invariant(sp: SkewProduct, u, sample: GroupSample, base_grid_size: int = 8,
                     fiber_grid: int = 16, n_invariance: int = 256, tol: float = 1e-10,
                     seed: int = 0) -> PsiReport:
    """Build Psi u from an H-invariant fiber function u and report its three defects."""
    f = _fiber_function(u)
    var = check_invariant(sp, u, sample, seed=seed)
    fk = sp.fiber_kind

    # norm and path independence on the product grid
    Kb = base_grid(base_grid_size)
    Hus = anchor_transport(sp, Kb, tol, "us")
    Hsu = anchor_transport(sp, Kb, tol, "su")
    P, W = fiber_quadrature(fk, fiber_grid)
    shape = (len(Kb), len(W))
    v_us = f(_pull(sp, Hus, P).reshape((-1,) + np.shape(P)[1:]), fk).reshape(shape)
    v_su = f(_pull(sp, Hsu, P).reshape((-1,) + np.shape(P)[1:]), fk).reshape(shape)
    path = float(np.max(np.abs(v_us - v_su)))
    norm_est = float(np.mean(np.abs(v_us) ** 2 @ W))
    Pr, Wr = _reference_quadrature(fk)
    norm_ref = float(np.abs(f(Pr, fk)) ** 2 @ Wr)

    # invariance along random (x, p)
    rng = stream(seed, "psi-flow", 0)
    K = dyadic_sample(rng, n_invariance)
    Q = sample_fiber(fk, rng, n_invariance)
    H0 = anchor_transport(sp, K, tol, "us")
    A = sp.A(dyadic_to_float(K))
    K1 = dyadic_step(sp.base, K, 1)
    H1 = anchor_transport(sp, K1, tol, "us")
    Q1 = sp.act_array(A, Q)
    before = f(np.asarray(_pull_pointwise(sp, H0, Q)), fk)
    after = f(np.asarray(_pull_pointwise(sp, H1, Q1)), fk)
    inv = float(np.max(np.abs(after - before)))
    return PsiReport(path, inv, abs(norm_est - norm_ref), norm_est, norm_ref, base_grid_size, fiber_grid, var)


def _pull_pointwise(sp: SkewProduct, H, P):
    fk = sp.fiber_kind
    Hi = g_inv(sp.kind, H)
    if fk == "circle":
        return np.mod(Hi + P, TWO_PI)
    if fk == "sphere":
        return qrotate(Hi, P)
    return qmul(Hi, P)


# ----------------------------------------------------------- fixed vectors

@dataclass
class FixedSpace:
    dimension: int
    per_degree: dict
    basis: np.ndarray               # columns in the ordered basis ``labels``
    labels: list


def wigner_matrix(q: np.ndarray, l: int) -> np.ndarray:
    """D_{m'm} = <Y_l^m', Y_l^m o g^{-1}> by exact quadrature (probability measure)."""
    P, W = gauss_sphere_grid(2 * l + 2)
    Pg = qrotate(qconj(q), P)
    ms = range(-l, l + 1)
    Y = np.stack([sph_harm(l, m, P) for m in ms])
    Yg = np.stack([sph_harm(l, m, Pg) for m in ms])
    return (np.conj(Y) * W) @ Yg.T


def _null(M: np.ndarray, tol: float) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(M.shape[1], dtype=complex)
    _, s, Vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return Vh[rank:].conj().T


def fixed_vector_space(sample: GroupSample, fiber: str, L: int, tol: float = 1e-8,
                       use: str = "generators") -> FixedSpace:
    """Joint fixed space of the generators acting on modes |k| <= L or harmonics l <= L."""
    if L < 0:
        raise ValidationError("degree cap L must be >= 0")
    gens = sample.generators if use == "generators" else sample.elements
    if fiber == "circle":
        if sample.kind != "circle":
            raise KindMismatch("circle fiber needs a circle group sample")
        ks = np.arange(-L, L + 1)
        D = np.exp(-1j * np.outer(np.asarray(gens, dtype=float), ks))
        fixed = np.all(np.abs(D - 1) < tol, axis=0) if len(gens) else np.ones(len(ks), bool)
        per = {}
        for k, ok in zip(ks, fixed):
            per[abs(int(k))] = per.get(abs(int(k)), 0) + int(ok)
        basis = np.eye(len(ks), dtype=complex)[:, fixed]
        return FixedSpace(int(fixed.sum()), per, basis, [int(k) for k in ks])
    if fiber != "sphere" or sample.kind != "rotation":
        raise KindMismatch("fixed vectors are computed for circle or sphere fibers")
    labels, blocks, per = [], [], {}
    for l in range(L + 1):
        M = np.concatenate([wigner_matrix(g, l) - np.eye(2 * l + 1) for g in gens]) if len(gens) else \
            np.zeros((0, 2 * l + 1))
        Nl = _null(M, tol)
        per[l] = Nl.shape[1]
        labels += degree_basis(l)
        blocks.append(Nl)
    n = len(labels)
    basis = np.zeros((n, sum(b.shape[1] for b in blocks)), dtype=complex)
    r = c = 0
    for b in blocks:
        basis[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return FixedSpace(int(sum(per.values())), per, basis, labels)


# ----------------------------------------------------------- Q bundle

@dataclass
class BundleSample:
    source: object
    anchor_orbit: np.ndarray
    points: list                   # (homoclinic index, orbit index j)
    base: np.ndarray               # base coordinates of T^j p
    unstable_route: list
    stable_route: list
    hausdorff: np.ndarray
    cardinality: list
    bound: float
    resolution: float
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.hausdorff <= self.bound))


def fiber_points_distance(fiber_kind: str, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distance from each point of A to the set B."""
    if fiber_kind == "circle":
        Bs = np.sort(np.mod(B, TWO_PI))
        idx = np.searchsorted(Bs, np.mod(A, TWO_PI))
        lo, hi = Bs[(idx - 1) % len(Bs)], Bs[idx % len(Bs)]
        return np.minimum(circle_dist(A, lo), circle_dist(A, hi))
    if fiber_kind == "sphere":
        chord, _ = cKDTree(B).query(A)
        return 2 * np.arcsin(np.clip(chord / 2, 0, 1))
    chord, _ = cKDTree(np.concatenate([B, -B])).query(A)
    return 4 * np.arcsin(np.clip(chord / 2, 0, 1))


def hausdorff(fiber_kind: str, A, B) -> float:
    return float(max(fiber_points_distance(fiber_kind, A, B).max(), fiber_points_distance(fiber_kind, B, A).max()))


def distinct_count(fiber_kind: str, A: np.ndarray, tol: float = 1e-6) -> int:
    keep = []
    for i in range(len(A)):
        if not keep or fiber_points_distance(fiber_kind, A[i:i + 1], A[keep]).min() > tol:
            keep.append(i)
    return len(keep)


def sample_resolution(report: TransitivityReport | None) -> float:
    """Bound on d_H(S, gS) for g in H, S the orbit sample: twice the covering radius of the group sample."""
    if report is None or report.verdict == "Finite":
        return 0.0
    ev = report.evidence
    r = ev.get("axis_covering_radius") if report.verdict == "OneParameterSubgroup" else ev.get("covering_radius")
    return 2.0 * float(r) if r is not None else float("inf")


def _orbit(sp: SkewProduct, els: np.ndarray, p):
    fk = sp.fiber_kind
    if fk == "circle":
        return np.mod(els + float(p), TWO_PI)
    p = np.asarray(p, dtype=float)
    return qrotate(els, p[None, :]) if fk == "sphere" else qmul(els, p[None, :])


def build_Q_bundle(sp: SkewProduct, p, homoclinic: list[HomoclinicPoint], sample: GroupSample,
                   tol: float = 1e-8, report: TransitivityReport | None = None, n_points: int = 20,
                   resolution: float | None = None) -> BundleSample:
    """Transport H p along the unstable and the stable route to points of homoclinic orbits."""
    if not homoclinic:
        raise ValidationError("need at least one homoclinic point")
    kind, fk = sp.kind, sp.fiber_kind
    O = _orbit(sp, sample.elements, p)
    res = sample_resolution(report) if resolution is None else float(resolution)
    pts = []
    for i, hp in enumerate(homoclinic):
        pts += [(i, j) for j in range(-hp.back, hp.forward + 1)]
    if len(pts) < n_points:
        raise ValidationError(f"{len(homoclinic)} homoclinic orbits give only {len(pts)} base points")
    pts = pts[:n_points]
    hu = {}
    hs = {}
    Q1, Q2, dH, card, base = [], [], [], [], []
    for i, j in pts:
        hp = homoclinic[i]
        if i not in hu:
            hu[i] = np.asarray(element_value(leaf_holonomy(sp, ANCHOR, hp.t1, "unstable", tol / 2).element))
            hs[i] = np.asarray(element_value(leaf_holonomy(sp, ANCHOR, hp.s2, "stable", tol / 2).element))
        r1 = g_mul(kind, _orbit_product(sp, hp, -hp.back, j), hu[i])
        r2 = g_mul(kind, g_inv(kind, _orbit_product(sp, hp, j, hp.forward)), hs[i])
        a = sp.act_array(r1, O) if fk != "sphere" else qrotate(r1[None, :], O)
        b = sp.act_array(r2, O) if fk != "sphere" else qrotate(r2[None, :], O)
        Q1.append(a)
        Q2.append(b)
        dH.append(hausdorff(fk, a, b))
        card.append(distinct_count(fk, a) if len(a) <= 64 else len(a))
        base.append(np.mod(hp.orbit_point(j), 1.0))
    return BundleSample(p, O, pts, np.array(base), Q1, Q2, np.array(dH), card, 5 * tol + res, res, tol)

