"""Deterministic reference nets of the circle and of SO(3).

The rotation net starts from the 120 unit quaternions of the binary
icosahedral group (the 60 icosahedral rotations, each with both signs),
whose convex hull is the 600-cell.  Each level splits every tetrahedral
cell into eight (edge midpoints pushed back to S^3).  The covering radius
of a level is bounded by twice the largest spherical circumradius of its
cells: a geodesic cell lies inside its circumscribed cap, and quaternion
angle beta corresponds to rotation angle at most 2*beta.

Levels 0..3 ship precomputed in ``data/so3_net.npz``; the builder below
regenerates them bit for bit.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .fiber_groups import qcanon

__all__ = ["icosian_quaternions", "build_rotation_net", "rotation_net", "circle_net",
           "covering_radius_rotation", "covering_radius_circle", "RotationNet"]

MAX_SHIPPED_LEVEL = 3
_FIXTURE = "so3_net.npz"


def icosian_quaternions() -> np.ndarray:
    """The 120 elements of the binary icosahedral group."""
    phi = (1 + np.sqrt(5)) / 2
    pts = []
    for i in range(4):
        for s in (1.0, -1.0):
            v = np.zeros(4)
            v[i] = s
            pts.append(v)
    for signs in itertools.product((0.5, -0.5), repeat=4):
        pts.append(np.array(signs))
    even = [p for p in itertools.permutations(range(4))
            if sum(1 for i in range(4) for j in range(i + 1, 4) if p[i] > p[j]) % 2 == 0]
    base = np.array([phi, 1.0, 1.0 / phi, 0.0]) / 2
    for s1, s2, s3 in itertools.product((1, -1), repeat=3):
        b = base * np.array([s1, s2, s3, 1])
        for p in even:
            v = np.empty(4)
            v[list(p)] = b
            pts.append(v)
    return np.array(pts)


def _cells(points: np.ndarray) -> np.ndarray:
    hull = ConvexHull(points)
    return np.sort(hull.simplices, axis=1)


def _circumradius(P: np.ndarray, cells: np.ndarray) -> np.ndarray:
    V = P[cells]  # (c, 4, 4), rows are vertices
    c = np.linalg.solve(V, np.ones(V.shape[:2])[..., None])[..., 0]
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    dots = np.einsum("cij,cj->ci", V, c)
    return np.arccos(np.clip(dots.min(axis=1), -1.0, 1.0))


def _subdivide(P: np.ndarray, cells: np.ndarray):
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    E = np.concatenate([cells[:, [i, j]] for i, j in pairs])
    E = np.sort(E, axis=1)
    edges, inv = np.unique(E, axis=0, return_inverse=True)
    mids = P[edges[:, 0]] + P[edges[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    Q = np.concatenate([P, mids])
    M = (inv.reshape(6, -1).T + len(P))  # per cell: ab, ac, ad, bc, bd, cd
    a, b, c, d = cells.T
    ab, ac, ad, bc, bd, cd = M.T
    corners = [np.stack(t, 1) for t in ((a, ab, ac, ad), (b, ab, bc, bd), (c, ac, bc, cd), (d, ad, bd, cd))]
    # split the central octahedron along its shortest diagonal; the other four
    # midpoints form the equatorial cycle listed in order for each choice
    diag = [(ab, cd, (ac, ad, bd, bc)), (ac, bd, (ab, ad, cd, bc)), (ad, bc, (ab, ac, cd, bd))]
    lens = np.stack([np.linalg.norm(Q[u] - Q[v], axis=1) for u, v, _ in diag], 1)
    pick = np.argmin(lens, axis=1)
    octs = []
    for k, (u, v, ring) in enumerate(diag):
        sel = pick == k
        for i in range(4):
            r0, r1 = ring[i][sel], ring[(i + 1) % 4][sel]
            octs.append(np.stack([u[sel], v[sel], r0, r1], 1))
    out = np.concatenate(corners + octs)
    return Q, np.sort(out, axis=1)


def _canonical_unique(P: np.ndarray) -> np.ndarray:
    Q = qcanon(P)
    Q = np.round(Q, 12) + 0.0
    _, idx = np.unique(Q, axis=0, return_index=True)
    return qcanon(P[np.sort(idx)])


def build_rotation_net(level: int):
    """Return (canonical quaternions, covering radius in rotation angle)."""
    P = icosian_quaternions()
    cells = _cells(P)
    for _ in range(level):
        P, cells = _subdivide(P, cells)
    radius = 2.0 * float(_circumradius(P, cells).max())
    return _canonical_unique(P), radius


class RotationNet:
    def __init__(self, points: np.ndarray, radius: float, level: int):
        self.points = points
        self.radius = radius
        self.level = level


@lru_cache(maxsize=None)
def _load_fixture():
    try:
        with resources.files("isoext.data").joinpath(_FIXTURE).open("rb") as fh:
            z = np.load(fh)
            return {k: z[k] for k in z.files}
    except (FileNotFoundError, ModuleNotFoundError):
        return None


@lru_cache(maxsize=None)
def rotation_net(level: int) -> RotationNet:
    fx = _load_fixture()
    if fx is not None and f"points{level}" in fx:
        return RotationNet(fx[f"points{level}"], float(fx["radii"][level]), level)
    pts, r = build_rotation_net(level)
    return RotationNet(pts, r, level)


def rotation_net_for(radius: float, max_level: int = MAX_SHIPPED_LEVEL + 1) -> RotationNet:
    """Coarsest level with covering radius <= radius (the finest allowed if none).

    Levels above the shipped ones are built on first use and cached.
    """
    for lv in range(max_level + 1):
        net = rotation_net(lv)
        if net.radius <= radius:
            return net
    return rotation_net(max_level)


def circle_net(radius: float) -> tuple[np.ndarray, float]:
    """Uniform grid on [0,2pi) with covering radius <= radius."""
    n = max(1, int(np.ceil(np.pi / radius)))
    return 2 * np.pi * np.arange(n) / n, np.pi / n


def covering_radius_circle(sample: np.ndarray, net_radius: float) -> float:
    """Upper bound on sup_x d(x, sample) over the circle."""
    grid, r = circle_net(net_radius)
    s = np.sort(np.mod(sample, 2 * np.pi))
    if len(s) == 0:
        return np.pi
    idx = np.searchsorted(s, grid)
    lo = s[(idx - 1) % len(s)]
    hi = s[idx % len(s)]
    d = np.minimum(np.abs(np.mod(grid - lo, 2 * np.pi)), np.abs(np.mod(hi - grid, 2 * np.pi)))
    return float(d.max() + r)


def covering_radius_rotation(sample: np.ndarray, net: RotationNet) -> float:
    """Upper bound on sup_g d(g, sample) over SO(3), using the given net."""
    S = np.concatenate([sample, -sample])
    chord, _ = cKDTree(S).query(net.points)
    beta = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return float(2.0 * beta.max() + net.radius)


def write_fixture(path) -> None:
    arrays = {}
    radii = []
    for lv in range(MAX_SHIPPED_LEVEL + 1):
        pts, r = build_rotation_net(lv)
        arrays[f"points{lv}"] = pts
        radii.append(r)
    np.savez_compressed(path, radii=np.array(radii), **arrays)
