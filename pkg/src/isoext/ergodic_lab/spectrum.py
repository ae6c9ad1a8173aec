"""Unit-circle eigenvalue search for the twisted Koopman operator.

(U_k f)(x) = e^{i k tau(x)} f(Tx).  On characters e_n(x) = e^{2 pi i n.x}
this is U_k e_n = sum_j w_j e_{M^T n + j} with w the Fourier coefficients
of e^{i k tau}.  With V_N = span{e_n : |n|_inf <= N} we measure

    r(omega) = min_{f in V_N, |f| = 1} |U_k f - e^{i omega} f|

which is the smallest singular value of the rectangular matrix of U_k
restricted to V_N (image modes kept, not compressed back into V_N).  An
exact eigenfunction in V_N gives r = 0; r is never below the distance of
e^{i omega} to the true L^2 spectrum restricted to V_N, so a positive floor
that is stable in N is evidence of no eigenvalue.

Per omega the minimiser is the top eigenvector of
H(omega) = (e^{-i omega} A + e^{i omega} A^H) / 2 with A the box rows of U;
it is found by block warm-started thick-restart Lanczos, and the residual is then evaluated
directly as |R v - e^{i omega} v| (no cancellation).  Small residuals are
polished by inverse iteration on B^H B.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from ..errors import KindMismatch, TruncationTooSmall, ValidationError
from ..extension import SkewProduct

FLAG_THRESHOLD = 1e-6
GRID_SIZE = 2048
COEFF_TAIL = 1e-10
REFINE_BELOW = 1e-3
WARM_BLOCK = 8


@dataclass
class KoopmanTruncation:
    k: int
    N: int
    box: np.ndarray          # (n, 2) integer modes, the domain V_N
    rows: np.ndarray         # (m, 2) modes of the image space (contains the box)
    R: sps.csr_matrix        # (m, n) matrix of U_k on V_N
    embed: np.ndarray        # row index of each box mode
    coefficients: dict = field(repr=False)
    quadrature: int = 0

    @property
    def A(self) -> sps.csr_matrix:
        """Compression E^H R onto V_N."""
        return self.R[self.embed, :].tocsr()


def cocycle_coefficients(sp: SkewProduct, k: int, N: int, grid: int | None = None):
    """Fourier coefficients of e^{i k tau}; raises TruncationTooSmall on aliasing."""
    if sp.kind != "circle":
        raise KindMismatch("the twisted Koopman operator needs a circle cocycle")
    L = sp.lipschitz
    need = 8.0 * (abs(k) * L + N)
    G = grid if grid is not None else max(64, 1 << int(np.ceil(np.log2(need))))
    g = np.arange(G) / G
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    w = np.exp(1j * k * np.asarray(sp.A(X)))
    c = np.fft.fft2(w) / (G * G)
    freq = np.fft.fftfreq(G, 1.0 / G).astype(int)
    J1, J2 = np.meshgrid(freq, freq, indexing="ij")
    outer = np.maximum(np.abs(J1), np.abs(J2)) > G // 4
    tail = float(np.sqrt(np.sum(np.abs(c[outer]) ** 2)))
    if tail > COEFF_TAIL:
        raise TruncationTooSmall(f"Fourier tail {tail:.3g} > {COEFF_TAIL:g} on a {G}x{G} grid")
    keep = (~outer) & (np.abs(c) > 1e-16)
    modes = np.stack([J1[keep], J2[keep]], axis=1)
    return modes, c[keep], G


def koopman_truncation(sp: SkewProduct, k: int, N: int, exclude_constant: bool | None = None,
                       grid: int | None = None) -> KoopmanTruncation:
    if N < 1:
        raise ValidationError("truncation N must be >= 1")
    if exclude_constant is None:
        exclude_constant = (k == 0)
    jmodes, w, G = cocycle_coefficients(sp, k, N, grid)
    r = np.arange(-N, N + 1)
    box = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    if exclude_constant:
        box = box[np.any(box != 0, axis=1)]
    MT = sp.base.matrix.T.astype(np.int64)
    img = box @ MT.T                                    # M^T n for each box mode
    targets = (img[:, None, :] + jmodes[None, :, :]).reshape(-1, 2)
    allmodes = np.concatenate([box, targets])
    rows, inv = np.unique(allmodes, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    embed = inv[: len(box)]
    ridx = inv[len(box):]
    cidx = np.repeat(np.arange(len(box)), len(jmodes))
    vals = np.tile(w, len(box))
    R = sps.csr_matrix((vals, (ridx, cidx)), shape=(len(rows), len(box)))
    coeffs = {tuple(int(v) for v in m): complex(c) for m, c in zip(jmodes, w)}
    return KoopmanTruncation(int(k), int(N), box, rows, R, embed, coeffs, G)


@dataclass
class EigenSearchReport:
    mode: int
    N: int
    omega_grid: np.ndarray
    residuals: np.ndarray
    flagged: np.ndarray
    threshold: float
    exclude_constant: bool
    quadrature: int
    dimension: int

    @property
    def min_residual(self) -> float:
        return float(self.residuals.min())

    @property
    def argmin_omega(self) -> float:
        return float(self.omega_grid[int(np.argmin(self.residuals))])


def _residual(kt: KoopmanTruncation, v: np.ndarray, z: complex) -> float:
    Bv = kt.R @ v
    Bv[kt.embed] -= z * v
    return float(np.linalg.norm(Bv) / np.linalg.norm(v))


def _polish(kt: KoopmanTruncation, v: np.ndarray, z: complex, iters: int = 30) -> float:
    m, n = kt.R.shape
    E = sps.csr_matrix((np.ones(n), (kt.embed, np.arange(n))), shape=(m, n))
    B = (kt.R - z * E).tocsc()
    C = (B.conj().T @ B + 1e-14 * sps.identity(n, format="csc")).tocsc()
    lu = spla.splu(C)
    best = _residual(kt, v, z)
    x = v.copy()
    for _ in range(iters):
        x = lu.solve(x)
        x /= np.linalg.norm(x)
        r = _residual(kt, x, z)
        if r >= best * (1 - 1e-3):
            best = min(best, r)
            break
        best = r
    return best


def _orth(w: np.ndarray, Q: np.ndarray, Qc: np.ndarray) -> np.ndarray:
    """Twice-iterated Gram-Schmidt against the rows of Q (Qc = conj(Q))."""
    for _ in range(2):
        w = w - (Qc @ w) @ Q
    return w


class _HermitianPencil:
    """H(omega) = (e^{-i omega} A + e^{i omega} A^H) / 2 on the fixed union pattern of A and A^H."""

    def __init__(self, A: sps.csr_matrix):
        C = A.tocoo()
        n = A.shape[0]
        rows = np.concatenate([C.row, C.col]).astype(np.int64)
        cols = np.concatenate([C.col, C.row]).astype(np.int64)
        keys, self.inv = np.unique(rows * n + cols, return_inverse=True)
        self.inv = self.inv.reshape(-1)
        r, c = np.divmod(keys, n)
        self.indices = c.astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(n + 1)).astype(np.int32)
        self.a, self.n, self.m = C.data, n, len(keys)

    def at(self, omega: float) -> sps.csr_matrix:
        e = np.exp(-1j * omega) / 2
        vals = np.concatenate([e * self.a, np.conj(e * self.a)])
        data = (np.bincount(self.inv, vals.real, self.m) + 1j * np.bincount(self.inv, vals.imag, self.m))
        return sps.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def _lanczos(matvec, start: np.ndarray, m: int = 24, keep: int = 8, tol: float = 1e-9,
             restarts: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Top eigenvector of a Hermitian operator by thick-restarted Lanczos.

    ``start`` holds one start vector or a block of them (rows).  Each cycle
    does Rayleigh-Ritz on the current basis (rows, fully reorthogonalised,
    projected matrix formed explicitly), keeps the ``keep`` best Ritz vectors,
    appends the residual of the top one and expands to ``m`` rows.  Because
    the projection is recomputed every cycle, any orthonormal block is a valid
    start.  When the Krylov space is invariant a fresh direction comes from a
    generator seeded inside this call, so repeated calls return identical bits.

    Returns the top Ritz vector and the kept Ritz block (best first).
    """
    start = np.atleast_2d(start)
    n = start.shape[1]
    m = min(m, n)
    keep = min(keep, m - 1)
    rng = np.random.default_rng(0)
    V = np.empty((m, n), dtype=complex)
    Vc = np.empty((m, n), dtype=complex)
    W = np.empty((m, n), dtype=complex)
    k = 0
    for row in start[: m - 1]:
        w = _orth(row, V[:k], Vc[:k])
        nw = np.linalg.norm(w)
        if nw > 1e-8 * np.linalg.norm(row):
            V[k] = w / nw
            Vc[k] = V[k].conj()
            W[k] = matvec(V[k])
            k += 1
    if k == 0:
        raise ValidationError("Lanczos start block is empty or zero")
    for _ in range(restarts):
        G = Vc[:k] @ W[:k].T
        theta, S = np.linalg.eigh((G + G.conj().T) / 2)
        s = S[:, -1]
        y = s @ V[:k]
        r = s @ W[:k] - theta[-1] * y
        nr = np.linalg.norm(r)
        kk = min(keep, k)
        Sk = S[:, ::-1][:, :kk].T
        if nr <= tol * max(1.0, abs(theta[-1])):
            return y / np.linalg.norm(y), Sk @ V[:k]
        V[:kk] = Sk @ V[:k]
        Vc[:kk] = V[:kk].conj()
        W[:kk] = Sk @ W[:k]
        k = kk
        w = _orth(r / nr, V[:k], Vc[:k])
        while k < m:
            nw = np.linalg.norm(w)
            while nw <= 1e-10:
                w = _orth(rng.standard_normal(n) + 1j * rng.standard_normal(n), V[:k], Vc[:k])
                nw = np.linalg.norm(w)
            V[k] = w / nw
            Vc[k] = V[k].conj()
            W[k] = matvec(V[k])
            k += 1
            if k < m:
                w = _orth(W[k - 1], V[:k], Vc[:k])
                w = w / max(np.linalg.norm(W[k - 1]), 1e-300)
    return y / np.linalg.norm(y), Sk @ V[:k]


def _lanczos_top(matvec, v: np.ndarray, **kw) -> np.ndarray:
    return _lanczos(matvec, v, **kw)[0]


def _top_vectors(kt: KoopmanTruncation, omegas: np.ndarray):
    A = kt.A
    n = A.shape[0]
    if n <= 64:
        Ad = A.toarray()
        for om in omegas:
            e = np.exp(-1j * om)
            Hm = (e * Ad + np.conj(e) * Ad.conj().T) / 2
            _, V = np.linalg.eigh(Hm)
            yield V[:, -1]
        return
    # The truncation commutes with n -> -n for even cocycles, so a start vector
    # inside one parity sector never sees the other.  Every start block
    # therefore carries a fixed generic vector next to the previous Ritz block.
    rng = np.random.default_rng(0)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g /= np.linalg.norm(g)
    block = np.empty((0, n), dtype=complex)
    pencil = _HermitianPencil(A)
    for om in omegas:
        v, ritz = _lanczos(pencil.at(om).dot, np.vstack([block, g]))
        block = ritz[:WARM_BLOCK]
        yield v


def twisted_eigen_search(sp: SkewProduct, k: int, N: int, omega_grid_size: int = GRID_SIZE,
                         threshold: float = FLAG_THRESHOLD, exclude_constant: bool | None = None,
                         grid: int | None = None) -> EigenSearchReport:
    """Residual floor of U_k - e^{i omega} on V_N over omega = 2 pi j / size."""
    if omega_grid_size < 1:
        raise ValidationError("omega_grid_size must be >= 1")
    kt = koopman_truncation(sp, k, N, exclude_constant, grid)
    omegas = 2 * np.pi * np.arange(omega_grid_size) / omega_grid_size
    res = np.empty(omega_grid_size)
    vecs = {}
    for i, v in enumerate(_top_vectors(kt, omegas)):
        z = np.exp(1j * omegas[i])
        res[i] = _residual(kt, v, z)
        if res[i] < REFINE_BELOW:
            vecs[i] = v
    for i, v in vecs.items():
        res[i] = min(res[i], _polish(kt, v, np.exp(1j * omegas[i])))
    flagged = omegas[res < threshold]
    excl = bool(k == 0) if exclude_constant is None else bool(exclude_constant)
    return EigenSearchReport(int(k), int(N), omegas, res, flagged, float(threshold), excl,
                             kt.quadrature, len(kt.box))
