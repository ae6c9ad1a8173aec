"""Birkhoff averages and correlation functions by Monte Carlo.

Base points are exact dyadic rationals (uint64 numerators), so orbits
of the base map carry no rounding drift.  The suspension flow is event
driven: height grows at unit speed and each ceiling hit costs one base
step, so flight segments and their integrals are closed form.

Samples are split into fixed blocks (see ``isoext.seeding``); per-block
means and second moments are merged with Chan's pairwise update, which
keeps results independent of the worker count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..base_dynamics import (HyperbolicToralMap, RoofFunction, dyadic_sample, dyadic_step,
                             dyadic_to_float)
from ..errors import ConfigMismatch, KindMismatch, ValidationError
from ..extension import Cocycle, SkewProduct
from ..fiber_groups import haar_sample_array, qnormalize, uniform_sphere
from ..seeding import BLOCK, map_blocks, stream
from ..trig import TrigPoly
from .observables import Observable

TWO_PI = 2.0 * np.pi
# Per-sample evaluation resolution folded into every standard error.  Some
# correlation estimates are exactly deterministic (all samples agree), so the
# Monte Carlo error alone can be 0; the floor keeps stderr meaningful there.
FP_FLOOR = 1e-12
_CHUNK = 1024


@dataclass(frozen=True)
class SuspensionSystem:
    """Suspension of ``base`` under ``roof``, times an optional circle rotating at ``fiber_rate``."""
    base: HyperbolicToralMap
    roof: RoofFunction
    fiber_rate: float | None = None

    @property
    def fiber_kind(self) -> str | None:
        return None if self.fiber_rate is None else "circle"


def as_system(system):
    """Plain toral maps become skew products with the trivial circle cocycle."""
    if isinstance(system, HyperbolicToralMap):
        return SkewProduct(system, Cocycle.constant("circle", 0.0))
    if isinstance(system, (SkewProduct, SuspensionSystem)):
        return system
    raise ValidationError(f"unsupported system type {type(system).__name__}")


# ----------------------------------------------------------- sampling

def sample_fiber(fiber_kind: str, rng: np.random.Generator, n: int) -> np.ndarray:
    if fiber_kind == "circle":
        return rng.uniform(0.0, TWO_PI, n)
    if fiber_kind == "rotation":
        return haar_sample_array("rotation", rng, n)
    if fiber_kind == "sphere":
        return uniform_sphere(rng, n)
    raise KindMismatch(f"unknown fiber kind {fiber_kind!r}")


def _roof_bound(roof: RoofFunction) -> float:
    return roof.c0 + sum(abs(a) + abs(b) for _, _, a, b in roof.poly.terms)


def sample_suspension(sys: SuspensionSystem, rng: np.random.Generator, n: int):
    """(K, h, theta) from the normalised invariant volume, by rejection."""
    rmax = _roof_bound(sys.roof)
    Ks, hs = [], []
    got = 0
    while got < n:
        m = max(2 * (n - got), 64)
        K = dyadic_sample(rng, m)
        h = rng.uniform(0.0, rmax, m)
        ok = h < sys.roof.poly(dyadic_to_float(K))
        Ks.append(K[ok])
        hs.append(h[ok])
        got += int(ok.sum())
    K = np.concatenate(Ks)[:n]
    h = np.concatenate(hs)[:n]
    th = rng.uniform(0.0, TWO_PI, n) if sys.fiber_rate is not None else np.zeros(n)
    return K, h, th


def _advance(sys: SuspensionSystem, K, h, r, dt: float):
    """Flow every sample forward by dt >= 0 (in place on copies)."""
    K, h, r = K.copy(), h + dt, r.copy()
    hit = h >= r
    while np.any(hit):
        h[hit] -= r[hit]
        K[hit] = dyadic_step(sys.base, K[hit], 1)
        r[hit] = sys.roof.poly(dyadic_to_float(K[hit]))
        hit = h >= r
    return K, h, r


# ----------------------------------------------------------- statistics

def _merge(stats):
    """Chan's pairwise merge of (n, mean, M2) triples, in the given order."""
    while len(stats) > 1:
        nxt = []
        for i in range(0, len(stats) - 1, 2):
            (na, ma, Ma), (nb, mb, Mb) = stats[i], stats[i + 1]
            n = na + nb
            d = mb - ma
            nxt.append((n, ma + d * (nb / n), Ma + Mb + np.abs(d) ** 2 * (na * nb / n)))
        if len(stats) % 2:
            nxt.append(stats[-1])
        stats = nxt
    return stats[0]


def _block_stats(z: np.ndarray):
    """z has shape (samples, m); returns (n, mean (m,), M2 (m,))."""
    m = z.mean(axis=0)
    return (z.shape[0], m, np.sum(np.abs(z - m) ** 2, axis=0))


@dataclass
class CorrelationSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    sample_count: int
    seed: int
    label: str = "correlation"
    meta: dict = field(default_factory=dict)

    def z_scores(self, target) -> np.ndarray:
        return np.abs(self.values - np.asarray(target)) / self.stderr


def _series(times, n, mean, M2, seed, label, meta) -> CorrelationSeries:
    var = M2 / max(n - 1, 1)
    rms = np.sqrt(np.maximum(np.abs(mean) ** 2 + var, 1.0))
    se = np.sqrt(var / n + (FP_FLOOR * rms) ** 2)
    return CorrelationSeries(np.asarray(times), mean, se, int(n), int(seed), label, meta)


# ----------------------------------------------------------- correlations

def _discrete_block(sp: SkewProduct, u: Observable, v: Observable, times, rng, n):
    fk = sp.fiber_kind
    K = dyadic_sample(rng, n)
    P = sample_fiber(fk, rng, n)
    X = dyadic_to_float(K)
    v0 = np.conj(v(X, P, fk))
    out = np.empty((n, len(times)), dtype=complex)
    t_cur = 0
    order = np.argsort(times, kind="stable")
    for idx in order:
        t = int(times[idx])
        while t_cur < t:
            P = sp.act_array(sp.A(X), P)
            if fk != "circle":
                P = qnormalize(P) if fk == "rotation" else P / np.linalg.norm(P, axis=-1, keepdims=True)
            K = dyadic_step(sp.base, K, 1)
            X = dyadic_to_float(K)
            t_cur += 1
        out[:, idx] = u(X, P, fk) * v0
    return out


def _flow_block(sys: SuspensionSystem, u: Observable, v: Observable, times, rng, n):
    K, h, th = sample_suspension(sys, rng, n)
    r = sys.roof.poly(dyadic_to_float(K))
    rate = 0.0 if sys.fiber_rate is None else sys.fiber_rate
    v0 = np.conj(v(dyadic_to_float(K), th, "circle", h, r))
    out = np.empty((n, len(times)), dtype=complex)
    t_cur = 0.0
    for idx in np.argsort(times, kind="stable"):
        t = float(times[idx])
        if t > t_cur:
            K, h, r = _advance(sys, K, h, r, t - t_cur)
            t_cur = t
        out[:, idx] = u(dyadic_to_float(K), th + rate * t, "circle", h, r) * v0
    return out


def correlation(system, u: Observable, v: Observable, times, n_samples: int, seed: int,
                workers: int = 1, label: str = "correlation", require_zero_mean: bool = False
                ) -> CorrelationSeries:
    """Monte Carlo C_t(u, v) = E[u(Phi_t w) conj v(w)]."""
    sys = as_system(system)
    times = np.asarray(times)
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    if require_zero_mean and not u.zero_average:
        raise ValidationError("a mixing verdict needs a zero-average observable u")
    is_flow = isinstance(sys, SuspensionSystem)
    if is_flow:
        if np.any(times < 0):
            raise ValidationError("flow times must be >= 0")
    elif np.any(times < 0) or np.any(np.asarray(times) != np.round(times)):
        raise ValidationError("discrete times must be non-negative integers")

    def run(i, a, b):
        rng = stream(seed, label, i)
        z = (_flow_block if is_flow else _discrete_block)(sys, u, v, times, rng, b - a)
        return _block_stats(z)

    n, mean, M2 = _merge(map_blocks(run, n_samples, workers))
    return _series(times, n, mean, M2, seed, label, {"workers": workers, "block": BLOCK})


# ----------------------------------------------------------- Birkhoff

def _segment_integral(omega, dur):
    """int_0^dur e^{i omega s} ds, stable for omega -> 0."""
    return dur * np.sinc(omega * dur / TWO_PI) * np.exp(0.5j * omega * dur)


def _flow_birkhoff(sys: SuspensionSystem, obs, T: float, rng, n: int) -> np.ndarray:
    K, h, th = sample_suspension(sys, rng, n)
    rate = 0.0 if sys.fiber_rate is None else sys.fiber_rate
    r = sys.roof.poly(dyadic_to_float(K))
    elapsed = np.zeros(n)
    chunks, buf, fill = [], np.zeros((_CHUNK, len(obs), n), dtype=complex), 0
    active = np.ones(n, dtype=bool)
    while np.any(active):
        X = dyadic_to_float(K)
        dur = np.where(active, np.minimum(r - h, T - elapsed), 0.0)
        for i, o in enumerate(obs):
            k = 0 if o.vertical is None else int(o.vertical)
            om = k * rate + TWO_PI * o.height_mode / r
            # value at the segment start times int_0^dur e^{i om s} ds
            start = o.base_values(X) * np.exp(1j * (k * (th + rate * elapsed) + TWO_PI * o.height_mode * h / r))
            buf[fill, i] = start * _segment_integral(om, dur)
        fill += 1
        if fill == _CHUNK:
            chunks.append(buf.sum(axis=0))
            buf[:] = 0
            fill = 0
        elapsed = elapsed + dur
        h = h + dur
        hit = active & (h >= r)
        K[hit] = dyadic_step(sys.base, K[hit], 1)
        h[hit] = 0.0
        r[hit] = sys.roof.poly(dyadic_to_float(K[hit]))
        active = elapsed < T
    chunks.append(buf[:fill].sum(axis=0))
    return np.sum(np.stack(chunks), axis=0) / T


def _discrete_birkhoff(sp: SkewProduct, obs, T: int, rng, n: int) -> np.ndarray:
    fk = sp.fiber_kind
    K = dyadic_sample(rng, n)
    P = sample_fiber(fk, rng, n)
    chunks, buf, fill = [], np.empty((_CHUNK, len(obs), n), dtype=complex), 0
    for _ in range(int(T)):
        X = dyadic_to_float(K)
        for i, o in enumerate(obs):
            buf[fill, i] = o(X, P, fk)
        fill += 1
        if fill == _CHUNK:
            chunks.append(buf.sum(axis=0))
            fill = 0
        P = sp.act_array(sp.A(X), P)
        if fk == "rotation":
            P = qnormalize(P)
        elif fk == "sphere":
            P = P / np.linalg.norm(P, axis=-1, keepdims=True)
        K = dyadic_step(sp.base, K, 1)
    chunks.append(buf[:fill].sum(axis=0))
    return np.sum(np.stack(chunks), axis=0) / T


@dataclass(frozen=True)
class BirkhoffResult:
    estimate: complex
    spread: float
    per_orbit: np.ndarray
    horizon: float

    def __iter__(self):
        return iter((self.estimate, self.spread))


def _spread(z: np.ndarray) -> float:
    """Largest of the real and imaginary sample standard deviations."""
    if len(z) < 2:
        return 0.0
    return float(max(np.std(z.real, ddof=1), np.std(z.imag, ddof=1)))


def birkhoff_averages(system, observables, T, n_orbits: int, seed: int, label: str = "birkhoff"
                      ) -> list[BirkhoffResult]:
    """Time averages of several observables along the same orbits."""
    if not T >= 1:
        raise ValidationError("horizon T must be >= 1")
    if n_orbits < 1:
        raise ValidationError("n_orbits must be >= 1")
    sys = as_system(system)
    rng = stream(seed, label, 0)
    if isinstance(sys, SuspensionSystem):
        for o in observables:
            if isinstance(o.vertical, tuple):
                raise KindMismatch("suspension fibers are circles")
        avg = _flow_birkhoff(sys, list(observables), float(T), rng, n_orbits)
    else:
        avg = _discrete_birkhoff(sys, list(observables), int(T), rng, n_orbits)
    return [BirkhoffResult(complex(a.mean()), _spread(a), a, float(T)) for a in avg]


def birkhoff_average(system, obs: Observable, T, n_orbits: int, seed: int) -> BirkhoffResult:
    """Mean and spread (max of Re/Im standard deviations) of per-orbit time averages."""
    return birkhoff_averages(system, [obs], T, n_orbits, seed)[0]


# ----------------------------------------------------------- counterexample

@dataclass
class CounterexampleReport:
    version: str                   # "flow" or "discrete"
    rate: float                    # lambda_0 (flow) or alpha (discrete)
    series: CorrelationSeries
    predicted: np.ndarray          # e^{i rate t} C_0
    max_z: float
    matches: bool
    birkhoff: list
    ergodic: bool
    spread_threshold: float

    @property
    def passed(self) -> bool:
        return self.matches and self.ergodic


def product_circle_counterexample(base, times, n_samples: int, seed: int, alpha: float | None = None,
                                  birkhoff_T: float = 1e5, n_orbits: int = 32, workers: int = 1,
                                  spread_threshold: float = 0.02) -> CounterexampleReport:
    """Product circle extension: ergodic, yet C_t(f, f) = e^{i rate t} ||f||^2 never decays."""
    if isinstance(base, SkewProduct):
        if base.fiber_kind != "circle":
            raise ConfigMismatch(f"counterexample needs a circle fiber, got {base.fiber_kind}")
        if not base.cocycle.is_constant or base.cocycle.twist is not None:
            raise ConfigMismatch("counterexample needs the product (constant) circle cocycle")
        alpha = base.cocycle.tau.mean()
        sys = base
    elif isinstance(base, SuspensionSystem):
        if base.roof.is_constant:
            raise ValidationError("flow counterexample needs a nonconstant (mixing) roof")
        sys = base if base.fiber_rate is not None else SuspensionSystem(base.base, base.roof, 1.0)
    elif isinstance(base, HyperbolicToralMap):
        if alpha is None:
            raise ValidationError("discrete counterexample needs alpha")
        sys = SkewProduct(base, Cocycle.constant("circle", alpha))
    else:
        raise ConfigMismatch(f"unsupported base {type(base).__name__}")

    flow = isinstance(sys, SuspensionSystem)
    rate = float(sys.fiber_rate if flow else alpha)
    f = Observable(vertical=1)
    times = np.asarray(times)
    if not np.any(times == 0):
        times = np.concatenate([[0], times])
    ser = correlation(sys, f, f, times, n_samples, seed, workers, label="counterexample")
    c0 = ser.values[np.flatnonzero(times == 0)[0]]
    pred = np.exp(1j * rate * times.astype(float)) * c0
    z = ser.z_scores(pred)
    second = (Observable(vertical=1, height_mode=-1) if flow
              else Observable(char=(1, 0), vertical=1))
    bk = birkhoff_averages(sys, [f, second], birkhoff_T, n_orbits, seed, label="counterexample-birkhoff")
    ergodic = all(b.spread < spread_threshold for b in bk)
    return CounterexampleReport("flow" if flow else "discrete", rate, ser, pred, float(z.max()),
                                bool(np.all(z <= 3.0)), bk, ergodic, spread_threshold)


# ----------------------------------------------------------- Anosov alternative

@dataclass
class AnosovAlternativeReport:
    constant: CorrelationSeries
    perturbed: CorrelationSeries
    c0: float
    period_checks: list            # (t, |C_t|, |C_0|, z)
    half_period: tuple | None      # (t, C_t, C_0)
    decay_time: float | None
    decay_ratio: float
    horizon: float
    non_mixing_witness: bool
    decayed: bool

    @property
    def verdicts(self) -> tuple[str, str]:
        return ("not mixing" if self.non_mixing_witness else "no witness",
                "mixing" if self.decayed else "no decay seen")

    @property
    def passed(self) -> bool:
        return self.non_mixing_witness and self.decayed


def anosov_alternative_suite(tmap: HyperbolicToralMap, roofs, times, n_samples: int, seed: int,
                             horizon: float = 50.0, workers: int = 1) -> AnosovAlternativeReport:
    """Constant roof: e^{2 pi i h / c0} is an eigenfunction.  Perturbed roof: correlations decay."""
    const, pert = roofs
    if not const.is_constant:
        raise ValidationError("first roof must be constant")
    c0 = float(const.c0)
    u = Observable(height_mode=1)
    base_t = np.asarray(times, dtype=float)
    tc = np.unique(np.concatenate([[0.0, 0.5 * c0, c0, 2 * c0], base_t]))
    sc = correlation(SuspensionSystem(tmap, const), u, u, tc, n_samples, seed, workers, label="anosov-constant")
    C0 = sc.values[0]
    checks = []
    for i, t in enumerate(tc):
        q = t / c0
        if t > 0 and abs(q - round(q)) < 1e-12:
            z = abs(abs(sc.values[i]) - abs(C0)) / np.hypot(sc.stderr[i], sc.stderr[0])
            checks.append((float(t), float(abs(sc.values[i])), float(abs(C0)), float(z)))
    ih = int(np.flatnonzero(np.isclose(tc, 0.5 * c0))[0])
    half = (float(tc[ih]), complex(sc.values[ih]), complex(C0))
    witness = bool(checks) and all(c[3] <= 3.0 for c in checks)

    tp = np.unique(np.concatenate([[0.0, float(horizon)], base_t[base_t <= horizon]]))
    sp_ = correlation(SuspensionSystem(tmap, pert), u, u, tp, n_samples, seed, workers, label="anosov-perturbed")
    ratio = np.abs(sp_.values) / abs(sp_.values[0])
    below = np.flatnonzero(ratio < 0.1)
    decay_time = float(tp[below[0]]) if below.size else None
    decayed = bool(ratio[-1] < 0.1)
    return AnosovAlternativeReport(sc, sp_, c0, checks, half, decay_time, float(ratio[-1]), float(horizon),
                                   witness, decayed)
