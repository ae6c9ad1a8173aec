"""The acceptance suite behind ``isoext verify``.

Each criterion builds its own system, runs the relevant diagnostics with
the seed, sample sizes and worker count from the configuration, and
returns a CriterionResult.  Metric rows are deterministic; runtimes are
reported separately so the CSV bodies can be compared byte for byte.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .base_dynamics import CAT_MAP, RoofFunction, dyadic_sample, dyadic_to_float
from .config import ExperimentConfig
from .extension import (Cocycle, SkewProduct, _rate, certified_depth, circle_increment, dyadic_orbits,
                        holonomy_partials)
from .fiber_groups import CircleElement, RotationElement, TWO_PI, circle_dist, uniform_sphere
from .parry import (anchor_element, classify_closure, conjugation_identity_check, enumerate_homoclinic,
                    generate_group, parry_element, principal_flags)
from .seeding import stream
from .trig import TrigPoly
from .ergodic_lab.invariants import build_Q_bundle, extend_invariant, fixed_vector_space
from .ergodic_lab.montecarlo import SuspensionSystem, anosov_alternative_suite, product_circle_counterexample
from .ergodic_lab.observables import Observable
from .ergodic_lab.spectrum import twisted_eigen_search

GOLDEN = 0.6180339887
ALPHA_GRID = TWO_PI * 311 / 2048        # on the omega grid of size 2048
CIRCLE_POINT = 0.7
PERTURBED_ROOF = RoofFunction(1.0, ((1, 0, 0.3, 0.0),))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metrics: list = field(default_factory=list)     # (metric, value, limit, ok)
    runtime: float = 0.0
    runtime_limit: float | None = None
    note: str = ""

    def add(self, metric: str, value, limit, ok: bool):
        self.metrics.append((metric, value, limit, bool(ok)))

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        rt = f"{self.runtime:.1f}s" + (f" < {self.runtime_limit:g}s" if self.runtime_limit else "")
        worst = [m for m in self.metrics if not m[3]]
        extra = f" failing: {', '.join(m[0] for m in worst)}" if worst else ""
        return f"[{tag}] criterion {self.number:2d} {self.name} ({rt}){extra}"


# ----------------------------------------------------------- shared systems

def trig_circle(alpha: float = ALPHA_GRID) -> SkewProduct:
    return SkewProduct(CAT_MAP, Cocycle.circle(alpha, [(1, 0, 0.3, 0.0)]))


def trig_rotation() -> SkewProduct:
    comps = [TrigPoly(0.4, [(1, 0, 0.3, 0.0), (0, 1, 0.0, 0.2)]),
             TrigPoly(-0.2, [(0, 1, 0.25, 0.0)]),
             TrigPoly(0.7, [(1, 1, 0.0, 0.15)])]
    return SkewProduct(CAT_MAP, Cocycle.rotation(comps))


CIRCLE_TWIST = TrigPoly(0.0, [(1, 0, 0.0, 0.4), (0, 1, 0.0, 0.25)])       # vanishes at the anchor
SPHERE_TWIST = [TrigPoly(0.0, [(1, 0, 0.0, 0.3)]), TrigPoly(0.0, [(0, 1, 0.0, 0.2)]),
                TrigPoly(0.0, [(1, 1, 0.0, 0.25)])]


def axial_sphere(alpha: float = TWO_PI * 0.3183098861837907) -> SkewProduct:
    """Rotations about z, conjugated by a coboundary that is trivial at the anchor."""
    comps = [TrigPoly(0.0), TrigPoly(0.0), TrigPoly(alpha, [(1, 0, 0.3, 0.0)])]
    return SkewProduct(CAT_MAP, Cocycle.rotation(comps, twist=SPHERE_TWIST), fiber="sphere")


def parry_generators(sp: SkewProduct, R: int, tol: float):
    hs = enumerate_homoclinic(sp.base, R)
    return hs, [parry_element(sp, h, tol) for h in hs] + [anchor_element(sp)]


def z_rotations(angles):
    return [RotationElement.from_axis_angle((0, 0, 1), a) for a in angles]


# ----------------------------------------------------------- criteria

def c1_counterexample(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(1, "counterexample: C_t = e^{it} C_0, Birkhoff spread < 0.02", False, runtime_limit=60)
    sysf = SuspensionSystem(CAT_MAP, PERTURBED_ROOF, 1.0)
    times = 2.5 * np.arange(1, 21)
    rep = product_circle_counterexample(sysf, times, cfg.sampling.n_samples, cfg.sampling.seed,
                                        birkhoff_T=1e5, n_orbits=cfg.sampling.n_orbits, workers=cfg.workers)
    z = rep.series.z_scores(rep.predicted)
    r.add("max_z_vs_e^{it}C_0", float(z.max()), 3.0, z.max() <= 3.0)
    r.add("sampled_times", float(np.sum(rep.series.times > 0)), 20, np.sum(rep.series.times > 0) == 20)
    r.add("max_|C_t|-1", float(np.max(np.abs(np.abs(rep.series.values) - 1))), None, True)
    for i, b in enumerate(rep.birkhoff):
        r.add(f"birkhoff_spread_obs{i}", b.spread, 0.02, b.spread < 0.02)
    return r


def c2_holonomy(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(2, "holonomy: residual rate = lambda_s, certified bound holds", False, runtime_limit=5)
    sp = trig_circle()
    lam = sp.base.lambda_s
    rng = stream(cfg.sampling.seed, "acceptance-holonomy", 0)
    npairs = cfg.sampling.leaf_pairs
    K = dyadic_sample(rng, npairs)
    s = rng.uniform(-0.25, 0.25, npairs)
    depth = 64
    Xorb = dyadic_orbits(sp.base, K, depth)
    H = holonomy_partials(sp, Xorb, s, "stable")
    disp = (s[None, :] * (lam ** np.arange(depth))[:, None])[..., None] * sp.base.v_s
    res = np.abs(circle_increment(sp, Xorb, disp))     # residual at depth n = d(H_n, H_{n-1}), n = 1..depth
    logs = np.log(res[9:31])                           # depths 10..31 (index n-1)
    d = np.arange(10, 32)
    slope = np.polyfit(d, logs.mean(axis=1), 1)[0]
    rate = float(np.exp(slope))
    r.add("fitted_rate_depth10-30", rate, lam, abs(rate / lam - 1) <= 0.10)
    r.add("rate_rel_error", abs(rate / lam - 1), 0.10, abs(rate / lam - 1) <= 0.10)
    step = np.exp(np.diff(logs.mean(axis=1)))
    r.add("geomean_step_ratio_min", float(step.min()), None, True)
    r.add("geomean_step_ratio_max", float(step.max()), None, True)
    # certified error against the depth-64 limit
    L = sp.lipschitz
    rate_s = _rate(sp, "stable")
    worst = 0.0
    resid_ok = True
    for tol in (1e-6, 1e-8, 1e-10):
        n = np.array([certified_depth(L, si, rate_s, tol) for si in s])
        cert = L * np.abs(s) * rate_s ** n / (1 - rate_s)
        got = H[n, np.arange(npairs)]
        err = circle_dist(got, H[-1])
        worst = max(worst, float(np.max(err / cert)))
        resid = circle_dist(H[n, np.arange(npairs)], H[np.maximum(n - 1, 0), np.arange(npairs)])
        resid_ok &= bool(np.all(resid <= cert))
    r.add("max_error/certified", worst, 1.0, worst <= 1.0)
    r.add("residual<=certified", float(resid_ok), 1, resid_ok)
    return r


def c3_conjugation(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(3, "conjugation identity defect <= 5 tol", False, runtime_limit=30)
    tol = 1e-8
    hs = enumerate_homoclinic(CAT_MAP, 2)[:10]
    shifts = [(1, -1), (2, -1), (1, -2), (3, -3)]
    for name, sp in (("circle", trig_circle()), ("rotation", trig_rotation())):
        worst = max(conjugation_identity_check(sp, h, sh, tol) for h in hs for sh in shifts)
        r.add(f"max_defect_{name}", worst, 5 * tol, worst <= 5 * tol)
    r.add("checks_per_cocycle", float(len(hs) * len(shifts)), 40, len(hs) * len(shifts) == 40)
    return r


def _verdicts(samples, eps, ctol):
    return [classify_closure(S, density_eps=eps, closure_tol=ctol).label() for S in samples]


def c4_trichotomy(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(4, "transitivity trichotomy and verdict stability", False, runtime_limit=20)
    tol = cfg.tolerances
    eps, ctol = 0.05, tol.closure_tol
    samples = [generate_group([CircleElement(TWO_PI / 3)], 10, tol.dedup_tol, cfg.sampling.cap),
               generate_group([CircleElement(TWO_PI * GOLDEN)], 200, tol.dedup_tol, cfg.sampling.cap),
               generate_group(z_rotations([TWO_PI * 0.61803, TWO_PI * 0.31831]), 40, tol.dedup_tol,
                              cfg.sampling.cap)]
    v = _verdicts(samples, eps, ctol)
    v_half = _verdicts(samples, eps / 2, ctol / 2)
    want = ["Finite(3, cyclic)", "FullGroup", "OneParameterSubgroup(0.000000, 0.000000, 1.000000)"]
    r.add("finite_3", float(v[0] == want[0]), 1, v[0] == want[0])
    r.add("golden_full", float(v[1] == want[1]), 1, v[1] == want[1])
    r.add("coaxial_one_parameter_z", float(v[2] == want[2]), 1, v[2] == want[2])
    stable = all(a == b for a, b in zip(v, v_half))
    r.add("stable_under_halving", float(stable), 1, stable)
    r.note = "; ".join(v)
    return r


def c5_spectrum(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(5, "twisted eigenvalue search", False, runtime_limit=120)
    g = cfg.sampling.omega_grid
    const = SkewProduct(CAT_MAP, Cocycle.constant("circle", ALPHA_GRID))
    rc = twisted_eigen_search(const, 1, 16, g)
    exact = len(rc.flagged) == 1 and abs(rc.flagged[0] - ALPHA_GRID) < 1e-12
    r.add("constant_flags_exactly_alpha", float(exact), 1, exact)
    ia = int(np.argmin(np.abs(rc.omega_grid - ALPHA_GRID)))
    r.add("constant_residual_at_alpha", float(rc.residuals[ia]), 1e-12, rc.residuals[ia] < 1e-12)
    sp = trig_circle()
    r16 = twisted_eigen_search(sp, 1, 16, g)
    r24 = twisted_eigen_search(sp, 1, 24, g)
    r.add("perturbed_flags_N16", float(len(r16.flagged)), 0, len(r16.flagged) == 0)
    r.add("perturbed_flags_N24", float(len(r24.flagged)), 0, len(r24.flagged) == 0)
    r.add("floor_N16", r16.min_residual, 0.05, r16.min_residual > 0.05)
    r.add("floor_N24", r24.min_residual, 0.05, r24.min_residual > 0.05)
    rel = abs(r16.min_residual - r24.min_residual) / r24.min_residual
    r.add("floor_rel_change_16_24", rel, 0.20, rel <= 0.20)
    return r


def c6_psi(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(6, "Psi isometry defects < 1e-3, quadratic norm scaling", False, runtime_limit=30)
    sp = axial_sphere()
    tol = cfg.tolerances
    _, gens = parry_generators(sp, 1, 1e-10)
    S = generate_group(gens, 12, tol.dedup_tol, 5000)
    rep = classify_closure(S, density_eps=tol.density_eps, closure_tol=tol.closure_tol)
    r.add("closure_one_parameter", float(rep.verdict == "OneParameterSubgroup"), 1,
          rep.verdict == "OneParameterSubgroup")
    u = Observable(vertical=(1, 0))
    n1 = cfg.sampling.fiber_grid
    a = extend_invariant(sp, u, S, cfg.sampling.base_grid, n1, seed=cfg.sampling.seed)
    b = extend_invariant(sp, u, S, cfg.sampling.base_grid, 2 * n1, seed=cfg.sampling.seed)
    for rr, n in ((a, n1), (b, 2 * n1)):
        r.add(f"path_defect_n{n}", rr.path_defect, 1e-3, rr.path_defect < 1e-3)
        r.add(f"invariance_defect_n{n}", rr.invariance_defect, 1e-3, rr.invariance_defect < 1e-3)
        r.add(f"norm_defect_n{n}", rr.norm_defect, 1e-3, rr.norm_defect < 1e-3)
    order = float(np.log2(a.norm_defect / b.norm_defect))
    r.add("norm_defect_order", order, 2.0, abs(order - 2.0) <= 0.2)
    return r


def c7_fixed(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(7, "fixed-vector dimensions", False, runtime_limit=10)
    L = 2
    triv = generate_group([CircleElement(0.0)], 4, 1e-7, 100)
    full = generate_group([CircleElement(TWO_PI * GOLDEN)], 200, 1e-7, 20000)
    axial = generate_group(z_rotations([TWO_PI * 0.61803, TWO_PI * 0.31831]), 12, 1e-7, 20000)
    d1 = fixed_vector_space(triv, "circle", L).dimension
    d2 = fixed_vector_space(full, "circle", L).dimension
    d3 = fixed_vector_space(axial, "sphere", L).dimension
    r.add("trivial_circle_dim", float(d1), 2 * L + 1, d1 == 2 * L + 1)
    r.add("full_circle_dim", float(d2), 1, d2 == 1)
    r.add("axial_sphere_dim", float(d3), L + 1, d3 == L + 1)
    return r


def c8_bundle(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(8, "Q(p) two-route consistency", False, runtime_limit=30)
    tol = cfg.tolerances
    htol = tol.holonomy_tol
    for name, a0 in (("finite3", TWO_PI / 3), ("full", TWO_PI * GOLDEN)):
        sp = SkewProduct(CAT_MAP, Cocycle.circle(a0, [], twist=CIRCLE_TWIST))
        hs, gens = parry_generators(sp, 1, 1e-10)
        S = generate_group(gens, 200, tol.dedup_tol, cfg.sampling.cap)
        rep = classify_closure(S, density_eps=tol.density_eps, closure_tol=tol.closure_tol)
        want = "Finite" if name == "finite3" else "FullGroup"
        r.add(f"{name}_verdict", float(rep.verdict == want), 1, rep.verdict == want)
        B = build_Q_bundle(sp, CIRCLE_POINT, hs, S, htol, rep, cfg.sampling.bundle_points)
        r.add(f"{name}_max_hausdorff", float(B.hausdorff.max()), B.bound, B.passed)
        r.add(f"{name}_points", float(len(B.points)), 20, len(B.points) == 20)
        if name == "finite3":
            ok = all(c == 3 for c in B.cardinality)
            r.add("finite3_cardinality_all_3", float(ok), 1, ok)
    return r


def c9_anosov(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(9, "Anosov alternative", False, runtime_limit=60)
    c0 = 1.3
    times = np.linspace(0, 50, 26)
    rep = anosov_alternative_suite(CAT_MAP, (RoofFunction(c0, ()), PERTURBED_ROOF), times,
                                   cfg.sampling.n_samples, cfg.sampling.seed, 50.0, cfg.workers)
    zc = next(c for c in rep.period_checks if abs(c[0] - c0) < 1e-12)
    r.add("constant_|C_c0|-|C_0|_z", zc[3], 3.0, zc[3] <= 3.0)
    worst = max(c[3] for c in rep.period_checks)
    r.add("constant_all_periods_max_z", worst, 3.0, worst <= 3.0)
    half = rep.half_period
    r.add("constant_C_half_plus_C0", float(abs(half[1] + half[2])), None, True)
    r.add("perturbed_|C_50|/|C_0|", rep.decay_ratio, 0.1, rep.decay_ratio < 0.1)
    return r


def c10_principal(cfg: ExperimentConfig) -> CriterionResult:
    r = CriterionResult(10, "principal orbits have full measure", False, runtime_limit=10)
    S = generate_group(z_rotations([TWO_PI * GOLDEN]), 100, 1e-7, 1000)
    rng = stream(cfg.sampling.seed, "acceptance-principal", 0)
    P = uniform_sphere(rng, 10000)
    ok = principal_flags(S, P, 1e-6, seed=cfg.sampling.seed)
    frac = 1.0 - float(ok.mean())
    r.add("non_principal_fraction", frac, 1e-3, frac < 1e-3)
    poles = principal_flags(S, np.array([[0, 0, 1.0], [0, 0, -1.0]]), 1e-6, seed=cfg.sampling.seed)
    r.add("poles_non_principal", float(not poles.any()), 1, not poles.any())
    return r


CRITERIA = [c1_counterexample, c2_holonomy, c3_conjugation, c4_trichotomy, c5_spectrum, c6_psi,
            c7_fixed, c8_bundle, c9_anosov, c10_principal]


def run_criterion(fn, cfg: ExperimentConfig) -> CriterionResult:
    t = time.perf_counter()
    r = fn(cfg)
    r.runtime = time.perf_counter() - t
    within = r.runtime_limit is None or r.runtime < r.runtime_limit
    r.passed = all(m[3] for m in r.metrics) and within
    if not within:
        r.note = (r.note + "; " if r.note else "") + f"runtime {r.runtime:.1f}s over {r.runtime_limit:g}s"
    return r


def run_suite(cfg: ExperimentConfig, only=None, log=None) -> list[CriterionResult]:
    out = []
    for fn in CRITERIA:
        num = int(fn.__name__[1:].split("_")[0])
        if only and num not in only:
            continue
        res = run_criterion(fn, cfg)
        if log:
            log(res.line())
        out.append(res)
    return out
