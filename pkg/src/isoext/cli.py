"""Command-line runner: one subcommand per diagnostic, JSON summary plus CSV tables.

Every CSV row starts with the provenance columns ``config_hash, seed,
operation``; floats are written with 17 significant digits and rows end in
``\\n``.  The JSON summary carries the resolved configuration, its hash, the
tool version and the wall clock (which is excluded from the CSV bodies, so
two runs with the same config, seed and worker count give identical CSVs).

Exit codes: 0 ok, 2 invalid input, 3 a checked invariant failed, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .base_dynamics import RoofFunction, dyadic_sample, dyadic_step, dyadic_to_float
from .config import ExperimentConfig, acceptance_config, load_config
from .errors import (ContractViolation, CutLocus, IsoextError, KindMismatch, NoConvergence,
                     TruncationTooSmall, ValidationError)
from .extension import element_value, g_dist, leaf_holonomy
from .fiber_groups import RotationElement
from .parry import (anchor_element, classify_closure, conjugation_identity_check, enumerate_homoclinic,
                    generate_group, parry_element)
from .seeding import stream

SCHEMA_VERSION = 1
OUT_ENV = "ISOEXT_OUT"
DEFAULT_OUT = "isoext-out"
PROVENANCE = ("config_hash", "seed", "operation")


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class Report:
    operation: str
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)


# ----------------------------------------------------------- formatting

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(table: Table, cfg_hash: str, seed: int, operation: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(PROVENANCE) + list(table.columns))
    for row in table.rows:
        w.writerow([cfg_hash, str(seed), operation] + [fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    return v


def fiber_columns(kind: str, prefix: str = "g") -> list:
    return [f"{prefix}_angle"] if kind == "circle" else [f"{prefix}_q{i}" for i in range(4)]


def fiber_cells(v) -> list:
    a = np.atleast_1d(np.asarray(element_value(v), dtype=float))
    return [float(x) for x in a]


# ----------------------------------------------------------- shared pieces

def fiber_point(cfg: ExperimentConfig):
    """Anchor fiber point as an array: angle, quaternion or unit vector."""
    fp = cfg.anchor.fiber_point
    if cfg.fiber == "sphere":
        v = np.asarray(fp, dtype=float)
        return v / np.linalg.norm(v)
    if cfg.cocycle.kind == "circle":
        return float(fp)
    return RotationElement.from_axis_angle((0, 0, 1), float(fp)).q


def transitivity(cfg: ExperimentConfig):
    sp = cfg.skew_product
    tol = cfg.tolerances
    hs = enumerate_homoclinic(sp.base, cfg.anchor.homoclinic_radius)
    gens = [parry_element(sp, h, tol.holonomy_tol) for h in hs] + [anchor_element(sp)]
    sample = generate_group(gens, cfg.sampling.word_len, tol.dedup_tol, cfg.sampling.cap)
    rep = classify_closure(sample, density_eps=tol.density_eps, closure_tol=tol.closure_tol)
    return hs, gens, sample, rep


def _evidence(rep) -> dict:
    return {k: v for k, v in rep.evidence.items() if np.isscalar(v) or v is None}


# ----------------------------------------------------------- operations

def op_simulate(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.montecarlo import birkhoff_average
    sp = cfg.skew_product
    s = cfg.sampling
    rep = Report("simulate")
    K = dyadic_sample(stream(s.seed, "simulate", 0), s.n_orbits)
    p0 = fiber_point(cfg)
    P = np.broadcast_to(p0, (s.n_orbits,) + np.shape(p0)).copy()
    cols = ["orbit", "step", "x1", "x2"] + (
        ["p_angle"] if np.ndim(p0) == 0 else [f"p{i}" for i in range(np.size(p0))])
    t = Table(cols)
    for n in range(s.steps + 1):
        X = dyadic_to_float(K)
        for i in range(s.n_orbits):
            t.rows.append([i, n, X[i, 0], X[i, 1]] + [float(v) for v in np.atleast_1d(P[i])])
        if n < s.steps:
            P = sp.act_array(sp.A(X), P)
            K = dyadic_step(sp.base, K, 1)
    rep.tables["orbits"] = t
    obs = cfg.observable_obj
    b = Table(["horizon", "estimate_re", "estimate_im", "spread", "n_orbits"])
    for T in s.horizons:
        r = birkhoff_average(sp, obs, T, s.n_orbits, s.seed)
        b.rows.append([T, r.estimate.real, r.estimate.imag, r.spread, s.n_orbits])
    rep.tables["birkhoff"] = b
    rep.results["space_average_zero"] = obs.zero_average
    rep.results["birkhoff"] = [{"horizon": row[0], "estimate": complex(row[1], row[2]), "spread": row[3]}
                               for row in b.rows]
    return rep


def op_holonomy(cfg: ExperimentConfig) -> Report:
    sp = cfg.skew_product
    s = cfg.sampling
    tol = cfg.tolerances.holonomy_tol
    rep = Report("holonomy")
    rng = stream(s.seed, "holonomy", 0)
    X = dyadic_to_float(dyadic_sample(rng, s.leaf_pairs))
    svals = rng.uniform(-0.25, 0.25, s.leaf_pairs)
    t = Table(["pair", "leaf", "s", "x1", "x2", "depth"] + fiber_columns(sp.kind)
              + ["residual", "certified_error"])
    worst = 0.0
    for which in ("stable", "unstable"):
        for i in range(s.leaf_pairs):
            h = leaf_holonomy(sp, X[i], float(svals[i]), which, tol)
            t.rows.append([i, which, svals[i], X[i, 0], X[i, 1], h.depth] + fiber_cells(h.element)
                          + [h.residual, h.certified_error])
            if h.certified_error > 0:
                worst = max(worst, h.residual / h.certified_error)
            if h.certified_error >= tol:
                rep.violations.append(f"pair {i} {which}: certified error {h.certified_error:.3g} >= tol")
    rep.tables["holonomy"] = t
    rep.results.update(pairs=s.leaf_pairs, tol=tol, max_residual_over_certified=worst)
    if worst > 1.0:
        rep.violations.append(f"residual exceeds certified error (ratio {worst:.3g})")
    return rep


def op_parry(cfg: ExperimentConfig) -> Report:
    sp = cfg.skew_product
    tol = cfg.tolerances.holonomy_tol
    rep = Report("parry")
    hs = enumerate_homoclinic(sp.base, cfg.anchor.homoclinic_radius)
    t = Table(["index", "k1", "k2", "t", "s", "back", "forward"] + fiber_columns(sp.kind))
    c = Table(["index", "shift_k1", "shift_k2", "defect", "limit"])
    worst, skipped = 0.0, 0
    for i, h in enumerate(hs):
        g = parry_element(sp, h, tol)
        t.rows.append([i, int(h.k[0]), int(h.k[1]), h.t, h.s, h.back, h.forward] + fiber_cells(g))
        for k1, k2 in cfg.anchor.shifts:
            try:
                d = conjugation_identity_check(sp, h, (k1, k2), tol)
            except ValidationError:
                skipped += 1
                continue
            c.rows.append([i, k1, k2, d, 5 * tol])
            worst = max(worst, d)
    rep.tables["homoclinic"] = t
    rep.tables["conjugation"] = c
    rep.results.update(homoclinic_points=len(hs), anchor_element=fiber_cells(anchor_element(sp)),
                       max_conjugation_defect=worst, shifts_outside_leaf_radius=skipped)
    if worst > 5 * tol:
        rep.violations.append(f"conjugation identity defect {worst:.3g} > {5 * tol:.3g}")
    return rep


def op_classify(cfg: ExperimentConfig) -> Report:
    rep = Report("classify-group")
    hs, gens, sample, tr = transitivity(cfg)
    t = Table(["index"] + fiber_columns(sample.kind))
    for i, e in enumerate(sample.elements):
        t.rows.append([i] + [float(v) for v in np.atleast_1d(e)])
    rep.tables["elements"] = t
    rep.results.update(verdict=tr.verdict, label=tr.label(), order=tr.order, name=tr.name, axis=tr.axis,
                       generators=len(gens), sample_size=len(sample), saturated=sample.saturated,
                       evidence=_evidence(tr))
    return rep


def op_correlate(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.montecarlo import correlation
    s = cfg.sampling
    u = cfg.observable_obj
    rep = Report("correlate")
    ser = correlation(cfg.skew_product, u, u, s.times, s.n_samples, s.seed, cfg.workers, label="correlate")
    t = Table(["t", "re", "im", "abs", "stderr"])
    for tt, v, e in zip(ser.times, ser.values, ser.stderr):
        t.rows.append([tt, v.real, v.imag, abs(v), e])
    rep.tables["correlation"] = t
    rep.results.update(samples=ser.sample_count, zero_average=u.zero_average)
    return rep


def op_spectrum(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.spectrum import twisted_eigen_search
    s = cfg.sampling
    rep = Report("spectrum")
    r = twisted_eigen_search(cfg.skew_product, s.mode, s.truncation_N, s.omega_grid)
    t = Table(["index", "omega", "residual", "flagged"])
    for i, (om, res) in enumerate(zip(r.omega_grid, r.residuals)):
        t.rows.append([i, om, res, bool(res < r.threshold)])
    rep.tables["residuals"] = t
    rep.results.update(mode=r.mode, N=r.N, dimension=r.dimension, quadrature=r.quadrature,
                       min_residual=r.min_residual, argmin_omega=r.argmin_omega,
                       flagged=[float(x) for x in r.flagged], threshold=r.threshold)
    return rep


def op_bundle(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.invariants import build_Q_bundle
    sp = cfg.skew_product
    rep = Report("bundle")
    hs, _, sample, tr = transitivity(cfg)
    b = build_Q_bundle(sp, fiber_point(cfg), hs, sample, cfg.tolerances.holonomy_tol, tr,
                       cfg.sampling.bundle_points)
    t = Table(["point", "homoclinic", "j", "x1", "x2", "hausdorff", "cardinality"])
    for i, ((hi, j), x, d, n) in enumerate(zip(b.points, b.base, b.hausdorff, b.cardinality)):
        t.rows.append([i, hi, j, x[0], x[1], d, n])
    rep.tables["fibers"] = t
    rep.results.update(verdict=tr.label(), bound=b.bound, resolution=b.resolution,
                       max_hausdorff=float(np.max(b.hausdorff)), cardinalities=sorted(set(b.cardinality)))
    if not b.passed:
        rep.violations.append(f"two-route Hausdorff defect {np.max(b.hausdorff):.3g} > bound {b.bound:.3g}")
    return rep


def op_psi(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.invariants import extend_invariant
    s = cfg.sampling
    rep = Report("psi-check")
    _, _, sample, tr = transitivity(cfg)
    r = extend_invariant(cfg.skew_product, cfg.observable_obj, sample, s.base_grid, s.fiber_grid,
                         seed=s.seed)
    t = Table(["defect", "value", "limit"])
    for name in ("path_defect", "invariance_defect", "norm_defect"):
        t.rows.append([name, getattr(r, name), 1e-3])
    rep.tables["defects"] = t
    rep.results.update(verdict=tr.label(), norm_estimate=r.norm_estimate, norm_reference=r.norm_reference,
                       orbit_variation=r.orbit_variation, base_grid=r.base_grid, fiber_grid=r.fiber_grid,
                       volume=r.volume_factor)
    if r.max_defect >= 1e-3:
        rep.violations.append(f"Psi defect {r.max_defect:.3g} >= 1e-3")
    return rep


def _series_table(ser) -> Table:
    t = Table(["t", "re", "im", "abs", "stderr"])
    for tt, v, e in zip(ser.times, ser.values, ser.stderr):
        t.rows.append([tt, v.real, v.imag, abs(v), e])
    return t


def op_counterexample(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.montecarlo import SuspensionSystem, product_circle_counterexample
    s = cfg.sampling
    rep = Report("counterexample")
    sysf = SuspensionSystem(cfg.tmap, cfg.roof, 1.0)
    r = product_circle_counterexample(sysf, s.times, s.n_samples, s.seed, birkhoff_T=max(s.horizons),
                                      n_orbits=s.n_orbits, workers=cfg.workers)
    t = _series_table(r.series)
    t.columns += ["predicted_re", "predicted_im", "z"]
    z = r.series.z_scores(r.predicted)
    for row, p, zz in zip(t.rows, r.predicted, z):
        row += [p.real, p.imag, zz]
    rep.tables["correlation"] = t
    b = Table(["observable", "estimate_re", "estimate_im", "spread", "horizon"])
    for i, bk in enumerate(r.birkhoff):
        b.rows.append([i, bk.estimate.real, bk.estimate.imag, bk.spread, bk.horizon])
    rep.tables["birkhoff"] = b
    rep.results.update(rate=r.rate, max_z=r.max_z, matches=r.matches, ergodic=r.ergodic,
                       spread_threshold=r.spread_threshold)
    if not r.passed:
        rep.violations.append("counterexample not reproduced (correlation mismatch or Birkhoff spread)")
    return rep


def op_anosov(cfg: ExperimentConfig) -> Report:
    from .ergodic_lab.montecarlo import anosov_alternative_suite
    s = cfg.sampling
    rep = Report("anosov-alternative")
    const = RoofFunction(cfg.roof.c0, ())
    horizon = float(max(s.times))
    r = anosov_alternative_suite(cfg.tmap, (const, cfg.roof), s.times, s.n_samples, s.seed, horizon,
                                 cfg.workers)
    rep.tables["constant_roof"] = _series_table(r.constant)
    rep.tables["perturbed_roof"] = _series_table(r.perturbed)
    p = Table(["t", "abs_C_t", "abs_C_0", "z"])
    p.rows = [list(c) for c in r.period_checks]
    rep.tables["period_checks"] = p
    rep.results.update(c0=r.c0, verdicts=list(r.verdicts), decay_time=r.decay_time, decay_ratio=r.decay_ratio,
                       horizon=r.horizon, half_period=r.half_period)
    return rep


def op_verify(cfg: ExperimentConfig, determinism: bool = False, log=print) -> Report:
    from .acceptance import run_suite
    rep = Report("verify")
    first = _verify_once(cfg, run_suite, log)
    rep.tables["criteria"], results, failed = first
    rep.results["criteria"] = results
    if determinism:
        again = _verify_once(cfg, run_suite, None)[0]
        h = cfg.hash()
        same = csv_text(again, h, cfg.sampling.seed, "verify") == csv_text(first[0], h, cfg.sampling.seed,
                                                                            "verify")
        log(f"[{'PASS' if same else 'FAIL'}] criterion 11 determinism: verify CSV bodies identical across runs")
        rep.results["criteria"].append({"number": 11, "passed": same})
        if not same:
            failed.append(11)
    if failed:
        rep.violations.append(f"acceptance criteria failed: {failed}")
    return rep


def _verify_once(cfg, run_suite, log):
    res = run_suite(cfg, log=log)
    t = Table(["criterion", "metric", "value", "limit", "ok"])
    summary, failed = [], []
    for r in res:
        for name, value, limit, ok in r.metrics:
            t.rows.append([r.number, name, value, limit, ok])
        t.rows.append([r.number, "runtime_within_limit", None, r.runtime_limit,
                       r.runtime_limit is None or r.runtime < r.runtime_limit])
        summary.append({"number": r.number, "name": r.name, "passed": r.passed, "runtime": r.runtime,
                        "runtime_limit": r.runtime_limit, "note": r.note})
        if not r.passed:
            failed.append(r.number)
    return t, summary, failed


OPERATIONS = {
    "simulate": (op_simulate, "iterate the skew product and report Birkhoff averages"),
    "holonomy": (op_holonomy, "stable and unstable holonomies on random leaf pairs"),
    "parry": (op_parry, "homoclinic points, Parry elements and the conjugation identity"),
    "classify-group": (op_classify, "generate and classify the transitivity group"),
    "correlate": (op_correlate, "Monte Carlo correlation of the configured observable"),
    "spectrum": (op_spectrum, "unit-circle eigenvalue search for the twisted Koopman operator"),
    "bundle": (op_bundle, "two-route consistency of the invariant sub-bundle"),
    "psi-check": (op_psi, "extend an invariant fiber function and report its defects"),
    "counterexample": (op_counterexample, "ergodic, non-mixing product circle extension of a flow"),
    "anosov-alternative": (op_anosov, "constant versus perturbed roof suspension"),
    "verify": (op_verify, "run the acceptance suite"),
}


# ----------------------------------------------------------- driver

def write_report(rep: Report, cfg: ExperimentConfig, out: Path, fmt_: str, wall: float) -> list:
    out.mkdir(parents=True, exist_ok=True)
    h, seed = cfg.hash(), cfg.sampling.seed
    stem = rep.operation.replace("-", "_")
    written = []
    files = {}
    if fmt_ in ("csv", "both"):
        for name, t in rep.tables.items():
            path = out / f"{stem}_{name}.csv"
            path.write_text(csv_text(t, h, seed, rep.operation), encoding="utf-8", newline="")
            files[name] = path.name
            written.append(path)
    if fmt_ in ("json", "both"):
        doc = {"schema_version": SCHEMA_VERSION, "tool": "isoext", "tool_version": __version__,
               "operation": rep.operation, "config_hash": h, "seed": seed, "workers": cfg.workers,
               "wall_clock_s": wall, "status": "violation" if rep.violations else "ok",
               "violations": rep.violations, "results": _jsonable(rep.results), "tables": files,
               "config": cfg.to_dict()}
        path = out / f"{stem}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isoext", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"isoext {__version__}")
    ap.add_argument("--print-default", action="store_true", help="print the default configuration and exit")
    sub = ap.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name, (_, help_) in OPERATIONS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML configuration (default: the shipped acceptance config)")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="master seed, overrides sampling.seed")
        p.add_argument("--workers", type=int, help="worker threads, overrides workers")
        p.add_argument("--format", choices=("json", "csv", "both"), default="both")
        if name == "verify":
            p.add_argument("--determinism", action="store_true",
                           help="run the suite twice and compare the CSV bodies")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else acceptance_config()
    if args.seed is not None or args.workers is not None:
        d = cfg.to_dict()
        if args.seed is not None:
            d["sampling"]["seed"] = args.seed
        if args.workers is not None:
            d["workers"] = args.workers
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.print_default:
        sys.stdout.write(acceptance_config().dumps())
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        print("isoext: error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
        fn = OPERATIONS[args.command][0]
        t0 = time.perf_counter()
        rep = fn(cfg, args.determinism) if args.command == "verify" else fn(cfg)
        wall = time.perf_counter() - t0
        out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        for path in write_report(rep, cfg, out, args.format, wall):
            print(f"wrote {path}")
        if rep.violations:
            for v in rep.violations:
                print(f"isoext: contract violation: {v}", file=sys.stderr)
            return 3
        return 0
    except (ValidationError, KindMismatch, TruncationTooSmall) as err:
        print(f"isoext: invalid input: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"isoext: invalid input: {err}", file=sys.stderr)
        return 2
    except (ContractViolation, NoConvergence, CutLocus) as err:
        print(f"isoext: contract violation: {type(err).__name__}: {err}", file=sys.stderr)
        return 3
    except IsoextError as err:
        print(f"isoext: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - last-resort exit code
        print(f"isoext: internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
