"""Experiment configuration: YAML in, validated dataclasses, canonical YAML out.

Grammar (all sections optional, defaults shown by ``isoext --print-default``):

    base:        {matrix: [[a, b], [c, d]], roof: {c0: float, terms: [[m, n, a, b], ...]}}
    cocycle:     {kind: circle|rotation, components: [poly, ...], twist: [poly, ...] | null}
                 poly = {a0: float, terms: [[m, n, a, b], ...]}
    fiber:       group | sphere
    anchor:      {homoclinic_radius: int, shifts: [[k1, k2], ...], fiber_point: float | [x, y, z]}
    tolerances:  {holonomy_tol, dedup_tol, density_eps, closure_tol}
    sampling:    {seed, n_samples, n_orbits, horizons, times, truncation_N, omega_grid, mode,
                  word_len, cap, steps, leaf_pairs, fiber_grid, base_grid, bundle_points}
    observable:  {char: [n1, n2], vertical: int | [l, m] | null, height_mode: int, base: poly}
    workers:     int

The canonical dump uses block style with keys in the order above, so
dump(load(dump(cfg))) == dump(cfg) byte for byte; the sha256 of that text
is the config hash carried by every report.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np
import yaml

from .base_dynamics import HyperbolicToralMap, RoofFunction
from .errors import ValidationError
from .extension import Cocycle, SkewProduct
from .ergodic_lab.observables import Observable
from .trig import TrigPoly

CONFIG_VERSION = 1


def _poly(d, where: str) -> dict:
    try:
        p = TrigPoly.from_dict(d)
    except (TypeError, ValueError, KeyError, AttributeError) as err:
        raise ValidationError(f"{where}: bad trigonometric polynomial ({err})") from None
    return p.to_dict()


@dataclass
class BaseSection:
    matrix: list = field(default_factory=lambda: [[2, 1], [1, 1]])
    roof: dict = field(default_factory=lambda: {"c0": 1.0, "terms": [[1, 0, 0.3, 0.0]]})

    def validate(self):
        try:
            m = [[int(v) for v in row] for row in self.matrix]
            assert len(m) == 2 and all(len(r) == 2 for r in m)
            assert all(float(v) == int(v) for row in self.matrix for v in row)
        except (TypeError, ValueError, AssertionError):
            raise ValidationError("base.matrix must be a 2x2 integer matrix") from None
        self.matrix = m
        try:
            HyperbolicToralMap.from_matrix(m)
        except ValidationError as err:
            raise ValidationError(f"base.matrix: {err}") from None
        r = dict(self.roof)
        try:
            r = {"c0": float(r.get("c0", 1.0)), "terms": [[int(t[0]), int(t[1]), float(t[2]), float(t[3])]
                                                         for t in r.get("terms", [])]}
        except (TypeError, ValueError, IndexError):
            raise ValidationError("base.roof: expected {c0: float, terms: [[m, n, a, b], ...]}") from None
        try:
            RoofFunction(r["c0"], tuple(tuple(t) for t in r["terms"]))
        except ValidationError as err:
            raise ValidationError(f"base.{err}") from None
        self.roof = r


@dataclass
class CocycleSection:
    kind: str = "circle"
    components: list = field(default_factory=lambda: [{"a0": 0.9541360500648688, "terms": [[1, 0, 0.3, 0.0]]}])
    twist: list | None = None

    def validate(self):
        if self.kind not in ("circle", "rotation"):
            raise ValidationError(f"cocycle.kind must be circle or rotation, got {self.kind!r}")
        self.components = [_poly(c, f"cocycle.components[{i}]") for i, c in enumerate(self.components)]
        if self.twist is not None:
            self.twist = [_poly(c, f"cocycle.twist[{i}]") for i, c in enumerate(self.twist)]
        try:
            Cocycle(self.kind, tuple(self.components), None if self.twist is None else tuple(self.twist))
        except ValidationError as err:
            raise ValidationError(f"cocycle: {err}") from None


@dataclass
class AnchorSection:
    homoclinic_radius: int = 1
    shifts: list = field(default_factory=lambda: [[1, -1], [2, -1], [1, -2], [3, -3]])
    fiber_point: object = 0.7

    def validate(self):
        if int(self.homoclinic_radius) < 1:
            raise ValidationError("anchor.homoclinic_radius must be >= 1")
        self.homoclinic_radius = int(self.homoclinic_radius)
        self.shifts = [[int(a), int(b)] for a, b in self.shifts]
        if isinstance(self.fiber_point, (list, tuple)):
            v = [float(x) for x in self.fiber_point]
            if len(v) != 3 or not np.isfinite(v).all() or np.linalg.norm(v) == 0:
                raise ValidationError("anchor.fiber_point must be an angle or a nonzero 3-vector")
            self.fiber_point = v
        else:
            self.fiber_point = float(self.fiber_point)


@dataclass
class Tolerances:
    holonomy_tol: float = 1e-8
    dedup_tol: float = 1e-7
    density_eps: float = 0.05
    closure_tol: float = 1e-6

    def validate(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (v > 0 and np.isfinite(v)):
                raise ValidationError(f"tolerances.{f.name} must be positive, got {v}")
            setattr(self, f.name, v)


@dataclass
class Sampling:
    seed: int = 20240611
    n_samples: int = 100000
    n_orbits: int = 32
    horizons: list = field(default_factory=lambda: [10000, 100000])
    times: list = field(default_factory=lambda: [0, 1, 2, 3, 5, 8, 13, 21])
    truncation_N: int = 16
    omega_grid: int = 2048
    mode: int = 1
    word_len: int = 200
    cap: int = 20000
    steps: int = 100
    leaf_pairs: int = 100
    fiber_grid: int = 32
    base_grid: int = 8
    bundle_points: int = 20

    def validate(self):
        ints = ["n_samples", "n_orbits", "truncation_N", "omega_grid", "word_len", "cap", "steps",
                "leaf_pairs", "fiber_grid", "base_grid", "bundle_points"]
        s = int(self.seed)
        if not 0 <= s < 2 ** 64:
            raise ValidationError("sampling.seed must be an unsigned 64-bit integer")
        self.seed = s
        for k in ints:
            v = getattr(self, k)
            if int(v) != v or int(v) < 1:
                raise ValidationError(f"sampling.{k} must be a positive integer, got {v}")
            setattr(self, k, int(v))
        self.mode = int(self.mode)
        self.horizons = [float(h) if float(h) != int(h) else int(h) for h in self.horizons]
        if any(h < 1 for h in self.horizons):
            raise ValidationError("sampling.horizons must be >= 1")
        self.times = [float(t) if float(t) != int(t) else int(t) for t in self.times]
        if any(t < 0 for t in self.times):
            raise ValidationError("sampling.times must be >= 0")


@dataclass
class ExperimentConfig:
    base: BaseSection = field(default_factory=BaseSection)
    cocycle: CocycleSection = field(default_factory=CocycleSection)
    fiber: str = "group"
    anchor: AnchorSection = field(default_factory=AnchorSection)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sampling: Sampling = field(default_factory=Sampling)
    observable: dict = field(default_factory=lambda: {"char": [0, 0], "vertical": 1, "height_mode": 0,
                                                      "base": {"a0": 1.0, "terms": []}})
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        self.base.validate()
        self.cocycle.validate()
        if self.fiber not in ("group", "sphere"):
            raise ValidationError(f"fiber must be group or sphere, got {self.fiber!r}")
        if self.fiber == "sphere" and self.cocycle.kind != "rotation":
            raise ValidationError("fiber: sphere needs a rotation cocycle")
        self.anchor.validate()
        if (self.fiber == "sphere") != isinstance(self.anchor.fiber_point, list):
            raise ValidationError("anchor.fiber_point must be a 3-vector exactly when fiber is sphere")
        self.tolerances.validate()
        self.sampling.validate()
        try:
            self.observable = Observable.from_dict(self.observable).to_dict()
        except (ValidationError, TypeError, ValueError, KeyError) as err:
            raise ValidationError(f"observable: {err}") from None
        if int(self.workers) < 1:
            raise ValidationError("workers must be >= 1")
        self.workers = int(self.workers)
        return self

    # ---- builders
    @property
    def tmap(self) -> HyperbolicToralMap:
        return HyperbolicToralMap.from_matrix(self.base.matrix)

    @property
    def roof(self) -> RoofFunction:
        return RoofFunction(self.base.roof["c0"], tuple(tuple(t) for t in self.base.roof["terms"]))

    @property
    def cocycle_obj(self) -> Cocycle:
        c = self.cocycle
        return Cocycle(c.kind, tuple(c.components), None if c.twist is None else tuple(c.twist))

    @property
    def skew_product(self) -> SkewProduct:
        return SkewProduct(self.tmap, self.cocycle_obj, self.fiber)

    @property
    def observable_obj(self) -> Observable:
        return Observable.from_dict(self.observable)

    # ---- serialisation
    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, **asdict(self)}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None, width=100,
                              allow_unicode=True)

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        v = d.pop("version", CONFIG_VERSION)
        if v != CONFIG_VERSION:
            raise ValidationError(f"version: unsupported config version {v}")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config section(s): {', '.join(sorted(extra))}")
        sections = {"base": BaseSection, "cocycle": CocycleSection, "anchor": AnchorSection,
                    "tolerances": Tolerances, "sampling": Sampling}
        kw = {}
        for k, val in d.items():
            if k in sections:
                if not isinstance(val, dict):
                    raise ValidationError(f"{k}: expected a mapping")
                sk = {f.name for f in fields(sections[k])}
                bad = set(val) - sk
                if bad:
                    raise ValidationError(f"{k}: unknown key(s) {', '.join(sorted(bad))}")
                kw[k] = sections[k](**val)
            else:
                kw[k] = val
        return cls(**kw).validate()

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ValidationError(f"config is not valid YAML: {err}") from None
        if d is not None and not isinstance(d, dict):
            raise ValidationError("config must be a mapping at top level")
        return cls.from_dict(d)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.loads(fh.read())


def acceptance_config() -> ExperimentConfig:
    """The configuration shipped for ``isoext verify``."""
    text = resources.files("isoext.data").joinpath("acceptance.yaml").read_text(encoding="utf-8")
    return ExperimentConfig.loads(text)
