"""Observables on skew products and on suspensions.

u(x, p, h) = base(x) e^{2 pi i c.x} * vertical(p) * e^{2 pi i n h / r(x)}

``vertical`` is a character e^{i k theta} on a circle fiber, a harmonic
Y_l^m on a sphere fiber, or e^{i k psi} on the rotation group itself
where psi = 2 atan2(q_z, q_w) is the coordinate of the z maximal torus.
The height factor only matters on suspensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import KindMismatch, ValidationError
from ..trig import TrigPoly
from .harmonics import MAX_DEGREE, sph_harm

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Observable:
    base: TrigPoly = field(default_factory=lambda: TrigPoly.constant(1.0))
    char: tuple = (0, 0)
    vertical: object = None        # None | int | (l, m)
    height_mode: int = 0

    def __post_init__(self):
        object.__setattr__(self, "char", (int(self.char[0]), int(self.char[1])))
        v = self.vertical
        if isinstance(v, (tuple, list)):
            l, m = int(v[0]), int(v[1])
            if not (0 <= l <= MAX_DEGREE and abs(m) <= l):
                raise ValidationError(f"harmonic (l, m) = ({l}, {m}) out of range (l <= {MAX_DEGREE})")
            object.__setattr__(self, "vertical", (l, m))
        elif v is not None:
            object.__setattr__(self, "vertical", int(v))

    @classmethod
    def character(cls, n1: int, n2: int) -> "Observable":
        return cls(char=(n1, n2))

    @classmethod
    def fiber_mode(cls, mode) -> "Observable":
        return cls(vertical=mode)

    @property
    def vertical_nonzero(self) -> bool:
        v = self.vertical
        if v is None:
            return False
        return v[0] != 0 if isinstance(v, tuple) else v != 0

    @property
    def zero_average(self) -> bool:
        """Mean over the product measure vanishes (height factor ignored)."""
        if self.vertical_nonzero:
            return True
        c = self.base.coefficients().get((-self.char[0], -self.char[1]), 0.0)
        return abs(c) == 0.0

    def base_values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        b = np.asarray(self.base(X), dtype=complex)
        if self.char != (0, 0):
            b = b * np.exp(1j * TWO_PI * (self.char[0] * X[..., 0] + self.char[1] * X[..., 1]))
        return b

    def vertical_values(self, P, fiber_kind: str) -> np.ndarray | complex:
        v = self.vertical
        if v is None:
            return 1.0 + 0j
        if isinstance(v, tuple):
            if fiber_kind != "sphere":
                raise KindMismatch("harmonic modes need a sphere fiber")
            return sph_harm(v[0], v[1], P)
        if fiber_kind == "circle":
            return np.exp(1j * v * np.asarray(P, dtype=float))
        if fiber_kind == "rotation":
            P = np.asarray(P, dtype=float)
            return np.exp(1j * v * 2 * np.arctan2(P[..., 3], P[..., 0]))
        raise KindMismatch("integer modes need a circle or rotation-group fiber")

    def __call__(self, X, P=None, fiber_kind: str = "circle", height=None, roof_values=None):
        out = self.base_values(X) * self.vertical_values(P, fiber_kind)
        if self.height_mode:
            out = out * np.exp(1j * TWO_PI * self.height_mode * np.asarray(height) / np.asarray(roof_values))
        return out

    def to_dict(self) -> dict:
        v = self.vertical
        return {"base": self.base.to_dict(), "char": list(self.char),
                "vertical": list(v) if isinstance(v, tuple) else v, "height_mode": self.height_mode}

    @classmethod
    def from_dict(cls, d) -> "Observable":
        v = d.get("vertical")
        return cls(TrigPoly.from_dict(d.get("base", 1.0)), tuple(d.get("char", (0, 0))),
                   tuple(v) if isinstance(v, list) else v, int(d.get("height_mode", 0)))
