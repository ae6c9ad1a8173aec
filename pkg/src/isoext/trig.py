"""Real trigonometric polynomials on the 2-torus."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

TWO_PI = 2.0 * np.pi


def _coerce_terms(terms) -> tuple:
    out = []
    for t in terms:
        m, n, a, b = t
        out.append((int(m), int(n), float(a), float(b)))
    return tuple(out)


@dataclass(frozen=True)
class TrigPoly:
    """f(x) = a0 + sum a*cos(2pi(m x1 + n x2)) + b*sin(2pi(m x1 + n x2))."""

    a0: float = 0.0
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "terms", _coerce_terms(self.terms))
        vals = [self.a0] + [c for t in self.terms for c in t[2:]]
        if not np.all(np.isfinite(vals)):
            raise ValueError("trigonometric coefficients must be finite")

    @classmethod
    def constant(cls, c: float) -> "TrigPoly":
        return cls(c, ())

    def __call__(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[:-1], self.a0)
        for m, n, a, b in self.terms:
            ph = TWO_PI * (m * X[..., 0] + n * X[..., 1])
            if a:
                out = out + a * np.cos(ph)
            if b:
                out = out + b * np.sin(ph)
        return out if out.ndim else float(out)

    def increment(self, X, D) -> np.ndarray:
        """f(X + D) - f(X) without cancellation, via the half-angle product formulas."""
        X = np.asarray(X, dtype=float)
        D = np.asarray(D, dtype=float)
        X, D = np.broadcast_arrays(X, D)
        out = np.zeros(X.shape[:-1])
        for m, n, a, b in self.terms:
            ph = TWO_PI * (m * X[..., 0] + n * X[..., 1])
            h = np.pi * (m * D[..., 0] + n * D[..., 1])
            sh = np.sin(h)
            out = out + 2.0 * sh * (b * np.cos(ph + h) - a * np.sin(ph + h))
        return out

    def gradient(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = np.zeros(X.shape)
        for m, n, a, b in self.terms:
            ph = TWO_PI * (m * X[..., 0] + n * X[..., 1])
            d = TWO_PI * (-a * np.sin(ph) + b * np.cos(ph))
            g[..., 0] += m * d
            g[..., 1] += n * d
        return g

    def lipschitz(self) -> float:
        """Crude bound sum 2pi|(m,n)|(|a|+|b|) on the Euclidean gradient norm."""
        return float(sum(TWO_PI * np.hypot(m, n) * (abs(a) + abs(b)) for m, n, a, b in self.terms))

    @property
    def is_constant(self) -> bool:
        return all((a == 0.0 and b == 0.0) or (m == 0 and n == 0) for m, n, a, b in self.terms)

    def mean(self) -> float:
        return self.a0 + sum(a for m, n, a, b in self.terms if m == 0 and n == 0)

    def coefficients(self) -> dict:
        """Complex Fourier coefficients {(m, n): c} with f = sum c e^{2 pi i (m x1 + n x2)}."""
        c: dict = {(0, 0): complex(self.a0)}
        for m, n, a, b in self.terms:
            if m == 0 and n == 0:
                c[(0, 0)] += a
                continue
            c[(m, n)] = c.get((m, n), 0) + (a - 1j * b) / 2
            c[(-m, -n)] = c.get((-m, -n), 0) + (a + 1j * b) / 2
        return c

    def grid_min(self, size: int = 256) -> float:
        g = (np.arange(size) + 0.0) / size
        X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
        return float(np.min(self(X)))

    def to_dict(self) -> dict:
        return {"a0": self.a0, "terms": [list(t) for t in self.terms]}

    @classmethod
    def from_dict(cls, d) -> "TrigPoly":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        return cls(d.get("a0", 0.0), tuple(tuple(t) for t in d.get("terms", ())))


def trig_poly(a0: float = 0.0, terms: Iterable = ()) -> TrigPoly:
    return TrigPoly(a0, tuple(terms))
