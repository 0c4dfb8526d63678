"""Trigonometric potentials V(x, y), periodic in every argument.

Every potential is stored as a finite sum of terms
``A * c_a(2 pi p.x) * c_b(2 pi q y)`` where ``c_s`` is one of the four phases
``cos, -sin, -cos, sin`` (index ``s`` modulo 4).  A y-derivative advances the
y-phase index by one and multiplies the amplitude by ``2 pi q``, so all
derivatives stay closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Field, TorusSpec

POTENTIAL_KINDS = ("product_cos", "separable", "mixed", "custom_trig")
MAX_ORDER = 12

COS, MSIN, MCOS, SIN = 0, 1, 2, 3
_PHASE_NAMES = {"cos": COS, "sin": SIN, "-sin": MSIN, "-cos": MCOS}


def _phase(index: int, theta):
    index %= 4
    if index == COS:
        return np.cos(theta)
    if index == MSIN:
        return -np.sin(theta)
    if index == MCOS:
        return -np.cos(theta)
    return np.sin(theta)


@dataclass(frozen=True)
class TrigTerm:
    amplitude: float
    x_phase: int
    p: tuple[int, ...]
    y_phase: int
    q: int

    @classmethod
    def from_dict(cls, data: dict) -> TrigTerm:
        return cls(
            amplitude=float(data["amplitude"]),
            x_phase=_PHASE_NAMES[data.get("x_trig", "cos")],
            p=tuple(int(v) for v in data["p"]),
            y_phase=_PHASE_NAMES[data.get("y_trig", "cos")],
            q=int(data["q"]),
        )

    def to_dict(self) -> dict:
        names = {v: k for k, v in _PHASE_NAMES.items()}
        return {
            "amplitude": self.amplitude,
            "x_trig": names[self.x_phase],
            "p": list(self.p),
            "y_trig": names[self.y_phase],
            "q": self.q,
        }


@dataclass(frozen=True)
class PotentialSpec:
    """One of the built-in potentials, or an explicit list of trig terms.

    Built-ins, with ``A = amplitude``:

    * ``product_cos``: ``A sin(2 pi k.x) cos(2 pi y)``
    * ``separable``: ``A sin(2 pi k1 x1) sin(2 pi k2 x2) cos(2 pi y)``
    * ``mixed``: ``(A/2) sin(2 pi k.x) (cos(2 pi y) + sin(2 pi y))``
    """

    kind: str
    k: tuple[int, ...] = ()
    amplitude: float = 1.0
    custom_terms: tuple[TrigTerm, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.kind == "separable" and len(self.k) != 2:
            raise ValueError("separable potential needs a 2-component wave vector")
        if self.kind == "custom_trig" and not self.custom_terms:
            raise ValueError("custom_trig potential needs at least one term")

    @property
    def d(self) -> int:
        if self.kind == "custom_trig":
            return len(self.custom_terms[0].p)
        return len(self.k)

    @property
    def terms(self) -> tuple[TrigTerm, ...]:
        A, k = self.amplitude, self.k
        if self.kind == "product_cos":
            return (TrigTerm(A, SIN, k, COS, 1),)
        if self.kind == "mixed":
            return (TrigTerm(A / 2, SIN, k, COS, 1), TrigTerm(A / 2, SIN, k, SIN, 1))
        if self.kind == "separable":
            # sin a sin b = (cos(a - b) - cos(a + b)) / 2
            k1, k2 = k
            return (
                TrigTerm(A / 2, COS, (k1, -k2), COS, 1),
                TrigTerm(-A / 2, COS, (k1, k2), COS, 1),
            )
        return self.custom_terms

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "k": list(self.k), "amplitude": self.amplitude}
        if self.kind == "custom_trig":
            out["terms"] = [t.to_dict() for t in self.custom_terms]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> PotentialSpec:
        terms = tuple(TrigTerm.from_dict(t) for t in data.get("terms", ()))
        return cls(
            kind=data["kind"],
            k=tuple(data.get("k", ())),
            amplitude=float(data.get("amplitude", 1.0)),
            custom_terms=terms,
        )

    def y_evaluator(self, n: int, coords):
        """Return ``y -> d^n V/dy^n (coords, y)`` with the x-factors precomputed."""
        if n < 0 or n > MAX_ORDER:
            raise ValueError(f"derivative order must lie in [0, {MAX_ORDER}], got {n}")
        parts = []
        for t in self.terms:
            if t.q == 0 and n > 0:
                continue
            px = sum(pi * xi for pi, xi in zip(t.p, coords))
            scale = t.amplitude * (2.0 * np.pi * t.q) ** n
            parts.append((scale * _phase(t.x_phase, 2.0 * np.pi * px), t.y_phase + n, 2.0 * np.pi * t.q))

        def evaluate(y):
            total = np.zeros(np.shape(y))
            for xfac, phase, freq in parts:
                total = total + xfac * _phase(phase, freq * y)
            return total

        return evaluate

    def evaluate(self, n: int, coords, y) -> np.ndarray:
        """``d^n V / dy^n`` at points ``coords`` (tuple of arrays) and values ``y``."""
        shape = np.broadcast(*coords, y).shape
        return np.broadcast_to(self.y_evaluator(n, coords)(np.broadcast_to(y, shape)), shape)


@dataclass(frozen=True)
class ComposedArgument:
    """``y(x) = omega.x + alpha + perturbation(x)`` on a torus grid."""

    omega: tuple[float, ...]
    base_constant: float = 0.0
    perturbation: Field | None = None

    def values(self, spec: TorusSpec) -> np.ndarray:
        y = spec.dot_omega(self.omega) + self.base_constant
        if self.perturbation is not None:
            y = y + self.perturbation.values
        return y


def deriv_y(spec: PotentialSpec, n: int, arg: ComposedArgument, torus: TorusSpec) -> Field:
    """Sample ``d^n V/dy^n (x, y(x))`` at every node of ``torus``."""
    return Field(torus, spec.evaluate(n, torus.coords, arg.values(torus)))


def mean_deriv_y(spec: PotentialSpec, n: int, arg: ComposedArgument, torus: TorusSpec) -> float:
    """Per-unit-volume average of ``d^n V/dy^n`` along ``y(x)``."""
    return deriv_y(spec, n, arg, torus).mean()
