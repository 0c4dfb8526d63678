"""Periodic fields on the torus [0, N]^d and diagonal Fourier operators.

Transforms are normalised so that the zero-frequency coefficient equals the
node average of the field.  Coefficient arrays are stored in the usual FFT
order; :meth:`TorusSpec.frequencies` gives the matching integer indices in
``{-m/2, ..., m/2 - 1}``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import CompatibilityError, MisalignmentError

OPERATOR_KINDS = ("laplacian", "resolvent_power", "fractional")


def fft_workers() -> int:
    """Worker count for FFTs, capped by ``PLANECELL_THREADS`` when set."""
    cap = os.environ.get("PLANECELL_THREADS")
    if cap:
        return max(1, int(cap))
    return 1


def xi_power(xi2: np.ndarray, delta: float) -> np.ndarray:
    """Return ``|xi|^(2 delta)`` given ``|xi|^2``; exact passthrough for delta = 1."""
    if delta == 1:
        return xi2
    return xi2**delta


@dataclass(frozen=True)
class TorusSpec:
    """Uniform grid of ``m`` nodes per axis on ``[0, N]^d``."""

    d: int
    N: int
    m: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 1:
            raise ValueError(f"cell period must be positive, got {self.N}")
        if self.m < 4 or self.m & (self.m - 1):
            raise ValueError(f"m must be a power of two >= 4, got {self.m}")
        if self.m % self.N:
            raise ValueError(f"m={self.m} is not divisible by N={self.N}")

    @property
    def h(self) -> float:
        return self.N / self.m

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def nodes_per_unit(self) -> int:
        return self.m // self.N

    @cached_property
    def index_grids(self) -> tuple[np.ndarray, ...]:
        """Integer node indices ``j`` per axis, broadcastable to :attr:`shape`."""
        out = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.m
            out.append(np.arange(self.m).reshape(shape))
        return tuple(out)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates ``x_i = h j_i`` per axis (broadcastable)."""
        return tuple(j * self.h for j in self.index_grids)

    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Integer frequency indices per axis in FFT order (broadcastable)."""
        out = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.m
            out.append(np.fft.fftfreq(self.m, 1.0 / self.m).reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """``xi_i = 2 pi q_i / N`` per axis (broadcastable)."""
        return tuple(2.0 * np.pi * q / self.N for q in self.frequencies())

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for odd derivatives, with the Nyquist entry zeroed."""
        out = []
        for xi in self.wavenumbers:
            xi = xi.copy()
            xi[np.abs(xi) == np.abs(xi).max()] = 0.0
            out.append(xi)
        return tuple(out)

    @cached_property
    def xi2(self) -> np.ndarray:
        """``|xi(q)|^2`` on the full frequency grid."""
        total = np.zeros(self.shape)
        for xi in self.wavenumbers:
            total = total + xi**2
        return total

    @cached_property
    def rxi2(self) -> np.ndarray:
        """``|xi(q)|^2`` on the half grid used by real transforms."""
        return self.xi2[..., : self.m // 2 + 1]

    def dot_omega(self, omega) -> np.ndarray:
        """Evaluate ``omega . x`` at the nodes.

        ``N omega`` is integral for commensurate rotation vectors, so each term is
        formed as ``(N omega_i) j_i / m`` to keep node values exact.
        """
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.d,):
            raise ValueError(f"rotation vector must have {self.d} components")
        total = np.zeros(self.shape)
        for w, j in zip(omega, self.index_grids):
            total = total + (w * self.N) * j / self.m
        return total


def check_commensurate(spec: TorusSpec, omega, tol: float = 1e-9) -> np.ndarray:
    """Return ``N omega`` rounded to integers, or raise if not integral."""
    scaled = np.asarray(omega, dtype=float) * spec.N
    rounded = np.rint(scaled)
    if np.any(np.abs(scaled - rounded) > tol):
        raise ValueError(
            f"incommensurate rotation vector: N*omega = {scaled.tolist()} is not integral"
        )
    return rounded.astype(int)


@dataclass(frozen=True)
class Field:
    """Real samples on the nodes of a :class:`TorusSpec`."""

    spec: TorusSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 0:
            values = np.broadcast_to(values, self.spec.shape)
        elif values.shape != self.spec.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.spec.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, spec: TorusSpec) -> Field:
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec: TorusSpec, c: float) -> Field:
        return cls(spec, np.full(spec.shape, float(c)))

    @classmethod
    def from_function(cls, spec: TorusSpec, func) -> Field:
        """Sample ``func(*coords)`` at the nodes."""
        return cls(spec, np.broadcast_to(func(*spec.coords), spec.shape))

    def mean(self) -> float:
        return float(self.values.mean())

    def norm_inf(self) -> float:
        return float(np.abs(self.values).max())

    def inner(self, other: Field) -> float:
        """Node-average L2 pairing."""
        return float(np.mean(self.values * other.values))

    def _coerce(self, other):
        if isinstance(other, Field):
            if other.spec != self.spec:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.spec, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.spec, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.spec, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.spec, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.spec, -self.values)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a field, FFT-ordered, normalised by ``m^d``."""

    spec: TorusSpec
    coeffs: np.ndarray = field(repr=False)

    def __getitem__(self, q) -> complex:
        """Coefficient at integer frequency ``q`` (components may be negative)."""
        q = np.atleast_1d(q)
        idx = tuple(int(qi) % self.spec.m for qi in q)
        return complex(self.coeffs[idx])


@dataclass(frozen=True)
class OperatorSpec:
    """A diagonal Fourier multiplier.

    ``laplacian`` has symbol ``-|xi|^2``, ``fractional`` has ``-|xi|^(2 delta)``
    and ``resolvent_power`` has ``(gamma + |xi|^(2 delta))^power``.
    """

    kind: str
    gamma: float = 1.0
    power: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"fractional order must lie in (0, 1], got {self.delta}")
        if self.kind == "resolvent_power" and self.gamma <= 0:
            raise ValueError(f"resolvent_power needs gamma > 0, got {self.gamma}")

    def symbol(self, xi2: np.ndarray) -> np.ndarray:
        if self.kind == "laplacian":
            return -xi2
        if self.kind == "fractional":
            return -xi_power(xi2, self.delta)
        return (self.gamma + xi_power(xi2, self.delta)) ** self.power


def forward(f: Field) -> SpectralField:
    n = f.values.size
    coeffs = sfft.fftn(f.values, workers=fft_workers()) / n
    return SpectralField(f.spec, coeffs)


def inverse(fh: SpectralField) -> Field:
    n = fh.coeffs.size
    values = sfft.ifftn(fh.coeffs * n, workers=fft_workers()).real
    return Field(fh.spec, values)


def rfft(values: np.ndarray) -> np.ndarray:
    """Unnormalised real transform over all axes (internal fast path)."""
    return sfft.rfftn(values, workers=fft_workers())


def irfft(coeffs: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return sfft.irfftn(coeffs, s=shape, workers=fft_workers())


def apply_operator(op: OperatorSpec, f: Field) -> Field:
    spec = f.spec
    sym = op.symbol(spec.rxi2)
    if not np.all(np.isfinite(sym)):
        raise ValueError(f"operator symbol is not finite on this grid: {op}")
    return Field(spec, irfft(sym * rfft(f.values), spec.shape))


def laplacian(f: Field) -> Field:
    return apply_operator(OperatorSpec("laplacian"), f)


def gradient(f: Field) -> list[Field]:
    """Spectral gradient, one :class:`Field` per axis."""
    spec = f.spec
    fh = rfft(f.values)
    out = []
    for xi in spec.derivative_wavenumbers:
        xi = xi[..., : spec.m // 2 + 1] if xi.shape[-1] == spec.m else xi
        out.append(Field(spec, irfft(1j * xi * fh, spec.shape)))
    return out


def solve_poisson_zero_mean(g: Field, tol_mean: float | None = None) -> Field:
    """Solve ``Laplacian phi = g - mean(g)`` with ``mean(phi) = 0``.

    Raises
    ------
    CompatibilityError
        If ``|mean(g)|`` exceeds ``tol_mean`` (default ``1e-10 * max|g|``).
    """
    spec = g.spec
    mean = g.mean()
    if tol_mean is None:
        tol_mean = 1e-10 * max(g.norm_inf(), np.finfo(float).tiny)
    if abs(mean) > tol_mean:
        raise CompatibilityError(
            f"right-hand side has mean {mean:.3e} exceeding tolerance {tol_mean:.3e}",
            mean=mean,
        )
    gh = rfft(g.values)
    xi2 = spec.rxi2.copy()
    xi2.flat[0] = 1.0
    phih = -gh / xi2
    phih.flat[0] = 0.0
    return Field(spec, irfft(phih, spec.shape))


def translate(f: Field, k, l: float = 0.0) -> Field:
    """Return ``x -> f(x + k) + l`` using exact node shifts."""
    spec = f.spec
    k = np.atleast_1d(np.asarray(k))
    if k.shape != (spec.d,):
        raise ValueError(f"shift must have {spec.d} components")
    if np.any(np.abs(k) > spec.N):
        raise ValueError(f"shift components must lie within +-N={spec.N}")
    nodes = k * spec.nodes_per_unit
    if np.any(np.abs(nodes - np.rint(nodes)) > 1e-12):
        raise MisalignmentError(f"shift {k.tolist()} is not a whole number of nodes")
    shifted = f.values
    for axis, s in enumerate(np.rint(nodes).astype(int)):
        shifted = np.roll(shifted, -s, axis=axis)
    return Field(spec, shifted + l)
