"""Quasi-implicit Sobolev-gradient descent for the periodic corrector z.

The flow ``dz/dt = -(gamma - Lap)^(1-beta) z + (gamma - Lap)^(-beta) (gamma z - eps V_y)``
is stepped in Fourier space with every linear term taken at the new time
level and only the nonlinear force ``eps V_y(x, omega.x + z)`` lagged.
With ``delta < 1`` the Laplacian is replaced by ``-(-Lap)^delta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import NonConvergence
from .grid import Field, TorusSpec, check_commensurate, gradient, irfft, rfft, translate, xi_power
from .potential import ComposedArgument, PotentialSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DescentParams:
    beta: float = 0.9
    gamma: float = 1.0
    dt: float = 0.5
    delta: float = 1.0
    max_iters: int = 200_000
    tol_residual: float = 1e-9
    tol_step: float = 1e-13
    check_every: int = 10

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.dt <= 0 or self.tol_residual <= 0 or self.tol_step <= 0:
            raise ValueError("dt and tolerances must be positive")
        if self.max_iters < 1 or self.check_every < 1:
            raise ValueError("max_iters and check_every must be positive")

    def with_(self, **changes) -> DescentParams:
        data = {**self.__dict__, **changes}
        return DescentParams(**data)


@dataclass
class MinimizerSolution:
    z: Field
    omega: tuple[float, ...]
    epsilon: float
    residual_linf: float
    iterations: int
    energy: float
    converged: bool
    stop_reason: str = "residual"
    alpha0: float = 0.0
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def spec(self) -> TorusSpec:
        return self.z.spec

    def u_values(self) -> np.ndarray:
        """Full solution ``omega.x + z`` at the nodes."""
        return self.spec.dot_omega(self.omega) + self.z.values


class _Stepper:
    """Precomputed multipliers for repeated steps on one grid."""

    def __init__(self, torus: TorusSpec, omega, epsilon, potential, params: DescentParams):
        self.torus = torus
        self.epsilon = float(epsilon)
        self.potential = potential
        self.params = params
        self.y0 = torus.dot_omega(omega)
        self._vy = potential.y_evaluator(1, torus.coords)
        s = params.gamma + xi_power(torus.rxi2, params.delta)
        self.lap_symbol = -xi_power(torus.rxi2, params.delta)
        self.force_factor = params.dt * s ** (-params.beta)
        denom = 1.0 + params.dt * s ** (1.0 - params.beta) - params.gamma * params.dt * s ** (-params.beta)
        if np.any(denom <= 0):
            raise ValueError("descent step denominator is not positive; reduce dt")
        self.inv_denom = 1.0 / denom

    def force(self, z: np.ndarray) -> np.ndarray:
        return self.epsilon * self._vy(self.y0 + z)

    def step_hat(self, zh: np.ndarray, force: np.ndarray) -> np.ndarray:
        return (zh - self.force_factor * rfft(force)) * self.inv_denom

    def residual(self, zh: np.ndarray, force: np.ndarray) -> float:
        lap = irfft(self.lap_symbol * zh, self.torus.shape)
        return float(np.abs(lap - force).max())


def descent_step(z: Field, omega, epsilon, spec: PotentialSpec, p: DescentParams) -> Field:
    """One quasi-implicit step from ``z``."""
    stepper = _Stepper(z.spec, omega, epsilon, spec, p)
    zh = rfft(z.values)
    new = stepper.step_hat(zh, stepper.force(z.values))
    return Field(z.spec, irfft(new, z.spec.shape))


def residual(z: Field, omega, epsilon, spec: PotentialSpec, delta: float = 1.0) -> float:
    """``max |Lap z - eps V_y(x, omega.x + z)|`` over the nodes."""
    torus = z.spec
    lap = irfft(-xi_power(torus.rxi2, delta) * rfft(z.values), torus.shape)
    arg = ComposedArgument(tuple(omega), 0.0, z)
    force = epsilon * spec.evaluate(1, torus.coords, arg.values(torus))
    return float(np.abs(lap - force).max())


def reduced_energy(z: Field, omega, epsilon, spec: PotentialSpec) -> float:
    """Per-unit-volume value of ``1/2 |omega + grad z|^2 + eps V(x, omega.x + z)``."""
    torus = z.spec
    grads = gradient(z)
    kinetic = sum((w + g.values) ** 2 for w, g in zip(omega, grads))
    y = torus.dot_omega(omega) + z.values
    density = 0.5 * kinetic + epsilon * spec.evaluate(0, torus.coords, y)
    return float(np.mean(density))


def solve(
    omega,
    epsilon: float,
    spec: PotentialSpec,
    p: DescentParams,
    z0: Field | float | None = None,
    torus: TorusSpec | None = None,
    record_trace: bool = False,
) -> MinimizerSolution:
    """Iterate :func:`descent_step` until the residual tolerance is met.

    ``z0`` may be a :class:`Field` or a constant; a constant requires ``torus``.
    The step criterion ``max|z_{n+1} - z_n| <= tol_step * dt`` ends the loop
    as stagnation, which counts as convergence only if the residual is also
    within tolerance.

    Raises
    ------
    NonConvergence
        Carrying the last iterate and the residual trace.
    """
    if isinstance(z0, Field):
        torus = z0.spec
        z = z0.values.copy()
        alpha0 = z0.mean()
    else:
        if torus is None:
            raise ValueError("a torus is required when z0 is not a Field")
        alpha0 = float(z0 or 0.0)
        z = np.full(torus.shape, alpha0)
    omega = tuple(float(w) for w in omega)
    check_commensurate(torus, omega)

    stepper = _Stepper(torus, omega, epsilon, spec, p)
    zh = rfft(z)
    trace: list[tuple[int, float, float]] = []
    res = np.inf
    reason = "max_iters"
    it = 0
    for it in range(p.max_iters + 1):
        force = stepper.force(z)
        if it % p.check_every == 0 or it == p.max_iters:
            res = stepper.residual(zh, force)
            if record_trace:
                trace.append((it, res, reduced_energy(Field(torus, z), omega, epsilon, spec)))
            if not np.isfinite(res):
                reason = "diverged"
                break
            if res <= p.tol_residual:
                reason = "residual"
                break
        if it == p.max_iters:
            break
        zh_new = stepper.step_hat(zh, force)
        z_new = irfft(zh_new, torus.shape)
        step = np.abs(z_new - z).max()
        zh, z = zh_new, z_new
        if step <= p.tol_step * p.dt:
            it += 1
            res = stepper.residual(zh, stepper.force(z))
            if record_trace:
                trace.append((it, res, reduced_energy(Field(torus, z), omega, epsilon, spec)))
            reason = "step"
            break

    zf = Field(torus, z) if np.all(np.isfinite(z)) else None
    converged = bool(res <= p.tol_residual)
    if not converged:
        raise NonConvergence(
            f"descent stopped ({reason}) after {it} iterations with residual {res:.3e}",
            z=zf,
            residual=res,
            trace=trace,
        )
    log.debug("descent omega=%s eps=%g converged in %d iterations", omega, epsilon, it)
    return MinimizerSolution(
        z=zf,
        omega=omega,
        epsilon=float(epsilon),
        residual_linf=res,
        iterations=it,
        energy=reduced_energy(zf, omega, epsilon, spec),
        converged=True,
        stop_reason=reason,
        alpha0=alpha0,
        trace=trace,
    )


def amplification_factors(torus: TorusSpec, p: DescentParams) -> np.ndarray:
    """Per-mode factor of the linear (eps = 0) step, over all frequencies."""
    s = p.gamma + xi_power(torus.rxi2, p.delta)
    return 1.0 / (1.0 + p.dt * s ** (1.0 - p.beta) - p.gamma * p.dt * s ** (-p.beta))


def amplification_spread(torus: TorusSpec, p: DescentParams) -> float:
    """Ratio of largest to smallest linear amplification factor."""
    g = amplification_factors(torus, p)
    return float(g.max() / g.min())


@dataclass
class BirkhoffReport:
    entries: dict[tuple[tuple[int, ...], int], str]

    @property
    def mixed(self) -> list[tuple[tuple[int, ...], int]]:
        return [key for key, sign in self.entries.items() if sign == "MIXED"]

    @property
    def ok(self) -> bool:
        return not self.mixed

    def rows(self):
        for (k, l), sign in sorted(self.entries.items()):
            yield list(k), l, sign


def check_birkhoff(sol: MinimizerSolution, range_: int = 1, zero_tol: float = 1e-8) -> BirkhoffReport:
    """Classify ``u(x + k) + l - u(x)`` for all ``|k_i|, |l| <= range_``."""
    torus = sol.spec
    span = range(-range_, range_ + 1)
    entries = {}
    for k in product(span, repeat=torus.d):
        shifted = translate(sol.z, k).values
        base = float(np.dot(sol.omega, k))
        for l in span:
            diff = base + l + shifted - sol.z.values
            if np.all(np.abs(diff) <= zero_tol):
                sign = "ZERO"
            elif np.all(diff > 0):
                sign = "POSITIVE"
            elif np.all(diff < 0):
                sign = "NEGATIVE"
            else:
                sign = "MIXED"
            entries[(tuple(k), l)] = sign
    return BirkhoffReport(entries)
