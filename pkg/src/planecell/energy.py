"""Average energy A_eps(omega), one-sided derivative estimates and power-law fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .descent import DescentParams, MinimizerSolution, reduced_energy, solve
from .errors import NonConvergence
from .grid import TorusSpec
from .lindstedt import analyze_resonance, minimal_torus
from .potential import PotentialSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyRecord:
    omega: tuple[float, ...]
    epsilon: float
    A: float
    residual: float
    grid: TorusSpec


@dataclass
class JumpRecord:
    epsilon: float
    direction: int
    dplus: float
    dminus: float
    jump: float
    delta_omega: float
    A_center: float = float("nan")
    A_plus: float = float("nan")
    A_minus: float = float("nan")
    residual_max: float = float("nan")
    iters_total: int = 0
    warm_start: bool = False
    solutions: dict | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class PowerLawFit:
    prefactor: float
    exponent: float
    rms_log_residual: float
    points_used: int

    def to_dict(self) -> dict:
        return {
            "C": self.prefactor,
            "p": self.exponent,
            "rms": self.rms_log_residual,
            "points": self.points_used,
        }


@dataclass
class JumpConfig:
    """Everything a jump estimate needs besides ``omega``, ``eps`` and the axis.

    ``alpha`` overrides the initial constant; by default it is the minimizing
    resonance root at ``omega`` (0 when ``omega`` is not resonant).
    ``curvature_correction`` subtracts ``delta_omega`` from the second
    difference, which only suits the regime where the transition layer is
    wider than the cell.
    """

    potential: PotentialSpec
    torus: TorusSpec
    descent: DescentParams = field(default_factory=DescentParams)
    alpha: float | None = None
    probe_depth: int = 4
    curvature_correction: bool = False
    max_restarts: int = 3


def average_energy(sol: MinimizerSolution, spec: PotentialSpec) -> float:
    """Per-unit-volume energy of ``omega.x + z`` with spectral gradients."""
    return reduced_energy(sol.z, sol.omega, sol.epsilon, spec)


def energy_record(sol: MinimizerSolution, spec: PotentialSpec) -> EnergyRecord:
    return EnergyRecord(sol.omega, sol.epsilon, average_energy(sol, spec), sol.residual_linf, sol.spec)


def initial_constant(omega, cfg: JumpConfig) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    probe = minimal_torus(omega, cfg.torus.nodes_per_unit)
    analysis = analyze_resonance(cfg.potential, omega, cfg.probe_depth, torus=probe, require_twist=False)
    return analysis.minimizing_root()


def solve_with_restarts(omega, epsilon, cfg: JumpConfig, z0, tag: str = "") -> MinimizerSolution:
    """Run :func:`solve`, halving ``dt`` after each non-convergence."""
    params = cfg.descent
    for attempt in range(cfg.max_restarts + 1):
        try:
            return solve(omega, epsilon, cfg.potential, params, z0=z0, torus=cfg.torus)
        except NonConvergence as exc:
            if attempt == cfg.max_restarts:
                exc.tag = tag
                raise
            log.info("solve %s at eps=%g failed (%s); retrying with dt=%g", tag, epsilon, exc, params.dt / 2)
            params = params.with_(dt=params.dt / 2)
    raise AssertionError("unreachable")


def jump_estimate(omega, epsilon: float, j: int, cfg: JumpConfig, warm=None) -> JumpRecord:
    """Second-difference estimate of ``D_{e_j}A + D_{-e_j}A`` with step ``1/N``.

    ``warm`` optionally maps ``"center"/"plus"/"minus"`` to starting fields.
    """
    omega = np.asarray(omega, dtype=float)
    dw = 1.0 / cfg.torus.N
    e = np.zeros_like(omega)
    e[j] = 1.0
    alpha = initial_constant(omega, cfg)
    solutions = {}
    for tag, w in (("center", omega), ("plus", omega + dw * e), ("minus", omega - dw * e)):
        z0 = warm.get(tag) if warm else None
        solutions[tag] = solve_with_restarts(tuple(w), epsilon, cfg, alpha if z0 is None else z0, tag)
    A = {tag: average_energy(sol, cfg.potential) for tag, sol in solutions.items()}
    dplus = (A["plus"] - A["center"]) / dw
    dminus = (A["minus"] - A["center"]) / dw
    jump = dplus + dminus
    if cfg.curvature_correction:
        jump -= dw
    rec = JumpRecord(
        epsilon=float(epsilon),
        direction=j,
        dplus=dplus,
        dminus=dminus,
        jump=jump,
        delta_omega=dw,
        A_center=A["center"],
        A_plus=A["plus"],
        A_minus=A["minus"],
        residual_max=max(s.residual_linf for s in solutions.values()),
        iters_total=sum(s.iterations for s in solutions.values()),
        warm_start=bool(warm),
        solutions=solutions,
    )
    return rec


@dataclass
class SweepResult:
    records: list[JumpRecord]
    failures: list[tuple[float, str]] = field(default_factory=list)


def sweep(omega, epsilons, j: int, cfg: JumpConfig, warm_start: bool = False) -> SweepResult:
    """One :class:`JumpRecord` per epsilon; failures are collected, not raised.

    With ``warm_start`` each solve starts from the previous epsilon's solution
    at the same rotation vector.
    """
    epsilons = list(epsilons)
    if any(e <= 0 for e in epsilons) or epsilons != sorted(epsilons):
        raise ValueError("epsilons must be positive and sorted")
    out = SweepResult([])
    warm = None
    for eps in epsilons:
        try:
            rec = jump_estimate(omega, eps, j, cfg, warm=warm if warm_start else None)
        except NonConvergence as exc:
            out.failures.append((eps, f"{exc.tag}: {exc}"))
            warm = None
            continue
        if warm_start:
            warm = {tag: sol.z for tag, sol in rec.solutions.items()}
        out.records.append(rec)
    return out


def fit_power_law(records) -> PowerLawFit:
    """Least-squares line through ``(log eps, log jump)``."""
    records = list(records)
    if len(records) < 3:
        raise ValueError(f"need at least 3 records, got {len(records)}")
    bad = [r.epsilon for r in records if not r.jump > 0]
    if bad:
        raise ValueError(f"nonpositive jump at epsilon {bad}")
    x = np.log([r.epsilon for r in records])
    y = np.log([r.jump for r in records])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return PowerLawFit(
        prefactor=float(np.exp(intercept)),
        exponent=float(slope),
        rms_log_residual=float(np.sqrt(np.mean(resid**2))),
        points_used=len(records),
    )
