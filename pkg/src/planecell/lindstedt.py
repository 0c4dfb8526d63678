"""Lindstedt series ``u = u_0 + eps u_1 + eps^2 u_2 + ...`` for plane-like solutions.

``u_0 = omega.x + alpha`` is affine and kept symbolic; every later coefficient
is a periodic :class:`~planecell.grid.Field` split as ``u_j = u_j* + lambda_j``
with ``mean(u_j*) = 0``.  The order-j equation is

    Lap u_j = [V_y(x, u_0 + W)]_{j-1},   W = sum_{i>=1} eps^i u_i,

whose right side is the truncated Taylor composition
``sum_n V^{(n+1)}(x, u_0) / n! * [W^n]_{j-1}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, lcm

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .descent import MinimizerSolution, reduced_energy
from .errors import CompatibilityError, DegenerateTwist, LinearSolveStall, NoRootError
from .grid import Field, TorusSpec, check_commensurate, irfft, rfft, solve_poisson_zero_mean
from .potential import ComposedArgument, PotentialSpec, deriv_y

log = logging.getLogger(__name__)

ZERO_THRESHOLD = 1e-10


@dataclass
class SeriesField:
    """Truncated series with ``M`` terms ``u_0 .. u_{M-1}``."""

    omega: tuple[float, ...]
    alpha: float
    torus: TorusSpec
    stars: list[Field] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    last_lambda_closed: bool = False

    @property
    def M(self) -> int:
        return len(self.stars) + 1

    @property
    def coefficients(self) -> list[Field]:
        """``u_1 .. u_{M-1}`` including their constants."""
        return [s + lam for s, lam in zip(self.stars, self.lambdas)]

    def u0_argument(self) -> ComposedArgument:
        return ComposedArgument(self.omega, self.alpha, None)


@dataclass
class SeriesValue:
    """Periodic part ``z = sum eps^j u_j`` together with the affine data."""

    z: Field
    omega: tuple[float, ...]
    alpha: float

    def corrector(self) -> Field:
        """``alpha + z``, the periodic corrector seen by the descent solver."""
        return self.z + self.alpha


@dataclass
class ResonanceAnalysis:
    potential: PotentialSpec
    omega: tuple[float, ...]
    resonance_order: int | None
    roots: list[float]
    twist_values: list[float]
    mean_potential: list[float] = field(default_factory=list)
    phi_samples: np.ndarray | None = field(default=None, repr=False)

    def minimizing_root(self) -> float:
        """Root whose ``u_0`` has the lowest average potential (ties -> smallest alpha)."""
        if not self.roots:
            return 0.0
        order = sorted(range(len(self.roots)), key=lambda i: (round(self.mean_potential[i], 12), self.roots[i]))
        return self.roots[order[0]]

    def to_dict(self) -> dict:
        return {
            "omega": list(self.omega),
            "resonance_order": self.resonance_order,
            "roots": self.roots,
            "twist_values": self.twist_values,
            "mean_potential": self.mean_potential,
        }


def minimal_torus(omega, nodes_per_unit: int, d: int | None = None) -> TorusSpec:
    """Smallest cell period making ``omega`` commensurate, with the given node density."""
    denoms = [Fraction(float(w)).limit_denominator(4096).denominator for w in omega]
    N = 1
    for q in denoms:
        N = lcm(N, q)
    if N & (N - 1):
        raise ValueError(f"rotation vector {tuple(omega)} needs period {N}, which is not a power of two")
    m = N * nodes_per_unit
    m = 1 << max(2, (m - 1).bit_length())
    while m % N:
        m *= 2
    return TorusSpec(len(omega) if d is None else d, N, m)


def _power_series_powers(W: list[np.ndarray | float], degree: int, nmax: int):
    """Coefficients ``[W^n]_degree`` for ``n = 0..nmax`` (``W[0]`` must be 0)."""
    powers = [[1.0] + [0.0] * degree]
    for _ in range(nmax):
        prev = powers[-1]
        nxt = [0.0] * (degree + 1)
        for a in range(degree + 1):
            if np.isscalar(prev[a]) and prev[a] == 0.0:
                continue
            for b in range(1, degree + 1 - a):
                nxt[a + b] = nxt[a + b] + prev[a] * W[b]
        powers.append(nxt)
    return [p[degree] for p in powers]


def _rhs_values(potential: PotentialSpec, torus, omega, alpha, coeffs: list[np.ndarray], j: int) -> np.ndarray:
    """``[V_y(x, u^{<j})]_{j-1}`` given ``coeffs = [u_1, ..., u_{j-1}]`` (arrays)."""
    if len(coeffs) < j - 1:
        raise ValueError(f"order {j} needs u_1..u_{j - 1}; only {len(coeffs)} available")
    arg = ComposedArgument(tuple(omega), alpha, None)
    degree = j - 1
    W = [0.0] + list(coeffs[:degree])
    powers = _power_series_powers(W, degree, degree)
    total = np.zeros(torus.shape)
    for n, wn in enumerate(powers):
        if np.isscalar(wn) and wn == 0.0:
            continue
        total = total + deriv_y(potential, n + 1, arg, torus).values * wn / factorial(n)
    return total


def series_coefficient_rhs(series: SeriesField, j: int, spec: PotentialSpec) -> Field:
    """Right-hand side of the order-``j`` equation from ``u_1 .. u_{j-1}``."""
    coeffs = [c.values for c in series.coefficients]
    return Field(series.torus, _rhs_values(spec, series.torus, series.omega, series.alpha, coeffs, j))


def _phi_profile(spec, torus, omega, alpha, depth):
    """Means of the rhs at orders 1..depth on the zero-mean branch (all lambda = 0)."""
    coeffs = []
    means = []
    for j in range(1, depth + 1):
        rhs = _rhs_values(spec, torus, omega, alpha, coeffs, j)
        mean = float(rhs.mean())
        means.append(mean)
        if j < depth:
            coeffs.append(solve_poisson_zero_mean(Field(torus, rhs - mean)).values)
    return means


def phi(spec: PotentialSpec, omega, alpha: float, j: int, torus: TorusSpec) -> float:
    """Compatibility function ``Phi_j(alpha)`` (per unit volume)."""
    return _phi_profile(spec, torus, omega, alpha, j)[-1]


def _bisect(func, a, b, fa, tol=1e-12, maxiter=200):
    for _ in range(maxiter):
        if b - a <= tol:
            break
        c = 0.5 * (a + b)
        fc = func(c)
        if fc == 0.0:
            return c
        if np.sign(fc) == np.sign(fa):
            a, fa = c, fc
        else:
            b = c
    return 0.5 * (a + b)


def analyze_resonance(
    spec: PotentialSpec,
    omega,
    probe_depth: int = 4,
    alpha_grid: int = 256,
    torus: TorusSpec | None = None,
    require_twist: bool = True,
) -> ResonanceAnalysis:
    """Find the first order ``j*`` with ``Phi_j`` not identically zero, and its roots.

    Raises
    ------
    NoRootError
        ``Phi_{j*}`` shows no sign change on the alpha grid.
    DegenerateTwist
        ``mean V_yy(x, u_0)`` vanishes at a root (only when ``require_twist``).
    """
    if probe_depth < 1:
        raise ValueError("probe_depth must be at least 1")
    omega = tuple(float(w) for w in omega)
    if torus is None:
        torus = minimal_torus(omega, 16)
    check_commensurate(torus, omega)
    alphas = np.arange(alpha_grid) / alpha_grid
    samples = np.array([_phi_profile(spec, torus, omega, a, probe_depth) for a in alphas])

    order = None
    for j in range(1, probe_depth + 1):
        if np.abs(samples[:, j - 1]).max() > ZERO_THRESHOLD:
            order = j
            break
    if order is None:
        return ResonanceAnalysis(spec, omega, None, [], [], [], samples)

    values = samples[:, order - 1]
    func = lambda a: phi(spec, omega, a, order, torus)  # noqa: E731
    # samples this close to zero count as roots, so tangential (double) roots are not missed
    flat = ZERO_THRESHOLD * np.abs(values).max()
    roots: list[float] = []
    for i in range(alpha_grid):
        a, b = alphas[i], alphas[i] + 1.0 / alpha_grid
        fa, fb = values[i], values[(i + 1) % alpha_grid]
        if abs(fa) <= flat:
            roots.append(float(a))
        elif np.sign(fa) != np.sign(fb) and fb != 0.0:
            roots.append(float(_bisect(func, a, b, fa) % 1.0))
    if not roots:
        raise NoRootError(
            f"Phi_{order} has no sign change (min {values.min():.3e}, max {values.max():.3e})",
            fmin=float(values.min()),
            fmax=float(values.max()),
        )
    roots = _dedupe(roots)

    twists, means = [], []
    for r in roots:
        arg = ComposedArgument(omega, r, None)
        twist = deriv_y(spec, 2, arg, torus).mean()
        twists.append(float(twist))
        means.append(float(deriv_y(spec, 0, arg, torus).mean()))
        if require_twist and abs(twist) <= ZERO_THRESHOLD:
            raise DegenerateTwist(f"twist integral vanishes at alpha={r:.12f}", alpha=r, twist=twist)
    return ResonanceAnalysis(spec, omega, order, roots, twists, means, samples)


def _dedupe(roots, tol=1e-9):
    out: list[float] = []
    for r in sorted(roots):
        if out and min(abs(r - out[-1]), 1 - abs(r - out[-1])) < tol:
            continue
        out.append(r)
    if len(out) > 1 and min(abs(out[0] - out[-1]), 1 - abs(out[0] - out[-1])) < tol:
        out.pop()
    return out


def _fix_lambda(spec, torus, omega, alpha, coeffs_base, j) -> float:
    """Constant for ``u_{j-1}`` that makes the order-``j`` rhs mean zero.

    The mean is affine in that constant, so two evaluations determine it.
    """
    coeffs0 = list(coeffs_base)
    coeffs1 = list(coeffs_base)
    coeffs1[-1] = coeffs1[-1] + 1.0
    m0 = _rhs_values(spec, torus, omega, alpha, coeffs0, j).mean()
    m1 = _rhs_values(spec, torus, omega, alpha, coeffs1, j).mean()
    slope = m1 - m0
    if abs(slope) <= ZERO_THRESHOLD:
        raise CompatibilityError(
            f"order {j} compatibility cannot be met: twist integral {slope:.3e} vanishes", mean=m0
        )
    return float(-m0 / slope)


def build_series(
    spec: PotentialSpec,
    omega,
    alpha: float,
    M: int,
    torus: TorusSpec,
    close_last: bool = True,
) -> SeriesField:
    """Solve the order-1 .. order-(M-1) equations at the root ``alpha``.

    With ``close_last`` the constant of ``u_{M-1}`` is fixed by the order-M
    compatibility condition; otherwise it is left at 0.
    """
    if M < 1:
        raise ValueError("series needs at least one term")
    omega = tuple(float(w) for w in omega)
    check_commensurate(torus, omega)
    series = SeriesField(omega, float(alpha), torus)
    coeffs: list[np.ndarray] = []
    for j in range(1, M):
        if j >= 2:
            lam = _fix_lambda(spec, torus, omega, alpha, coeffs, j)
            series.lambdas[-1] = lam
            coeffs[-1] = series.stars[-1].values + lam
        rhs = Field(torus, _rhs_values(spec, torus, omega, alpha, coeffs, j))
        star = solve_poisson_zero_mean(rhs)
        series.stars.append(star)
        series.lambdas.append(0.0)
        coeffs.append(star.values)
    if close_last and M >= 2:
        lam = _fix_lambda(spec, torus, omega, alpha, coeffs, M)
        series.lambdas[-1] = lam
        series.last_lambda_closed = True
    return series


def eval_series(series: SeriesField, epsilon: float) -> SeriesValue:
    """Horner evaluation of ``sum_{j>=1} eps^j u_j``."""
    torus = series.torus
    acc = np.zeros(torus.shape)
    for c in reversed(series.coefficients):
        acc = (acc + c.values) * epsilon
    return SeriesValue(Field(torus, acc), series.omega, series.alpha)


def series_norms(series: SeriesField) -> list[dict]:
    rows = []
    for j, (s, lam) in enumerate(zip(series.stars, series.lambdas), start=1):
        rows.append(
            {
                "order": j,
                "linf": s.norm_inf(),
                "l2": float(np.sqrt(np.mean(s.values**2))),
                "lambda": lam,
            }
        )
    return rows


def _newton_operator(torus: TorusSpec, vyy: np.ndarray, epsilon: float, gamma: float):
    n = vyy.size
    shape = torus.shape
    lap = torus.rxi2

    def matvec(v):
        v = np.asarray(v).reshape(shape)
        return (irfft(lap * rfft(v), shape) + epsilon * vyy * v).ravel()

    def precond(v):
        v = np.asarray(v).reshape(shape)
        return irfft(rfft(v) / (gamma + lap), shape).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    P = LinearOperator((n, n), matvec=precond, dtype=float)
    return A, P


def _smallest_ritz(A) -> float | None:
    try:
        vals = eigsh(A, k=1, which="SA", maxiter=200, tol=1e-6, return_eigenvectors=False)
        return float(vals[0])
    except Exception:  # ARPACK failure only degrades the diagnostic
        return None


def newton_refine(
    start: SeriesValue | Field,
    omega,
    epsilon: float,
    spec: PotentialSpec,
    iters: int = 10,
    tol_residual: float = 1e-11,
    gamma: float = 1.0,
    linear_rtol: float = 1e-13,
    linear_maxiter: int = 2000,
) -> MinimizerSolution:
    """Newton iteration ``Z <- Z - L^{-1} F(Z)`` for ``F = -Lap Z + eps V_y``.

    Each linear solve is preconditioned conjugate gradients with
    ``(gamma - Lap)^{-1}``; ``L = -Lap + eps V_yy(x, omega.x + Z)``.
    The residual sequence is kept in ``trace`` as ``(step, residual, energy)``.

    Raises
    ------
    LinearSolveStall
        CG did not converge; carries an estimate of the smallest Ritz value.
    """
    Z = start.corrector() if isinstance(start, SeriesValue) else start
    torus = Z.spec
    omega = tuple(float(w) for w in omega)
    check_commensurate(torus, omega)
    y0 = torus.dot_omega(omega)
    z = Z.values.copy()

    def F(zv):
        lap = irfft(-torus.rxi2 * rfft(zv), torus.shape)
        return -lap + epsilon * spec.evaluate(1, torus.coords, y0 + zv)

    trace = []
    Fz = F(z)
    res = float(np.abs(Fz).max())
    trace.append((0, res, reduced_energy(Field(torus, z), omega, epsilon, spec)))
    n = 0
    while res > tol_residual and n < iters:
        vyy = spec.evaluate(2, torus.coords, y0 + z)
        A, P = _newton_operator(torus, vyy, epsilon, gamma)
        eta, info = cg(A, Fz.ravel(), rtol=linear_rtol, atol=0.0, maxiter=linear_maxiter, M=P)
        if info != 0:
            ritz = _smallest_ritz(A)
            raise LinearSolveStall(
                f"CG did not converge in Newton step {n + 1} (info={info}); smallest Ritz value {ritz}",
                ritz_min=ritz,
                residuals=[t[1] for t in trace],
            )
        z = z - eta.reshape(torus.shape)
        n += 1
        Fz = F(z)
        res = float(np.abs(Fz).max())
        trace.append((n, res, reduced_energy(Field(torus, z), omega, epsilon, spec)))
        log.debug("newton step %d residual %.3e", n, res)

    zf = Field(torus, z)
    return MinimizerSolution(
        z=zf,
        omega=omega,
        epsilon=float(epsilon),
        residual_linf=res,
        iterations=n,
        energy=reduced_energy(zf, omega, epsilon, spec),
        converged=res <= tol_residual,
        stop_reason="residual" if res <= tol_residual else "max_iters",
        alpha0=float(Z.mean()),
        trace=trace,
    )
