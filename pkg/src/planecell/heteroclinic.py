"""Asymptotic heteroclinic for the first-order resonance of ``sin(2 pi k.x) cos(2 pi y)``.

The slow phase solves ``alpha'' = -pi cos(2 pi alpha)`` with the closed form
``alpha(s) = arctan(sinh(sqrt(2) pi s)) / pi + 3/4``, running from 1/4 to 5/4.
Evaluated at ``s = sqrt(eps) x_j`` it glues the minimizer ``M`` to ``M + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import TailError
from .grid import TorusSpec, gradient
from .lindstedt import SeriesField, eval_series
from .potential import PotentialSpec

SQRT2 = np.sqrt(2.0)
JUMP_CONSTANT = 4.0 * SQRT2 / np.pi


def alpha_profile(s):
    return np.arctan(np.sinh(SQRT2 * np.pi * s)) / np.pi + 0.75


def alpha_slope(s):
    """``d alpha / ds = sqrt(2) sech(sqrt(2) pi s)``."""
    return SQRT2 * _sech(SQRT2 * np.pi * s)


def _sech(t):
    a = np.exp(-np.abs(t))
    return 2.0 * a / (1.0 + a * a)


def analytic_jump(epsilon):
    """Leading-order corner size ``(4 sqrt 2 / pi) sqrt(eps)``."""
    return JUMP_CONSTANT * np.sqrt(epsilon)


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for derivative ``order`` on integer ``offsets``."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    V = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def second_derivative(values: np.ndarray, h: float, width: int = 4) -> np.ndarray:
    """Eighth-order (for ``width=4``) second derivative, one-sided near the ends."""
    n = values.size
    stencil = 2 * width + 1
    out = np.empty(n)
    centred = fd_weights(np.arange(-width, width + 1), 2)
    for i in range(n):
        lo = min(max(i - width, 0), n - stencil)
        offs = np.arange(lo, lo + stencil) - i
        w = centred if lo == i - width else fd_weights(offs, 2)
        out[i] = w @ values[lo : lo + stencil]
    return out / h**2


@dataclass
class HeteroclinicProfile:
    eta: tuple[float, ...]
    epsilon: float
    s: np.ndarray
    samples: np.ndarray
    alpha_minus: float
    alpha_plus: float
    ode_residual: float

    @property
    def tail_error(self) -> float:
        return max(abs(self.samples[0] - 0.25), abs(self.samples[-1] - 1.25))


def build_profile(epsilon: float, eta, L: float = 10.0, n_s: int = 4096) -> HeteroclinicProfile:
    """Sample ``alpha`` on ``s in [-L, L]`` and measure the ODE defect."""
    eta = np.asarray(eta, dtype=float)
    eta = eta / np.linalg.norm(eta)
    s = np.linspace(-L, L, n_s)
    a = alpha_profile(s)
    h = s[1] - s[0]
    resid = second_derivative(a, h) + np.pi * np.cos(2.0 * np.pi * a)
    return HeteroclinicProfile(
        eta=tuple(eta),
        epsilon=float(epsilon),
        s=s,
        samples=a,
        alpha_minus=0.25,
        alpha_plus=1.25,
        ode_residual=float(np.abs(resid).max()),
    )


def kinetic_jump_integral(epsilon: float) -> float:
    """Adaptive quadrature of ``2 eps sech^2(sqrt(2 eps) pi x)`` over the line.

    The integrand is below 1e-30 relative beyond ``|x| = 36 / (sqrt(2 eps) pi)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = np.sqrt(2.0 * epsilon) * np.pi
    X = 36.0 / c
    f = lambda x: 2.0 * epsilon * _sech(c * x) ** 2  # noqa: E731
    half, _ = integrate.quad(f, 0.0, X, epsabs=0.0, epsrel=1e-13, limit=200, points=[1.0 / c, 4.0 / c])
    return 2.0 * half


def _gauss_legendre_nodes(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _interpolate_axis(values: np.ndarray, axis: int, N: int, targets: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of an N-periodic grid function along ``axis``.

    Returns an array with ``axis`` replaced by ``len(targets)`` (moved to front).
    """
    m = values.shape[axis]
    coeffs = np.fft.fft(np.moveaxis(values, axis, 0), axis=0) / m
    q = np.fft.fftfreq(m, 1.0 / m)
    coeffs[m // 2] = 0.0
    phase = np.exp(2j * np.pi * np.outer(targets, q) / N)
    flat = coeffs.reshape(m, -1)
    return (phase @ flat).real.reshape((targets.size,) + coeffs.shape[1:])


@dataclass
class DAeResult:
    dplus: float
    dminus: float
    jump: float
    kinetic: float
    potential: float
    tail: float


def dAe_quadrature(
    epsilon: float,
    j: int,
    spec: PotentialSpec,
    series: SeriesField,
    panels: int = 64,
    strip_scale: float = 10.0,
    points_per_unit: int = 32,
    tail_tol: float = 1e-8,
    orientation: int = 1,
) -> DAeResult:
    """One-sided derivatives of ``A_eps`` at the resonance from the heteroclinic ansatz.

    ``D_{+-e_j} = int (e(H_{+-e_j}) - e(M)) dx`` over the strip
    ``|x_j| <= strip_scale / sqrt(2 eps)`` and one unit cross-section, where
    ``e(u) = |grad u|^2 / 2 + eps V(x, u)``, ``M`` is the series minimizer and

        H = M + (alpha(+-sqrt(eps) x_j) - 1/4) + eps (u_1(x; alpha) - u_1(x; 1/4)),
        u_1(x; a) = -cos(4 pi k.x + 2 pi a) / (16 pi |k|^2).

    ``orientation=-1`` uses ``eta = -e_j``, which exchanges the two one-sided values.

    Raises
    ------
    TailError
        If the cross-section-averaged integrand at the strip ends exceeds ``tail_tol``.
    """
    if spec.kind != "product_cos":
        raise ValueError("the asymptotic heteroclinic is only available for product_cos")
    torus: TorusSpec = series.torus
    k = np.asarray(spec.k, dtype=float)
    omega = np.asarray(series.omega, dtype=float)
    A = spec.amplitude
    if A != 1.0:
        raise ValueError("the closed-form profile assumes unit amplitude")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    sq = np.sqrt(epsilon)
    k2 = float(k @ k)

    val = eval_series(series, epsilon)
    zM = val.z.values + val.alpha
    grads = [g.values for g in gradient(val.z)]

    Lx = strip_scale / np.sqrt(2.0 * epsilon)
    order = max(8, int(np.ceil(2 * Lx * points_per_unit / panels)))
    xj, wj = _gauss_legendre_nodes(-Lx, Lx, panels, order)

    z_line = _interpolate_axis(zM, j, torus.N, xj)
    g_line = [_interpolate_axis(g, j, torus.N, xj) for g in grads]

    # transverse node coordinates in the interpolated layout (axis j moved to front)
    shape = z_line.shape
    coords = []
    for axis in range(torus.d):
        if axis == j:
            c = xj.reshape((-1,) + (1,) * (torus.d - 1))
        else:
            pos = [i for i in range(torus.d) if i != j].index(axis) + 1
            sh = [1] * torus.d
            sh[pos] = torus.m
            c = (np.arange(torus.m) * torus.h).reshape(sh)
        coords.append(np.broadcast_to(c, shape))

    kx = sum(ki * ci for ki, ci in zip(k, coords))
    M = sum(wi * ci for wi, ci in zip(omega, coords)) + z_line
    gradM = [omega[i] + g_line[i] for i in range(torus.d)]

    results = {}
    parts = {}
    for sign in (+1, -1):
        direction = sign * orientation
        s = direction * sq * coords[j]
        a = alpha_profile(s)
        da = direction * sq * alpha_slope(s)
        theta = 4.0 * np.pi * kx
        c_scale = epsilon / (16.0 * np.pi * k2)
        corr = (a - 0.25) - c_scale * (np.cos(theta + 2 * np.pi * a) - np.cos(theta + 0.5 * np.pi))
        dcorr = []
        for i in range(torus.d):
            d_theta = (np.sin(theta + 2 * np.pi * a) - np.sin(theta + 0.5 * np.pi)) * 4.0 * np.pi * k[i]
            d_alpha = np.sin(theta + 2 * np.pi * a) * 2 * np.pi * (da if i == j else 0.0)
            d = c_scale * (d_theta + d_alpha)
            if i == j:
                d = d + da
            dcorr.append(d)
        kin = sum(gm * dc + 0.5 * dc**2 for gm, dc in zip(gradM, dcorr))
        pot = epsilon * (spec.evaluate(0, coords, M + corr) - spec.evaluate(0, coords, M))
        kin_line = kin.reshape(xj.size, -1).mean(axis=1)
        pot_line = pot.reshape(xj.size, -1).mean(axis=1)
        tail = max(abs(kin_line[0] + pot_line[0]), abs(kin_line[-1] + pot_line[-1]))
        if tail > tail_tol:
            raise TailError(f"integrand {tail:.3e} at |x_j| = {Lx:.3g}; lengthen the strip", tail=tail)
        results[sign] = float(wj @ (kin_line + pot_line))
        parts[sign] = (float(wj @ kin_line), float(wj @ pot_line), tail)
    return DAeResult(
        dplus=results[+1],
        dminus=results[-1],
        jump=results[+1] + results[-1],
        kinetic=parts[+1][0] + parts[-1][0],
        potential=parts[+1][1] + parts[-1][1],
        tail=max(parts[+1][2], parts[-1][2]),
    )
