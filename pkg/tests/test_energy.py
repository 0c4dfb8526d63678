"""Average energy, jump estimates, sweeps and power-law fits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planecell.descent import DescentParams, solve
from planecell.energy import (
    JumpConfig,
    JumpRecord,
    average_energy,
    energy_record,
    fit_power_law,
    initial_constant,
    jump_estimate,
    solve_with_restarts,
    sweep,
)
from planecell.errors import NonConvergence
from planecell.grid import Field, TorusSpec
from planecell.heteroclinic import analytic_jump
from planecell.potential import PotentialSpec

PRODUCT = PotentialSpec("product_cos", (2, 3))


def synthetic(C, p, eps):
    return [JumpRecord(e, 0, 0.0, 0.0, C * e**p, 0.1) for e in eps]


@pytest.fixture(scope="module")
def fig1_cfg():
    return JumpConfig(PRODUCT, TorusSpec(2, 16, 256))


class TestAverageEnergy:
    def test_quadratic_at_zero_epsilon(self):
        torus = TorusSpec(2, 1, 16)
        sol = solve((2.0, 3.0), 0.0, PRODUCT, DescentParams(), z0=0.0, torus=torus)
        assert average_energy(sol, PRODUCT) == 6.5
        rec = energy_record(sol, PRODUCT)
        assert rec.A == 6.5 and rec.grid == torus

    def test_parseval_mode(self):
        torus = TorusSpec(2, 2, 32)
        a = 0.1
        sol = solve((1.0, 0.5), 0.0, PRODUCT, DescentParams(), z0=0.0, torus=torus)
        sol.z = Field.from_function(torus, lambda x, y: a * np.sin(2 * np.pi * x / 2))
        expected = 0.5 * 1.25 + 0.25 * a**2 * (2 * np.pi / 2) ** 2
        assert average_energy(sol, PRODUCT) == pytest.approx(expected, abs=1e-14)

    def test_minimality_spot_check(self, rng):
        torus = TorusSpec(2, 2, 32)
        eps = 0.05
        omega = (2.0, 3.5)
        sol = solve(omega, eps, PRODUCT, DescentParams(), z0=0.0, torus=torus)
        base = average_energy(sol, PRODUCT)
        for _ in range(20):
            delta = rng.uniform(-1e-3, 1e-3, torus.shape)
            sol_p = type(sol)(**{**sol.__dict__, "z": sol.z + Field(torus, delta)})
            assert average_energy(sol_p, PRODUCT) >= base - 1e-14

    def test_small_epsilon_continuity(self):
        torus = TorusSpec(2, 4, 64)
        omega = (2.25, 3.0)
        eps = np.array([1e-3, 3e-3, 1e-2, 3e-2])
        gaps = []
        for e in eps:
            sol = solve(omega, e, PRODUCT, DescentParams(), z0=0.0, torus=torus)
            gaps.append(abs(average_energy(sol, PRODUCT) - 0.5 * (omega[0] ** 2 + omega[1] ** 2)))
        slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
        # off resonance the first-order term averages out, so the gap is O(eps^2)
        assert slope >= 0.9


class TestJump:
    def test_zero_epsilon_with_correction(self):
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 16, 64), curvature_correction=True)
        rec = jump_estimate((2.0, 3.0), 0.0, 0, cfg)
        assert abs(rec.jump) <= 1e-10
        assert rec.delta_omega == 1 / 16

    def test_raw_jump_at_zero_epsilon_is_delta_omega(self):
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 16, 64))
        rec = jump_estimate((2.0, 3.0), 0.0, 0, cfg)
        assert rec.jump == pytest.approx(1 / 16, abs=1e-10)

    def test_benchmark_point(self, fig1_cfg):
        rec = jump_estimate((2.0, 3.0), 1e-2, 0, fig1_cfg)
        assert rec.jump == pytest.approx(float(analytic_jump(1e-2)), rel=0.10)
        assert rec.jump == pytest.approx(rec.dplus + rec.dminus)
        assert rec.residual_max <= 1e-9
        assert rec.iters_total > 0

    def test_initial_constant_is_minimizing_root(self, fig1_cfg):
        assert initial_constant((2.0, 3.0), fig1_cfg) == pytest.approx(0.25, abs=1e-9)
        # no resonance up to the probe depth: start from the plain plane
        assert initial_constant((1.0, 0.0), fig1_cfg) == 0.0

    def test_convexity_along_lattice_line(self):
        torus = TorusSpec(2, 8, 64)
        eps = 0.05
        values = []
        for i in range(-3, 4):
            omega = (2.0 + i / 8, 3.0)
            sol = solve(omega, eps, PRODUCT, DescentParams(), z0=0.25 if i == 0 else 0.0, torus=torus)
            values.append(average_energy(sol, PRODUCT))
        for a, b, c in zip(values, values[1:], values[2:]):
            assert b <= 0.5 * (a + c) + 1e-8

    def test_restarts_halve_dt(self, monkeypatch):
        import planecell.energy as energy

        calls = []

        def fake_solve(omega, eps, spec, params, z0=None, torus=None):
            calls.append(params.dt)
            if len(calls) < 3:
                raise NonConvergence("nope", residual=1.0)
            return "ok"

        monkeypatch.setattr(energy, "solve", fake_solve)
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 1, 16))
        assert solve_with_restarts((2.0, 3.0), 0.1, cfg, 0.0) == "ok"
        assert calls == [0.5, 0.25, 0.125]

    def test_restarts_exhausted(self, monkeypatch):
        import planecell.energy as energy

        def fake_solve(*args, **kwargs):
            raise NonConvergence("nope", residual=1.0)

        monkeypatch.setattr(energy, "solve", fake_solve)
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 1, 16), max_restarts=1)
        with pytest.raises(NonConvergence) as info:
            solve_with_restarts((2.0, 3.0), 0.1, cfg, 0.0, tag="plus")
        assert info.value.tag == "plus"


class TestSweep:
    def test_empty(self, fig1_cfg):
        result = sweep((2.0, 3.0), [], 0, fig1_cfg)
        assert result.records == [] and result.failures == []

    def test_rejects_unsorted(self, fig1_cfg):
        with pytest.raises(ValueError):
            sweep((2.0, 3.0), [0.1, 0.01], 0, fig1_cfg)

    def test_monotone_and_nonnegative(self):
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 16, 128))
        result = sweep((2.0, 3.0), [0.01, 0.03, 0.1], 0, cfg)
        jumps = [r.jump for r in result.records]
        assert all(j >= -1e-6 for j in jumps)
        assert jumps == sorted(jumps)

    def test_warm_start_agrees(self):
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 16, 128))
        eps = [0.05, 0.1]
        cold = sweep((2.0, 3.0), eps, 0, cfg)
        warm = sweep((2.0, 3.0), eps, 0, cfg, warm_start=True)
        assert warm.records[1].warm_start
        for a, b in zip(cold.records, warm.records):
            assert a.jump == pytest.approx(b.jump, abs=1e-7)

    def test_failures_are_collected(self):
        cfg = JumpConfig(PRODUCT, TorusSpec(2, 16, 64), descent=DescentParams(max_iters=2), max_restarts=0)
        result = sweep((2.0, 3.0), [0.05], 0, cfg)
        assert result.records == []
        assert result.failures[0][0] == 0.05


class TestFit:
    def test_square_root_law(self):
        fit = fit_power_law(synthetic(1.8, 0.5, [0.003, 0.01, 0.03, 0.1]))
        assert fit.prefactor == pytest.approx(1.8, rel=1e-12)
        assert fit.exponent == pytest.approx(0.5, abs=1e-12)
        assert fit.rms_log_residual < 1e-12
        assert fit.to_dict()["points"] == 4

    def test_linear_law(self):
        fit = fit_power_law(synthetic(3.0, 1.0, [0.01, 0.1, 1.0]))
        assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
        assert fit.exponent == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(C=st.floats(1e-3, 1e3), p=st.floats(-2, 2))
    def test_recovers_any_exact_law(self, C, p):
        fit = fit_power_law(synthetic(C, p, [1e-3, 1e-2, 1e-1, 0.5]))
        assert fit.prefactor == pytest.approx(C, rel=1e-9)
        assert fit.exponent == pytest.approx(p, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_power_law(synthetic(1.0, 0.5, [0.1, 0.2]))

    def test_nonpositive_jump(self):
        recs = synthetic(1.0, 0.5, [0.1, 0.2, 0.3])
        recs[1].jump = 0.0
        with pytest.raises(ValueError, match="nonpositive"):
            fit_power_law(recs)
