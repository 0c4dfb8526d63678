"""Trigonometric potentials and their y-derivatives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planecell.grid import Field, TorusSpec, translate
from planecell.potential import (
    ComposedArgument,
    PotentialSpec,
    TrigTerm,
    deriv_y,
    mean_deriv_y,
)

BUILTINS = [
    PotentialSpec("product_cos", (2, 3)),
    PotentialSpec("separable", (2, 1)),
    PotentialSpec("mixed", (2, 1)),
    PotentialSpec("product_cos", (1, 2), amplitude=0.7),
]


def direct(spec, x, y, z):
    """Closed forms of V straight from the definitions."""
    k = spec.k
    A = spec.amplitude
    if spec.kind == "product_cos":
        return A * np.sin(2 * np.pi * (k[0] * x + k[1] * y)) * np.cos(2 * np.pi * z)
    if spec.kind == "separable":
        return A * np.sin(2 * np.pi * k[0] * x) * np.sin(2 * np.pi * k[1] * y) * np.cos(2 * np.pi * z)
    return 0.5 * A * np.sin(2 * np.pi * (k[0] * x + k[1] * y)) * (np.cos(2 * np.pi * z) + np.sin(2 * np.pi * z))


class TestPotentialSpec:
    @pytest.mark.parametrize("spec", BUILTINS, ids=lambda s: s.kind)
    def test_terms_reproduce_definition(self, spec, rng):
        x, y, z = rng.uniform(-2, 2, (3, 50))
        np.testing.assert_allclose(spec.evaluate(0, (x, y), z), direct(spec, x, y, z), atol=1e-13)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PotentialSpec("quartic", (1,))

    def test_separable_needs_two_components(self):
        with pytest.raises(ValueError):
            PotentialSpec("separable", (1, 2, 3))

    def test_custom_requires_terms(self):
        with pytest.raises(ValueError):
            PotentialSpec("custom_trig")

    def test_dict_round_trip(self):
        custom = PotentialSpec(
            "custom_trig",
            custom_terms=(TrigTerm(0.5, 3, (1, 0), 0, 2), TrigTerm(-1.0, 0, (0, 1), 3, 1)),
        )
        for spec in BUILTINS + [custom]:
            assert PotentialSpec.from_dict(spec.to_dict()) == spec

    def test_custom_matches_builtin(self, rng):
        custom = PotentialSpec.from_dict(
            {"kind": "custom_trig", "terms": [{"amplitude": 1.0, "x_trig": "sin", "p": [2, 3], "y_trig": "cos", "q": 1}]}
        )
        x, y, z = rng.uniform(0, 1, (3, 20))
        for n in range(4):
            np.testing.assert_allclose(
                custom.evaluate(n, (x, y), z), BUILTINS[0].evaluate(n, (x, y), z), atol=1e-12
            )

    def test_order_bounds(self):
        with pytest.raises(ValueError):
            BUILTINS[0].evaluate(13, (0.0, 0.0), 0.0)
        with pytest.raises(ValueError):
            BUILTINS[0].evaluate(-1, (0.0, 0.0), 0.0)


class TestDerivY:
    def test_first_derivative_closed_form(self):
        torus = TorusSpec(2, 1, 32)
        spec = BUILTINS[0]
        alpha = 0.13
        out = deriv_y(spec, 1, ComposedArgument((2.0, 3.0), alpha), torus)
        kx = 2 * torus.coords[0] + 3 * torus.coords[1]
        expected = -2 * np.pi * np.sin(2 * np.pi * kx) * np.sin(2 * np.pi * kx + 2 * np.pi * alpha)
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_order_zero_is_v(self):
        torus = TorusSpec(2, 1, 16)
        spec = BUILTINS[1]
        pert = Field.from_function(torus, lambda x, y: 0.1 * np.cos(2 * np.pi * x))
        arg = ComposedArgument((2.0, 1.0), 0.3, pert)
        out = deriv_y(spec, 0, arg, torus)
        np.testing.assert_allclose(out.values, direct(spec, *torus.coords, arg.values(torus)), atol=1e-13)

    @pytest.mark.parametrize("spec", BUILTINS, ids=lambda s: s.kind)
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_finite_difference_consistency(self, spec, n, rng):
        x, y, z = rng.uniform(0, 1, (3, 40))
        h = 1e-5
        fd = (spec.evaluate(n - 1, (x, y), z + h) - spec.evaluate(n - 1, (x, y), z - h)) / (2 * h)
        exact = spec.evaluate(n, (x, y), z)
        scale = np.abs(exact).max()
        assert np.abs(fd - exact).max() <= 1e-7 * scale

    @pytest.mark.parametrize("spec", BUILTINS, ids=lambda s: s.kind)
    def test_periodic_under_cell_shift(self, spec):
        torus = TorusSpec(2, 2, 32)
        omega = (spec.k[0] * 1.0, spec.k[1] * 1.0)
        pert = Field.from_function(torus, lambda x, y: 0.05 * np.sin(np.pi * (x + y)))
        arg = ComposedArgument(omega, 0.2, pert)
        base = deriv_y(spec, 2, arg, torus)
        shifted_arg = ComposedArgument(omega, 0.2, translate(pert, (2, 0)))
        assert np.array_equal(deriv_y(spec, 2, shifted_arg, torus).values, translate(base, (2, 0)).values)


class TestMeanDerivY:
    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_resonant_mean(self, alpha):
        torus = TorusSpec(2, 1, 32)
        arg = ComposedArgument((2.0, 3.0), alpha)
        assert mean_deriv_y(BUILTINS[0], 1, arg, torus) == pytest.approx(-np.pi * np.cos(2 * np.pi * alpha), abs=1e-12)

    def test_nonresonant_mean(self):
        torus = TorusSpec(2, 1, 32)
        arg = ComposedArgument((0.0, 0.0), 0.37)
        assert abs(mean_deriv_y(BUILTINS[0], 1, arg, torus)) < 1e-14

    def test_twist_matches_quadrature(self):
        torus = TorusSpec(2, 1, 32)
        arg = ComposedArgument((2.0, 3.0), 0.25)
        twist = mean_deriv_y(BUILTINS[0], 2, arg, torus)
        # brute-force midpoint rule on a finer, shifted grid
        s = (np.arange(400) + 0.5) / 400
        X, Y = np.meshgrid(s, s, indexing="ij")
        kx = 2 * X + 3 * Y
        brute = np.mean(-4 * np.pi**2 * np.sin(2 * np.pi * kx) * np.cos(2 * np.pi * (kx + 0.25)))
        assert twist == pytest.approx(brute, rel=1e-10)
        assert twist == pytest.approx(2 * np.pi**2, rel=1e-12)

    @pytest.mark.parametrize("spec", BUILTINS[:3], ids=lambda s: s.kind)
    def test_phi1_averages_to_zero(self, spec):
        torus = TorusSpec(2, 1, 32)
        omega = tuple(float(k) for k in spec.k)
        alphas = np.arange(256) / 256
        values = [mean_deriv_y(spec, 1, ComposedArgument(omega, a), torus) for a in alphas]
        assert abs(np.mean(values)) <= 1e-10
        shifted = mean_deriv_y(spec, 1, ComposedArgument(omega, 1.3), torus)
        assert shifted == pytest.approx(mean_deriv_y(spec, 1, ComposedArgument(omega, 0.3), torus), abs=1e-12)
