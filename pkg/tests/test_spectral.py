import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomflow.spectral import (
    BoundaryDecayError,
    Field,
    SemigroupKind,
    WeightedSobolevSpec,
    apply_semigroup,
    derivative,
    gradient,
    integrate,
    laplacian,
    lp_norm,
    make_grid,
    rescale,
    weighted_sobolev_norm,
)

# independent quadrature values (scipy.integrate.quad), frozen
L2_HEAT_KERNEL = 0.4466219208690011  # (2 sqrt(2 pi))^(-1/2)
WEIGHTED_R1_HEAT_KERNEL = 0.6316187777460648  # sqrt(int (1+x^2) G(x,1)^2 dx)


def heat_kernel(grid, t=1.0):
    return Field(grid, (4 * math.pi * t) ** (-grid.d / 2) * np.exp(-grid.radius2 / (4 * t)))


class TestGrid:
    def test_spacing(self):
        g = make_grid(1, 256, 20.0)
        assert g.spacing == 0.15625
        assert g.x[0] == -20.0 and g.x[-1] == pytest.approx(20.0 - g.spacing)

    def test_2d(self):
        g = make_grid(2, 128, 16)
        assert g.shape == (128, 128) and g.spacing == 0.25

    @pytest.mark.parametrize("n", [100, 0, 3])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ValueError):
            make_grid(1, n, 20.0)

    def test_rejects_bad_extent(self):
        with pytest.raises(ValueError):
            make_grid(1, 64, -1.0)


class TestField:
    def test_rejects_non_finite(self):
        g = make_grid(1, 16, 4.0)
        v = np.zeros((1, 16))
        v[0, 3] = np.nan
        with pytest.raises(ValueError):
            Field(g, v)

    def test_rejects_wrong_shape(self):
        g = make_grid(1, 16, 4.0)
        with pytest.raises(ValueError):
            Field(g, np.zeros((1, 15)))

    def test_scalar_promoted(self):
        g = make_grid(1, 16, 4.0)
        assert Field(g, np.zeros(16)).m == 1


class TestSemigroup:
    def test_gaussian_closed_form(self):
        g = make_grid(1, 512, 40.0)
        f = Field(g, np.exp(-g.radius2 / 4))
        out = apply_semigroup(f, 1.0).values[0]
        exact = math.sqrt(0.5) * np.exp(-g.radius2 / 8)
        assert np.abs(out - exact).max() < 1e-12
        assert out[g.n // 2] == pytest.approx(0.70711, abs=1e-5)

    def test_t0_identity(self):
        g = make_grid(1, 256, 20.0)
        f = Field(g, np.exp(-g.radius2 / 4))
        assert np.array_equal(apply_semigroup(f, 0.0).values, f.values)

    @pytest.mark.parametrize("kind", list(SemigroupKind))
    def test_constant_unchanged(self, kind):
        g = make_grid(2, 16, 4.0)
        f = Field(g, np.full((2,) + g.shape, -1.25))
        assert np.abs(apply_semigroup(f, 3.0, kind).values + 1.25).max() < 1e-14

    def test_rejects_negative_time(self):
        g = make_grid(1, 16, 4.0)
        with pytest.raises(ValueError):
            apply_semigroup(Field.zeros(g), -0.1)

    def test_semigroup_property(self):
        g = make_grid(2, 64, 10.0)
        f = Field(g, np.exp(-g.radius2) * (1 + g.coords[0]))
        for kind in SemigroupKind:
            a = apply_semigroup(apply_semigroup(f, 0.3, kind), 0.5, kind)
            b = apply_semigroup(f, 0.8, kind)
            assert np.abs(a.values - b.values).max() < 1e-13

    def test_biharmonic_preserves_mass(self):
        g = make_grid(1, 256, 20.0)
        f = Field(g, np.exp(-g.radius2))
        assert integrate(apply_semigroup(f, 2.0, "biharmonic"))[0] == pytest.approx(integrate(f)[0], rel=1e-12)


class TestDerivative:
    def test_sine(self):
        g = make_grid(1, 256, 20.0)
        f = Field(g, np.sin(math.pi * g.x / 20)[None])
        d = derivative(f, 0, 1).values[0]
        assert np.abs(d - (math.pi / 20) * np.cos(math.pi * g.x / 20)).max() <= 1e-10

    def test_constant(self):
        g = make_grid(2, 16, 4.0)
        assert np.abs(derivative(Field(g, np.ones((1,) + g.shape)), 1).values).max() == 0.0

    def test_second_order_mode(self):
        g = make_grid(1, 64, 8.0)
        k = 5 * math.pi / 8
        f = Field(g, np.cos(k * g.x)[None])
        assert np.abs(derivative(f, 0, 2).values + k**2 * f.values).max() < 1e-11

    def test_gradient_layout_and_laplacian(self):
        g = make_grid(2, 64, 16.0)
        f = Field(g, np.stack([np.exp(-g.radius2 / 4), g.coords[1] * np.exp(-g.radius2 / 4)]))
        grad = gradient(f)
        assert grad.m == 4
        lap = laplacian(f).values
        div = derivative(Field(g, grad.values[0::2]), 0).values + derivative(Field(g, grad.values[1::2]), 1).values
        assert np.abs(lap - div).max() < 1e-10


class TestNorms:
    def test_zero(self):
        g = make_grid(1, 64, 8.0)
        for p in (1, 2, 3.5, np.inf):
            assert lp_norm(Field.zeros(g), p) == 0.0

    def test_heat_kernel_l2_and_mass(self):
        g = make_grid(1, 512, 20.0)
        G = heat_kernel(g)
        assert lp_norm(G, 2) == pytest.approx(L2_HEAT_KERNEL, abs=1e-4)
        assert lp_norm(G, 1) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_p_below_one(self):
        g = make_grid(1, 64, 8.0)
        with pytest.raises(ValueError):
            lp_norm(Field.zeros(g), 0.5)

    def test_sobolev_collapse(self):
        g = make_grid(1, 512, 20.0)
        G = heat_kernel(g)
        assert weighted_sobolev_norm(G, WeightedSobolevSpec(0, 0.0)) == pytest.approx(lp_norm(G, 2), rel=1e-12)

    def test_sobolev_weight_oracle(self):
        g = make_grid(1, 512, 20.0)
        assert weighted_sobolev_norm(heat_kernel(g), WeightedSobolevSpec(0, 1.0)) == pytest.approx(
            WEIGHTED_R1_HEAT_KERNEL, rel=1e-8
        )

    def test_sobolev_zero(self):
        g = make_grid(1, 64, 8.0)
        assert weighted_sobolev_norm(Field.zeros(g), WeightedSobolevSpec(3, 2.0)) == 0.0

    def test_sobolev_boundary_error_reports_magnitude(self):
        g = make_grid(1, 64, 8.0)
        with pytest.raises(BoundaryDecayError, match="boundary magnitude"):
            weighted_sobolev_norm(Field(g, np.exp(-g.radius2 / 40)), WeightedSobolevSpec(1, 1.0))

    def test_sobolev_spec_validation(self):
        with pytest.raises(ValueError):
            WeightedSobolevSpec(-1, 0.0)


class TestRescale:
    def test_composition(self):
        g = make_grid(1, 512, 20.0)
        out = rescale(Field(g, np.exp(-g.radius2)), 2.0, 0.0, 1)
        assert np.abs(out.values[0] - np.exp(-4 * g.radius2)).max() <= 1e-8

    def test_mass_preserved(self):
        g = make_grid(1, 512, 20.0)
        psi = heat_kernel(g)
        out = rescale(psi, 2.0, 1.0, 1)
        assert np.abs(out.values[0] - 2 * (4 * math.pi) ** -0.5 * np.exp(-4 * g.radius2 / 4)).max() < 1e-10
        assert integrate(out)[0] == pytest.approx(integrate(psi)[0], rel=1e-10)

    def test_rejects_L_le_1(self):
        g = make_grid(1, 64, 8.0)
        with pytest.raises(ValueError):
            rescale(Field.zeros(g), 1.0, 0.0, 1)

    def test_truncation_warning(self):
        g = make_grid(1, 64, 8.0)
        out = rescale(Field(g, np.ones((1, 64))), 2.0, 0.0, 1)
        assert "truncation warning" in out.label


class TestIntegrate:
    def test_unit_mass(self):
        g = make_grid(2, 128, 16.0)
        assert integrate(heat_kernel(g))[0] == pytest.approx(1.0, abs=1e-10)

    def test_odd(self):
        g = make_grid(1, 128, 16.0)
        assert abs(integrate(Field(g, (g.x * np.exp(-g.radius2))[None]))[0]) < 1e-12

    def test_zero(self):
        assert np.all(integrate(Field.zeros(make_grid(1, 16, 4.0), m=3)) == 0)


@settings(max_examples=25, deadline=None)
@given(
    amp=st.floats(0.1, 10.0),
    width=st.floats(0.5, 3.0),
    p=st.sampled_from([1.0, 2.0, 3.0, 4.0, np.inf]),
    t=st.floats(0.0, 5.0),
)
def test_heat_is_lp_contraction(amp, width, p, t):
    g = make_grid(1, 256, 24.0)
    f = Field(g, amp * np.exp(-g.radius2 / width**2) * np.cos(g.x))
    assert lp_norm(apply_semigroup(f, t), p) <= lp_norm(f, p) * (1 + 1e-10) + 1e-14


@settings(max_examples=25, deadline=None)
@given(amp=st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)), shift=st.floats(-4, 4))
def test_norm_homogeneity_and_translation(amp, shift):
    g = make_grid(1, 256, 24.0)
    f = Field(g, np.exp(-(g.x - shift) ** 2)[None])
    base = lp_norm(f, 3.0)
    assert lp_norm(f * amp, 3.0) == pytest.approx(abs(amp) * base, rel=1e-12, abs=1e-300)
    # integral of a shifted Gaussian is shift invariant when it is interior
    assert integrate(f)[0] == pytest.approx(math.sqrt(math.pi), rel=1e-10)
