import numpy as np
import pytest

from geomflow.flows import Trajectory
from geomflow.rg import (
    RGConfig,
    RGKind,
    biharmonic_profile,
    gaussian_profile,
    initial_state,
    rg_step,
    run_rg,
    split,
    theorem41_direct_check,
)
from geomflow.spectral import Field, WeightedSobolevSpec, apply_semigroup, integrate, make_grid

# (2 pi)^-1 int exp(-k^4) dk = 2 Gamma(5/4) / (2 pi)
PHI0_RAW = 0.28851686930823484


@pytest.fixture(scope="module")
def g1():
    return make_grid(1, 256, 32.0)


def linear_config(d=1, m=1, **kw):
    kw.setdefault("linear", True)
    return RGConfig(d=d, m=m, **kw)


class TestProfiles:
    @pytest.mark.parametrize("d,n", [(1, 256), (2, 64)])
    def test_psi_unit_mass(self, d, n):
        assert integrate(gaussian_profile(make_grid(d, n, 16.0)))[0] == pytest.approx(1.0, abs=1e-10)

    def test_psi_origin(self, g1):
        assert gaussian_profile(g1).values[0, g1.n // 2] == pytest.approx(0.28209, abs=1e-5)

    def test_psi_self_similar(self, g1):
        # heat flow of L^d psi(L .) over [L^-2, 1] returns psi
        from geomflow.spectral import rescale

        L = 2.0
        start = rescale(gaussian_profile(g1), L, 1)
        out = apply_semigroup(start, 1 - L**-2)
        assert np.abs(out.values - gaussian_profile(g1).values).max() <= 1e-8

    def test_phi_real_even(self, g1):
        phi = biharmonic_profile(g1).values[0]
        assert np.isrealobj(phi)
        # mirror about the origin index n/2
        assert np.abs(phi[1:] - phi[1:][::-1]).max() <= 1e-12

    def test_phi_origin_before_normalisation(self, g1):
        assert biharmonic_profile(g1, normalize=False).values[0, g1.n // 2] == pytest.approx(PHI0_RAW, abs=1e-4)

    def test_phi_changes_sign(self):
        phi = biharmonic_profile(make_grid(1, 4096, 64.0)).values[0]
        assert phi.min() < 0
        assert integrate(Field(make_grid(1, 4096, 64.0), phi))[0] == pytest.approx(1.0, abs=1e-12)


class TestConfig:
    def test_rejects_L(self):
        with pytest.raises(ValueError, match="L > 1"):
            RGConfig(d=1, m=1, L=1.0)

    def test_sobolev_hypotheses(self):
        with pytest.raises(ValueError, match="needs m >"):
            RGConfig(d=2, m=1, sobolev=WeightedSobolevSpec(2, 3.0))
        with pytest.raises(ValueError, match="needs r >"):
            RGConfig(d=2, m=1, sobolev=WeightedSobolevSpec(3, 1.5))
        with pytest.raises(ValueError, match="needs m >"):
            RGConfig(d=1, m=1, kind="BiharmonicV", sobolev=WeightedSobolevSpec(3, 2.0))

    def test_defaults_satisfy_hypotheses(self):
        for kind in RGKind:
            cfg = RGConfig(d=2, m=3, kind=kind)
            assert cfg.sobolev.m > 1 + (3 if kind is RGKind.BIHARMONIC_V else 1)
            assert cfg.base_point == (1.0, 0.0, 0.0)

    def test_prefactors(self):
        cfg = RGConfig(d=2, m=3, L=2.0)
        assert cfg.prefactors(3) == (2.0**-6, 2.0**-6)
        assert RGConfig(d=2, m=3, kind="HeatW").prefactors(2) == (0.25, 0.25)
        assert RGConfig(d=2, m=3, kind="BiharmonicV").prefactors(1) == (0.25, 2.0**-4)
        assert linear_config().prefactors(5) == (0.0, 0.0)

    def test_kind_parse(self):
        assert RGKind.parse("heatv") is RGKind.HEAT_V
        with pytest.raises(ValueError):
            RGKind.parse("heat")


class TestSplit:
    def test_idempotent(self, g1):
        psi = gaussian_profile(g1)
        f = Field(g1, np.exp(-(g1.x - 1) ** 2)[None])
        V, rho = split(f, psi)
        V2, rho2 = split(rho, psi)
        assert abs(V2[0]) <= 1e-12 and np.abs(rho2.values - rho.values).max() <= 1e-12
        assert abs(integrate(rho)[0]) <= 1e-12


class TestStep:
    @pytest.mark.parametrize("L", [2.0, 3.0])
    def test_linear_fixed_point(self, g1, L):
        M = 0.7
        cfg = linear_config(L=L, dt=0.01)
        state = initial_state(cfg, gaussian_profile(g1) * M)
        new, _ = rg_step(cfg, state)
        assert new.V[0] == pytest.approx(M, abs=1e-8)
        assert new.r <= 1e-6 * M

    def test_linear_mass_conserved(self, g1):
        cfg = linear_config()
        f = Field(g1, (0.3 * np.exp(-g1.radius2) + 0.1 * g1.x * np.exp(-g1.radius2 / 2))[None])
        state = initial_state(cfg, f)
        new, _ = rg_step(cfg, state)
        assert new.V[0] == pytest.approx(state.V[0], rel=1e-12)

    def test_scale_consistency(self, g1):
        # one step at L^2 equals two steps at L for the linear flow
        f = Field(g1, (0.3 * np.exp(-g1.radius2 / 2) + 0.1 * g1.x * np.exp(-g1.radius2 / 2))[None])
        big = linear_config(L=4.0, dt=0.005)
        small = linear_config(L=2.0, dt=0.005)
        one, _ = rg_step(big, initial_state(big, f))
        s = initial_state(small, f)
        two, _ = rg_step(small, rg_step(small, s)[0])
        assert abs(one.V[0] - two.V[0]) <= 1e-6 and abs(one.r - two.r) <= 1e-6

    def test_mean_zero_every_step(self):
        g = make_grid(2, 64, 16.0)
        r2 = g.radius2
        v0 = Field(g, np.stack([0 * r2, 4e-3 * np.exp(-r2 / 2), 3e-3 * np.exp(-r2 / 3)]))
        cfg = RGConfig(d=2, m=3, dt=0.05)
        state = initial_state(cfg, v0)
        for _ in range(3):
            state, _ = rg_step(cfg, state)
            assert np.abs(integrate(state.rho)).max() <= 1e-8 * (np.abs(state.V).sum() + state.r)

    def test_component_count(self, g1):
        with pytest.raises(ValueError, match="components"):
            initial_state(RGConfig(d=1, m=3), Field.zeros(g1))


class TestRun:
    def test_linear_fixed_point_heat(self, g1):
        M = 0.4
        rep = run_rg(linear_config(dt=0.02), gaussian_profile(g1) * M)
        assert rep.V_lim[0] == pytest.approx(M, abs=1e-6)
        assert max(rep.r) <= 1e-6
        assert all(rep.verdicts.values()) and rep.aborted is None
        assert len(rep.V) == len(rep.r) == 7 and len(rep.dV) == len(rep.R) == 6

    def test_linear_fixed_point_biharmonic(self, g1):
        M = 0.4
        cfg = linear_config(kind="BiharmonicV", dt=0.01, sobolev=WeightedSobolevSpec(4, 2.0), delta=10.0)
        rep = run_rg(cfg, biharmonic_profile(g1) * M)
        assert rep.V_lim[0] == pytest.approx(M, abs=1e-6)
        assert max(rep.r) <= 1e-6

    def test_dipole_remainder_contracts(self, g1):
        dip = 0.05 * g1.x * np.exp(-g1.radius2 / 2)
        v0 = Field(g1, np.stack([0 * dip, dip]))
        rep = run_rg(RGConfig(d=1, m=2, kind="HeatV", L=4.0, n_steps=3, dt=0.01), v0)
        # odd data: no tangential mass; the normal component picks up O(eps^2)
        assert abs(rep.V_lim[1]) <= 1e-10
        assert abs(rep.V_lim[0]) <= 0.05**2
        assert rep.r_ratio < 1 and all(b < a for a, b in zip(rep.r, rep.r[1:]))

    def test_heat_w_refused_in_one_dimension(self, g1):
        with pytest.raises(ValueError, match=r"L\^\(-n\(d-1\)\) equals 1 when d = 1"):
            run_rg(RGConfig(d=1, m=1, kind="HeatW"), Field.zeros(g1, m=2))

    def test_heat_w_two_dimensions(self):
        g = make_grid(2, 64, 16.0)
        from geomflow.spectral import gradient

        v = Field(g, np.stack([0 * g.radius2, 3e-3 * np.exp(-g.radius2 / 2), 0 * g.radius2]))
        state = Field(g, np.concatenate([v.values, gradient(v).values]))
        rep = run_rg(RGConfig(d=2, m=3, kind="HeatW", n_steps=3, dt=0.05), state)
        assert rep.W_lim.shape == (3, 2)
        assert rep.aborted is None

    def test_smallness_gate(self, g1):
        with pytest.raises(ValueError, match="smallness"):
            run_rg(RGConfig(d=1, m=1, delta=1e-3), gaussian_profile(g1))

    def test_divergence_gives_partial_report(self, g1):
        # large data leave the tube around the base point inside the first inner evolution
        v0 = Field(g1, np.stack([-1.2 * np.exp(-g1.radius2), 0 * g1.x]))
        rep = run_rg(RGConfig(d=1, m=2, delta=1e9, dt=0.01), v0)
        assert rep.aborted is not None and not any(rep.verdicts.values())

    def test_report_serialisation(self, g1):
        rep = run_rg(linear_config(n_steps=2), gaussian_profile(g1) * 0.1)
        d = rep.to_dict()
        assert d["V_lim"] == pytest.approx([0.1]) and set(d["verdicts"]) == {"V_cauchy", "r_small", "profile_match"}
        rows = rep.csv_rows()
        assert rows[0] == ["n", "V_0", "dV", "r", "R"] and len(rows) == 4

    def test_lem7n_surrogate(self):
        g = make_grid(2, 64, 16.0)
        r2 = g.radius2
        v0 = Field(g, np.stack([0 * r2, 4e-3 * np.exp(-r2 / 2), 3e-3 * np.exp(-r2 / 3)]))
        rep = run_rg(RGConfig(d=2, m=3, n_steps=4, dt=0.05), v0)
        assert rep.lem7n_holds and np.isfinite(rep.lem7n_C2) and rep.lem7n_spread >= 1


class TestTheorem41Check:
    def test_pure_heat_gaussian(self, g1):
        V = 0.3
        u0 = gaussian_profile(g1) * V
        times = (0.5, 1.0, 3.0, 7.0)
        traj = Trajectory(None, [0.0, *times], [u0] + [apply_semigroup(u0, s) for s in times], [{}] * 5)
        out = theorem41_direct_check(traj, [V], WeightedSobolevSpec(2, 2.0))
        assert [t for t, _, _ in out] == [1.0, 1.5, 2.0, 4.0, 8.0]
        assert max(e for _, e, _ in out) <= 1e-6
        assert out[0][2] == pytest.approx(2 ** -0.5)

    def test_zero_data(self, g1):
        z = Field.zeros(g1)
        traj = Trajectory(None, [0.0, 1.0], [z, z], [{}, {}])
        assert all(e == 0 for _, e, _ in theorem41_direct_check(traj, [0.0], WeightedSobolevSpec(2, 2.0)))

    def test_spec_mismatch(self, g1):
        traj = Trajectory(None, [0.0], [Field.zeros(g1)], [{}])
        with pytest.raises(ValueError, match="does not match"):
            theorem41_direct_check(traj, [0.0], WeightedSobolevSpec(5, 2.0), RGConfig(d=1, m=1))

    def test_component_mismatch(self, g1):
        traj = Trajectory(None, [0.0], [Field.zeros(g1)], [{}])
        with pytest.raises(ValueError, match="entries"):
            theorem41_direct_check(traj, [0.0, 1.0], WeightedSobolevSpec(2, 2.0))
