"""Built-in example suite run by ``geomflow selftest``.

Every case returns an error measure that is compared with its entry in
``TOLERANCES``; it passes when ``error <= tolerance``.  Structural checks
return 0 (holds) or 1 (violated) with tolerance 0.  The suite covers the
interface examples of every module plus the fast numerical oracles; it is
deterministic and finishes in a few seconds.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import flows, norms, rg, spectral
from .flows import FlowKind, FlowProblem, StepperConfig, evolve
from .harness import DecayExperimentSpec, decay_experiment, fit_decay_exponent, log_schedule, longtime_experiment
from .recipes import make_data
from .spectral import Field, SemigroupKind, make_grid


@dataclass
class CaseResult:
    name: str
    error: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)


CASES = {}
TOLERANCES = {}


def case(name, tol=0.0):
    def deco(fn):
        CASES[name] = fn
        TOLERANCES[name] = tol
        return fn

    return deco


def _raises(fn, exc=ValueError) -> float:
    try:
        fn()
    except exc:
        return 0.0
    return 1.0


def _maxabs(x) -> float:
    return float(np.abs(np.asarray(x)).max())


def _g1(n=128, lam=16.0):
    return make_grid(1, n, lam)


def _sphere_data(grid, eps=0.2, m=3):
    return make_data("gaussian_geodesic", grid, eps, m=m)


def _dev(kind=FlowKind.DEVIATION_V, m=3, lam=(1.0, 1.0)):
    e = tuple([1.0] + [0.0] * (m - 1))
    return FlowProblem(kind, m=m, base_point=e, rg_prefactors=lam)


def _bump3(g):
    return Field(g, np.stack([0.1 * np.exp(-g.radius2), 0.2 * np.exp(-g.radius2 / 2), 0 * g.radius2]))


# --- spectral --------------------------------------------------------------


@case("grid_spacing_1d")
def _():
    return abs(make_grid(1, 256, 20.0).spacing - 0.15625)


@case("grid_spacing_2d")
def _():
    g = make_grid(2, 128, 16.0)
    return abs(g.spacing - 0.25) + abs(g.size - 128**2)


@case("grid_rejects_non_power_of_two")
def _():
    return _raises(lambda: make_grid(1, 100, 20.0))


@case("semigroup_constant", 1e-14)
def _():
    g = make_grid(2, 32, 8.0)
    f = Field(g, np.full((1,) + g.shape, 2.5))
    return max(_maxabs(spectral.apply_semigroup(f, t, k).values - 2.5) for t in (0.3, 7.0) for k in SemigroupKind)


@case("semigroup_identity_t0")
def _():
    g = make_grid(1, 256, 20.0)
    f = Field(g, np.exp(-g.radius2 / 4.0))
    return float(not np.array_equal(spectral.apply_semigroup(f, 0.0).values, f.values))


@case("derivative_constant", 1e-14)
def _():
    g = make_grid(1, 64, 8.0)
    return _maxabs(spectral.derivative(Field(g, np.full((1, 64), 3.0)), 0, 1).values)


@case("derivative_single_mode", 1e-11)
def _():
    g = make_grid(1, 64, 8.0)
    k = 3 * math.pi / g.half_extent
    f = Field(g, np.cos(k * g.x)[None])
    return _maxabs(spectral.derivative(f, 0, 2).values + k**2 * f.values)


@case("lp_norm_zero")
def _():
    z = Field.zeros(_g1())
    return sum(spectral.lp_norm(z, p) for p in (1, 2, 4, np.inf))


@case("sobolev_collapse", 1e-12)
def _():
    g = make_grid(1, 256, 20.0)
    f = Field(g, np.exp(-g.radius2))
    return abs(spectral.weighted_sobolev_norm(f, spectral.WeightedSobolevSpec(0, 0.0)) - spectral.lp_norm(f, 2))


@case("sobolev_zero")
def _():
    return spectral.weighted_sobolev_norm(Field.zeros(_g1()), spectral.WeightedSobolevSpec(2, 1.0))


@case("rescale_rejects_L1")
def _():
    g = _g1()
    return _raises(lambda: spectral.rescale(Field(g, np.exp(-g.radius2)), 1.0, 0.0, 1))


@case("integrate_zero")
def _():
    return _maxabs(spectral.integrate(Field.zeros(_g1(), m=2)))


@case("integrate_odd", 1e-12)
def _():
    g = make_grid(2, 64, 8.0)
    return _maxabs(spectral.integrate(Field(g, (g.coords[0] * np.exp(-g.radius2))[None])))


@case("heat_semigroup_exact", 1e-10)
def _():
    g = make_grid(1, 256, 20.0)
    t = 0.7
    exact = np.exp(-g.radius2 / (1 + 4 * t)) / math.sqrt(1 + 4 * t)
    return _maxabs(spectral.apply_semigroup(Field(g, np.exp(-g.radius2)), t).values[0] - exact)


@case("biharmonic_mass", 1e-10)
def _():
    g = make_grid(2, 64, 12.0)
    f = Field(g, np.exp(-g.radius2))
    m0 = spectral.integrate(f)[0]
    m1 = spectral.integrate(spectral.apply_semigroup(f, 0.5, SemigroupKind.BIHARMONIC))[0]
    return abs(m1 - m0) / abs(m0)


@case("rescale_mass", 1e-8)
def _():
    g = make_grid(1, 512, 32.0)
    f = Field(g, np.exp(-g.radius2 / 4.0))
    r = spectral.rescale(f, 2.0, 1.0, 1)
    return float(abs(spectral.integrate(r)[0] - spectral.integrate(f)[0]) / spectral.integrate(f)[0])


# --- flows -----------------------------------------------------------------


@case("hmf_rhs_constant", 1e-14)
def _():
    g = make_grid(2, 32, 8.0)
    u = make_data("constant", g, 0.0, P=np.array([0.6, 0.0, 0.8]))
    return _maxabs(flows.hmf_rhs(u).values)


@case("hmf_rhs_rejects_off_sphere")
def _():
    g = _g1(64, 8.0)
    vals = _sphere_data(g).values.copy()
    vals[:, 10] *= 1.01
    return _raises(lambda: flows.hmf_rhs(Field(g, vals)))


def _sff_points(n=20, seed=3):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(3, n))
    y /= np.linalg.norm(y, axis=0)
    return y, rng.normal(size=(3, n)), rng.normal(size=(3, n))


@case("sff_zero_argument")
def _():
    y, a, _ = _sff_points()
    return _maxabs(flows.second_fundamental_form_sphere(y, np.zeros_like(a), a))


@case("sff_symmetry")
def _():
    y, a, b = _sff_points()
    A = flows.second_fundamental_form_sphere
    return float(not np.array_equal(A(y, a, b), A(y, b, a)))


@case("sff_tangent_direction", 1e-12)
def _():
    # for tangent w at y on the sphere, A(y)(w, w) = y |w|^2
    y, a, _ = _sff_points()
    w = a - y * np.sum(a * y, axis=0)
    return _maxabs(flows.second_fundamental_form_sphere(y, w, w) - y * np.sum(w * w, axis=0))


@case("sff_finite_difference", 1e-6)
def _():
    y, a, b = _sff_points()
    y = 1.3 * y
    h = 1e-4

    def pi(z):
        return z / np.linalg.norm(z, axis=0)

    # -D^2 pi(y)(a, b) by a central mixed difference
    fd = -(pi(y + h * a + h * b) - pi(y + h * a - h * b) - pi(y - h * a + h * b) + pi(y - h * a - h * b)) / (4 * h * h)
    return _maxabs(flows.second_fundamental_form_sphere(y, a, b) - fd)


@case("v_rhs_zero")
def _():
    return _maxabs(flows.v_rhs(Field.zeros(_g1(), m=3), _dev()).values)


@case("v_rhs_linear_limit", 1e-12)
def _():
    v = _bump3(_g1(64, 8.0))
    return _maxabs(flows.v_rhs(v, _dev(lam=(0.0, 1.0))).values - spectral.laplacian(v).values)


@case("w_rhs_zero")
def _():
    g = _g1(64, 8.0)
    return _maxabs(flows.w_rhs(Field.zeros(g, m=3), Field.zeros(g, m=3), _dev(FlowKind.GRADIENT_W)).values)


@case("w_rhs_linear_limit", 1e-12)
def _():
    v = _bump3(_g1(64, 8.0))
    w = spectral.gradient(v)
    out = flows.w_rhs(w, v, _dev(FlowKind.GRADIENT_W, lam=(0.0, 0.0)))
    return _maxabs(out.values - spectral.laplacian(w).values)


@case("bihmf_rhs_constant", 1e-14)
def _():
    u = make_data("constant", make_grid(2, 32, 8.0), 0.0, P=np.array([0.0, 1.0, 0.0]))
    return _maxabs(flows.bihmf_rhs(u).values)


@case("bih_v_rhs_zero")
def _():
    return _maxabs(flows.bih_v_rhs(Field.zeros(_g1(), m=3), _dev(FlowKind.BIHARMONIC_DEVIATION)).values)


@case("bih_v_rhs_linear_limit", 1e-11)
def _():
    v = _bump3(_g1(64, 8.0))
    out = flows.bih_v_rhs(v, _dev(FlowKind.BIHARMONIC_DEVIATION, lam=(0.0, 0.0)))
    return _maxabs(out.values + spectral.laplacian(spectral.laplacian(v)).values)


@case("semilinear_rhs_zero")
def _():
    return _maxabs(flows.semilinear_rhs(Field.zeros(_g1()), FlowProblem(FlowKind.SEMILINEAR_POWER, q=3.0)).values)


@case("semilinear_rhs_constant", 1e-14)
def _():
    c = 0.7
    out = flows.semilinear_rhs(Field(_g1(64, 8.0), np.full((1, 64), c)), FlowProblem(FlowKind.SEMILINEAR_POWER, q=3.0))
    return _maxabs(out.values - c**3)


@case("step_linear_is_semigroup", 1e-12)
def _():
    v = _bump3(_g1())
    return _maxabs(flows.step(_dev(lam=(0.0, 0.0)), v, 0.37).values - spectral.apply_semigroup(v, 0.37).values)


@case("evolve_t_end_zero")
def _():
    u = _sphere_data(_g1(64, 8.0))
    traj = evolve(FlowProblem(FlowKind.HARMONIC_MAP_SPHERE, m=3), u, StepperConfig(dt=0.01, t_end=0.0))
    return float(len(traj) != 1 or traj.fields[0] is not u)


@case("sphere_constraint", 1e-12)
def _():
    traj = evolve(FlowProblem(FlowKind.HARMONIC_MAP_SPHERE, m=3), _sphere_data(_g1(64, 8.0), 0.3),
                  StepperConfig(dt=0.01, t_end=0.2, snapshot_times=(0.1, 0.2)))
    return max(dg["constraint_violation"] for dg in traj.diagnostics)


# --- norms -----------------------------------------------------------------


def _range():
    return norms.DyadicRange(-8, 8)


@case("besov_constant_zero")
def _():
    return norms.besov_norm(make_data("constant", _g1(), 1.0), 4.0, _range()).value


@case("besov_biharmonic_constant_zero")
def _():
    return norms.besov_norm_biharmonic(make_data("constant", _g1(), 1.0), 4.0, _range()).value


@case("besov_biharmonic_additivity")
def _():
    g = make_grid(1, 512, 32.0)
    rep = norms.besov_norm_biharmonic(Field(g, np.exp(-g.radius2)), 4.0, _range())
    first = max(r[2] for r in rep.per_sample)
    second = max(r[3] for r in rep.per_sample)
    return float(rep.value < max(first, second))


@case("besov_gaussian_oracle", 1e-6)
def _():
    g = make_grid(1, 1024, 40.0)
    rep = norms.besov_norm(Field(g, np.exp(-g.radius2)), 4.0, _range())
    ts = _range().samples
    oracle = ts**0.375 * (3 * math.sqrt(math.pi) / 8) ** 0.25 * (1 + 4 * ts) ** (-0.875)
    return abs(rep.value - oracle.max()) / oracle.max()


@case("carleson_constant_zero")
def _():
    u = make_data("constant", make_grid(2, 32, 8.0), 1.0)
    return norms.carleson_bmo(u, 4, norms.DyadicRange(-8, 7, 2**0.25)).value


@case("carleson_translation", 1e-6)
def _():
    g = make_grid(1, 256, 40.0)
    f = Field(g, np.exp(-((g.x + 20.0) ** 2))[None])
    h = Field(g, np.roll(f.values, g.n // 2, axis=1))
    rr = norms.DyadicRange(-8, 12, 2**0.5)
    a = norms.carleson_bmo(f, 16, rr).value
    return abs(a - norms.carleson_bmo(h, 16, rr).value) / a


def _linear_traj(kind=FlowKind.DEVIATION_V):
    g = _g1()
    u0 = Field(g, 0.1 * np.exp(-g.radius2)[None])
    cfg = StepperConfig(dt=0.01, t_end=1.0, snapshot_times=log_schedule(0.01, 1.0, 4), dt_relative=0.05)
    return evolve(_dev(kind, m=1, lam=(0.0, 0.0)), u0, cfg), u0


@case("x_norm_pure_heat", 1e-8)
def _():
    traj, u0 = _linear_traj()
    return norms.x_norm(traj, u0).value


@case("x_norm_monotone_horizon")
def _():
    u0 = _sphere_data(_g1(), 0.3)
    short = log_schedule(0.01, 1.0, 4)
    p = FlowProblem(FlowKind.HARMONIC_MAP_SPHERE, m=3)
    t1 = evolve(p, u0, StepperConfig(dt=0.01, t_end=1.0, snapshot_times=short, dt_relative=0.05))
    t2 = evolve(p, u0, StepperConfig(dt=0.01, t_end=2.0, snapshot_times=short + (1.5, 2.0), dt_relative=0.05))
    return float(norms.x_norm(t2, u0).value < norms.x_norm(t1, u0).value)


@case("xb_norm_pure_biharmonic", 1e-8)
def _():
    traj, u0 = _linear_traj(FlowKind.BIHARMONIC_DEVIATION)
    return norms.xb_norm(traj, u0).value


@case("xb_norm_terms_reported")
def _():
    traj, u0 = _linear_traj(FlowKind.BIHARMONIC_DEVIATION)
    rep = norms.xb_norm(traj, u0)
    ok = "carleson_i1" in rep.components and "carleson_i2" in rep.components and len(rep.columns) >= 5
    return float(not ok)


def _probe(kind, sigma, r, q):
    res = norms.kernel_exponent_probe(kind, sigma, r, q, norms.DyadicRange(-8, 8, 2**0.5))
    return abs(res.slope - res.expected)


@case("kernel_contraction", 0.02)
def _():
    return _probe("heat", 0, 2.0, 2.0)


@case("kernel_slope_heat", 0.02)
def _():
    return _probe("heat", 1, 2.0, np.inf)


@case("kernel_slope_biharmonic", 0.02)
def _():
    return _probe("biharmonic", 1, np.inf, np.inf)


@case("beta_pi", 1e-8)
def _():
    return abs(norms.beta_integral(0.5, 0.5, 1.0)[0] - math.pi)


@case("beta_t_scaling", 1e-8)
def _():
    worst = 0.0
    for a, b in ((0.5, 0.5), (0.25, 0.75), (0.1, 0.6)):
        ratio = norms.beta_integral(a, b, 4.0)[0] / norms.beta_integral(a, b, 1.0)[0]
        worst = max(worst, abs(ratio / 4.0 ** (1 - a - b) - 1.0))
    return worst


@case("beta_lattice", 1e-6)
def _():
    worst = 0.0
    for a in np.linspace(0.1, 0.9, 5):
        for b in np.linspace(0.1, 0.9, 5):
            num, ref = norms.beta_integral(a, b, 2.0)
            worst = max(worst, abs(num - ref) / ref)
    return worst


# --- rg --------------------------------------------------------------------


@case("phi_real_even", 1e-12)
def _():
    g = make_grid(1, 128, 16.0)
    k = g.mode_index * (math.pi / g.half_extent)
    imag = _maxabs(np.fft.ifftn(np.exp(-(k**4))).imag)
    phi = rg.biharmonic_profile(g).values[0]
    # grid point i sits at -Lambda + i h; its mirror is n - i (index 0 has no partner)
    return max(imag, _maxabs(phi[1:] - phi[1:][::-1]))


@case("rg_linear_mass", 1e-12)
def _():
    g = _g1()
    cfg = rg.RGConfig(d=1, m=1, kind=rg.RGKind.HEAT_V, n_steps=3, linear=True, dt=0.02)
    rep = rg.run_rg(cfg, Field(g, 0.01 * np.exp(-((g.x - 0.5) ** 2))[None]), keep_trajectory=False)
    V = np.asarray(rep.V, dtype=float)
    return float(np.abs(np.diff(V, axis=0)).max() / abs(V[0]).max())


@case("theorem41_zero_data")
def _():
    p = _dev(m=1, lam=(0.0, 0.0))
    traj = evolve(p, Field.zeros(_g1(64, 8.0)), StepperConfig(dt=0.1, t_end=1.0, snapshot_times=(0.5, 1.0)))
    rows = rg.theorem41_direct_check(traj, [0.0], spectral.WeightedSobolevSpec(2, 2.0))
    return max(abs(r[1]) for r in rows)


# --- harness ---------------------------------------------------------------


@case("fit_exact_power", 1e-12)
def _():
    pts = [(10.0**k, 10.0 ** (-k / 2)) for k in np.linspace(0.0, 2.0, 9)]
    slope, _, res = fit_decay_exponent(pts)
    return abs(slope + 0.5) + res


@case("fit_constant", 1e-12)
def _():
    return abs(fit_decay_exponent([(10 ** (k / 4), 2.0) for k in range(9)])[0])


@case("decay_degenerate")
def _():
    spec = DecayExperimentSpec(flow=FlowProblem(FlowKind.SEMILINEAR_POWER, q=3.0), grid=_g1(), recipe="gaussian",
                               eps=0.0, snapshot_times=log_schedule(0.01, 1.0, 4))
    rep = decay_experiment(spec)
    return float(not rep.degenerate or any(v for _, v in rep.m_T))


@case("longtime_constant")
def _():
    P = np.array([0.0, 0.6, 0.8])
    u0 = make_data("constant", _g1(32, 8.0), 0.0, P=P)
    rep = longtime_experiment(FlowProblem(FlowKind.HARMONIC_MAP_SPHERE, m=3), u0, P, 1.0, dt=0.05)
    return max(max(rep.a), max(rep.b))


# --- cli -------------------------------------------------------------------

_HEAT_INI = """
[grid]
d = 1
n = 64
half_extent = 8
[flow]
kind = heat
[stepper]
dt = 0.01
t_end = 0.1
snapshot_times = 0.05 0.1
[experiment]
kind = simulate
recipe = gaussian
eps = 0.1
"""


def _cli(command, text, use_out=True, env=None):
    """Run the CLI in a scratch directory; returns (code, stderr, {relative path: bytes})."""
    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "run.ini"
        path.write_text(text)
        argv = [command, "--config", str(path)]
        if use_out:
            argv += ["--out", str(Path(tmp) / "out")]
        saved = dict(os.environ)
        os.environ.pop("GEOMFLOW_OUT", None)
        if env:
            os.environ.update({k: v.replace("{tmp}", tmp) for k, v in env.items()})
        err = io.StringIO()
        try:
            with contextlib.redirect_stderr(err), contextlib.redirect_stdout(io.StringIO()):
                code = cli.main(argv)
        finally:
            os.environ.clear()
            os.environ.update(saved)
        files = {p.relative_to(tmp).as_posix(): p.read_bytes() for p in Path(tmp).rglob("*") if p.is_file()}
        return code, err.getvalue(), files


@case("cli_csv_header")
def _():
    code, _, files = _cli("simulate", _HEAT_INI)
    lines = files["out/simulate.csv"].decode().splitlines()
    return float(code != 0 or lines[1] != "t,l2,lp,linf,grad_linf,constraint_violation,mass_0")


@case("cli_unknown_key")
def _():
    code, err, _ = _cli("simulate", _HEAT_INI.replace("d = 1", "gird = 1"))
    return float(code != 2 or "gird" not in err)


@case("cli_base_point_not_unit")
def _():
    text = _HEAT_INI.replace("kind = heat", "kind = harmonic_map_sphere\nm = 3\nbase_point = 0 0 1.1")
    code, _, _ = _cli("simulate", text.replace("recipe = gaussian", "recipe = gaussian_geodesic"))
    return float(code != 2)


@case("cli_decay_two_decades")
def _():
    code, _, _ = _cli("decay", _HEAT_INI.replace("kind = simulate", "kind = decay"))
    return float(code != 2)


@case("cli_besov_constant")
def _():
    text = _HEAT_INI.replace("kind = simulate", "kind = besov").replace("recipe = gaussian", "recipe = constant")
    code, _, files = _cli("besov", text)
    return float(code != 0) + json.loads(files["out/besov.json"])["reports"][0]["value"]


@case("cli_env_output_dir")
def _():
    code, _, files = _cli("simulate", _HEAT_INI, use_out=False, env={"GEOMFLOW_OUT": "{tmp}/from_env"})
    return float(code != 0 or "from_env/simulate.csv" not in files)


@case("cli_deterministic")
def _():
    _, _, a = _cli("simulate", _HEAT_INI)
    _, _, b = _cli("simulate", _HEAT_INI)
    return float(a.keys() != b.keys() or any(a[k] != b[k] for k in a if not k.endswith("manifest.json")))


# --- backends --------------------------------------------------------------


@case("backend_parity", 1e-12)
def _():
    from . import _kernels_py, kernels

    try:
        from . import _kernels
    except ImportError:
        return 0.0  # only one backend present
    y, a, b = _sff_points(200, seed=7)
    c = np.roll(a, 1, axis=1)
    worst = 0.0
    for name, args in (("sphere_sff", (y, a, b)), ("sphere_sff_deriv", (y, c, a, b))):
        args = tuple(kernels._c(x) for x in args)
        diff = np.asarray(getattr(_kernels_py, name)(*args)) - np.asarray(getattr(_kernels, name)(*args))
        worst = max(worst, _maxabs(diff))
    return worst


def run_all(tolerances: dict | None = None, only=None) -> list:
    tol = dict(TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    out = []
    for name, fn in CASES.items():
        if only is not None and name not in only:
            continue
        try:
            err = float(fn())
            detail = f"error {err:.3e}"
        except Exception as exc:  # a crashing case is a failing case
            err = float("nan")
            detail = f"{type(exc).__name__}: {exc}"
        out.append(CaseResult(name, err, tol[name], detail))
    return out


def format_table(results) -> list:
    lines = []
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        lines.append(f"{flag}  {r.name:<32s} {r.detail}  (tolerance {r.tolerance:.1e})")
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} cases passed")
    return lines
