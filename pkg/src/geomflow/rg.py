"""Discrete renormalisation-group driver.

Each step rescales the solution so that the heat (or biharmonic) semigroup
looks the same at every scale, evolves the renormalised deviation equation
over one unit of renormalised time, and splits the result into a multiple of
the self-similar profile plus a mean-zero remainder:

    v_n(xi, tau) = L^(n d) v(L^n xi, L^(2n) tau),   tau in [L^-2, 1]
    V_{n+1} = int v_n(., 1),   rho_{n+1} = v_n(., 1) - V_{n+1} * profile

For the biharmonic deviation the time scale is ``L^(4n)`` and the profile is
the biharmonic kernel at unit time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flows import (
    FlowKind,
    FlowProblem,
    StepperConfig,
    Trajectory,
    evolve,
)
from .norms import fit_loglog
from .spectral import (
    Field,
    Grid,
    WeightedSobolevSpec,
    boundary_ratio,
    integrate,
    rescale,
    weighted_sobolev_norm,
)

__all__ = [
    "RGKind",
    "RGConfig",
    "RGState",
    "RGReport",
    "RGDivergence",
    "gaussian_profile",
    "biharmonic_profile",
    "split",
    "initial_state",
    "rg_step",
    "run_rg",
    "theorem41_direct_check",
]


class RGDivergence(RuntimeError):
    """The renormalised iteration left the small-data regime."""


class RGKind(enum.Enum):
    HEAT_V = "HeatV"
    HEAT_W = "HeatW"
    BIHARMONIC_V = "BiharmonicV"

    @classmethod
    def parse(cls, value) -> "RGKind":
        if isinstance(value, cls):
            return value
        for k in cls:
            if str(value).lower() in (k.value.lower(), k.name.lower()):
                return k
        raise ValueError(f"unknown RG kind {value!r}; expected one of {[k.value for k in cls]}")

    @property
    def time_power(self) -> int:
        return 4 if self is RGKind.BIHARMONIC_V else 2

    @property
    def flow_kind(self) -> FlowKind:
        return {
            RGKind.HEAT_V: FlowKind.DEVIATION_V,
            RGKind.HEAT_W: FlowKind.GRADIENT_W,
            RGKind.BIHARMONIC_V: FlowKind.BIHARMONIC_DEVIATION,
        }[self]


@dataclass(frozen=True)
class RGConfig:
    """Parameters of an RG run.

    ``linear=True`` forces both nonlinear prefactors to zero, which turns the
    loop into the renormalised linear semigroup (the fixed-point tests).
    ``ratio_bound`` defaults to ``1.5 * L^-d`` (``1.5 * L^-(d-1)`` for HeatW),
    the geometric rate at which the nonlinear prefactor shrinks.
    """

    d: int
    m: int
    kind: RGKind = RGKind.HEAT_V
    L: float = 2.0
    n_steps: int = 6
    sobolev: Optional[WeightedSobolevSpec] = None
    dt: float = 0.01
    inner_snapshots: int = 4
    base_point: Optional[tuple] = None
    linear: bool = False
    delta: float = 1.0
    ratio_bound: Optional[float] = None
    r_tol: float = 1e-3
    profile_tol: float = 1e-2
    decay_tol: float = 1e-6

    def __post_init__(self):
        kind = RGKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.L > 1:
            raise ValueError(f"the RG scale must satisfy L > 1, got {self.L}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        d = self.d
        sob = self.sobolev
        if sob is None:
            extra = 3 if kind is RGKind.BIHARMONIC_V else 1
            sob = WeightedSobolevSpec(int(math.floor(d / 2 + extra)) + 1, d / 2 + 1.5)
            object.__setattr__(self, "sobolev", sob)
        need_m = d / 2 + (3 if kind is RGKind.BIHARMONIC_V else 1)
        if not sob.m > need_m:
            raise ValueError(f"{kind.value} needs m > {need_m:g} for the weighted Sobolev norm, got m={sob.m}")
        if not sob.r > d / 2 + 1:
            raise ValueError(f"{kind.value} needs r > {d / 2 + 1:g} for the weighted Sobolev norm, got r={sob.r}")
        if self.base_point is None:
            e = [0.0] * self.m
            e[0] = 1.0
            object.__setattr__(self, "base_point", tuple(e))
        if self.inner_snapshots < 1:
            raise ValueError("inner_snapshots must be at least 1")

    @property
    def components(self) -> int:
        return self.m * (1 + self.d) if self.kind is RGKind.HEAT_W else self.m

    @property
    def default_ratio_bound(self) -> float:
        if self.ratio_bound is not None:
            return self.ratio_bound
        e = self.d - 1 if self.kind is RGKind.HEAT_W else self.d
        return 1.5 * self.L ** (-e)

    def prefactors(self, n: int) -> tuple:
        """Nonlinear prefactors ``(lam1, lam2)`` of renormalised step ``n``."""
        if self.linear:
            return (0.0, 0.0)
        L, d = self.L, self.d
        if self.kind is RGKind.HEAT_V:
            return (L ** (-n * d), L ** (-n * d))
        if self.kind is RGKind.HEAT_W:
            return (L ** (-n * (d - 1)), L ** (-n * (d - 1)))
        return (L ** (-n * d), L ** (-2 * n * d))

    def problem(self, n: int) -> FlowProblem:
        return FlowProblem(self.kind.flow_kind, m=self.m, base_point=self.base_point, rg_prefactors=self.prefactors(n))

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "d": self.d,
            "m": self.m,
            "L": self.L,
            "n_steps": self.n_steps,
            "sobolev": {"m": self.sobolev.m, "r": self.sobolev.r},
            "dt": self.dt,
            "inner_snapshots": self.inner_snapshots,
            "base_point": list(self.base_point),
            "linear": self.linear,
            "ratio_bound": self.default_ratio_bound,
        }


@dataclass(frozen=True)
class RGState:
    n: int
    V: np.ndarray
    rho: Field
    r: float
    R: float = float("nan")


def gaussian_profile(grid: Grid) -> Field:
    """Unit-mass Gaussian ``(4 pi)^(-d/2) exp(-|xi|^2 / 4)``, the heat kernel at time one."""
    return Field(grid, (4.0 * np.pi) ** (-grid.d / 2.0) * np.exp(-grid.radius2 / 4.0), "psi")


def biharmonic_profile(grid: Grid, normalize: bool = True) -> Field:
    """Inverse Fourier transform of ``exp(-|k|^4)``.

    Convention ``F^-1 g(x) = (2 pi)^-d int exp(i k.x) g(k) dk``.  With
    ``normalize`` the result is divided by its mass (which is exactly one in
    the continuum; on the grid it is one up to rounding).
    """
    spec = np.exp(-grid.rk2**2)
    # the grid origin sits at index n/2; shift the phase so the profile is centred there
    phase = 1.0
    for ax in range(grid.d):
        idx = np.arange(grid.rk2.shape[ax])
        shape = [1] * grid.d
        shape[ax] = -1
        phase = phase * ((-1.0) ** idx).reshape(shape)
    vals = grid.ifft((spec * phase)[None])[0] / grid.cell_volume
    f = Field(grid, vals, "phi")
    if normalize:
        f = Field(grid, vals / float(integrate(f)[0]), "phi")
    return f


def _profile(config: RGConfig, grid: Grid) -> Field:
    if config.kind is RGKind.BIHARMONIC_V:
        return biharmonic_profile(grid)
    return gaussian_profile(grid)


def split(f: Field, profile: Field) -> tuple[np.ndarray, Field]:
    """``V = int f`` and the remainder ``f - V * profile``; mean-zero when ``profile`` has unit mass."""
    V = integrate(f)
    rho = f.values - V.reshape((-1,) + (1,) * f.grid.d) * profile.values[0]
    return V, Field(f.grid, rho, "rho")


def _decay_check(f: Field, tol: float, what: str):
    ratio = boundary_ratio(f)
    if ratio > tol:
        raise RGDivergence(
            f"{what}: boundary tails reached {ratio:.2e} of the maximum (> {tol:g}); "
            "the renormalised profile no longer fits the box"
        )


def initial_state(config: RGConfig, v0: Field) -> RGState:
    if v0.m != config.components:
        raise ValueError(f"{config.kind.value} state needs {config.components} components, got {v0.m}")
    V, rho = split(v0, _profile(config, v0.grid))
    return RGState(1, V, rho, weighted_sobolev_norm(rho, config.sobolev))


def _rescale_state(config: RGConfig, f: Field) -> Field:
    L, d = config.L, config.d
    if config.kind is RGKind.HEAT_W:
        m = config.m
        v = rescale(Field(f.grid, f.values[:m]), L, d - 1)
        w = rescale(Field(f.grid, f.values[m:]), L, d)
        return Field(f.grid, np.concatenate([v.values, w.values]), "v_n(L^-2)")
    # the biharmonic time scale L^4 per step pairs with the spatial factor L
    return rescale(f, L, d, 1)


def rg_step(config: RGConfig, state: RGState) -> tuple[RGState, Trajectory]:
    """One rescale-evolve-project cycle; returns the next state and the inner trajectory."""
    grid = state.rho.grid
    profile = _profile(config, grid)
    v_prev = Field(grid, state.rho.values + state.V.reshape((-1,) + (1,) * grid.d) * profile.values[0])
    _decay_check(v_prev, config.decay_tol, f"step {state.n}")
    start = _rescale_state(config, v_prev)
    span = 1.0 - config.L ** (-config.kind.time_power)
    k = config.inner_snapshots
    snaps = tuple(span * (i + 1) / k for i in range(k))
    stepper = StepperConfig(dt=min(config.dt, span), t_end=span, snapshot_times=snaps)
    traj = evolve(config.problem(state.n), start, stepper)
    R = max(weighted_sobolev_norm(f, config.sobolev, tol=1.0) for f in traj.fields)
    final = traj.fields[-1]
    V, rho = split(final, profile)
    r = weighted_sobolev_norm(rho, config.sobolev, tol=1.0)
    mean = float(np.abs(integrate(rho)).max())
    if mean > 1e-6 * max(float(np.abs(V).sum()) + r, 1e-300):
        raise RuntimeError(f"projection left mass {mean:.3e} in the remainder")
    return RGState(state.n + 1, V, rho, r, R), traj


@dataclass
class RGReport:
    config: RGConfig
    V: list = field(default_factory=list)
    dV: list = field(default_factory=list)
    r: list = field(default_factory=list)
    R: list = field(default_factory=list)
    V_lim: Optional[np.ndarray] = None
    dV_ratio: float = float("nan")
    r_ratio: float = float("nan")
    profile_error: float = float("nan")
    lem7n_C2: float = float("nan")
    lem7n_spread: float = float("nan")
    lem7n_holds: bool = False
    verdicts: dict = field(default_factory=dict)
    aborted: Optional[str] = None
    trajectory: Optional[Trajectory] = None

    @property
    def W_lim(self):
        """HeatW only: the limiting masses of the gradient components as an ``m x d`` matrix."""
        if self.config.kind is not RGKind.HEAT_W or self.V_lim is None:
            return None
        return np.asarray(self.V_lim[self.config.m :]).reshape(self.config.m, self.config.d)

    def to_dict(self) -> dict:
        return {
            "config": self.config.describe(),
            "V": [list(map(float, v)) for v in self.V],
            "dV": list(map(float, self.dV)),
            "r": list(map(float, self.r)),
            "R": list(map(float, self.R)),
            "V_lim": None if self.V_lim is None else list(map(float, self.V_lim)),
            "dV_ratio": self.dV_ratio,
            "r_ratio": self.r_ratio,
            "profile_error": self.profile_error,
            "lem7n": {"C2": self.lem7n_C2, "spread": self.lem7n_spread, "holds": self.lem7n_holds},
            "verdicts": dict(self.verdicts),
            "aborted": self.aborted,
        }

    def csv_rows(self) -> list:
        """Header plus one row per step ``n``."""
        m = len(self.V[0]) if self.V else 0
        header = ["n"] + [f"V_{i}" for i in range(m)] + ["dV", "r", "R"]
        rows = [header]
        for i, v in enumerate(self.V):
            rows.append(
                [i + 1]
                + [float(x) for x in v]
                + [
                    self.dV[i - 1] if i >= 1 else float("nan"),
                    self.r[i],
                    self.R[i] if i < len(self.R) else float("nan"),
                ]
            )
        return rows


def _geometric_ratio(seq) -> float:
    """Fitted ratio of a positive geometric-looking sequence (``nan`` if undefined)."""
    vals = np.asarray(seq, dtype=float)
    keep = vals > 1e-300
    if keep.sum() < 2:
        return float("nan")
    idx = np.nonzero(keep)[0]
    slope, _, _ = fit_loglog(np.exp(idx.astype(float)), vals[keep])
    return float(np.exp(slope))


def run_rg(config: RGConfig, v0_at_tau1: Field, keep_trajectory: bool = True) -> RGReport:
    """Iterate :func:`rg_step` and summarise convergence.

    Verdicts: ``V_cauchy`` (the increments ``|V_{n+1} - V_n|`` shrink with a
    fitted ratio below the bound, or vanish), ``r_small`` (remainders decay
    and end below ``r_tol`` times the initial size) and ``profile_match``
    (the last renormalised field is ``V_lim * profile`` within
    ``profile_tol`` relative in the weighted norm).
    """
    if config.kind is RGKind.HEAT_W and config.d == 1:
        raise ValueError(
            "HeatW needs d > 1: its nonlinear prefactor L^(-n(d-1)) equals 1 when d = 1, "
            "so the nonlinearity is not irrelevant and the iteration has no reason to converge"
        )
    grid = v0_at_tau1.grid
    if config.d != grid.d:
        raise ValueError(f"config has d={config.d} but the field lives on a d={grid.d} grid")
    size0 = weighted_sobolev_norm(v0_at_tau1, config.sobolev)
    if size0 > config.delta:
        raise ValueError(f"initial weighted norm {size0:.4g} exceeds the smallness bound delta = {config.delta:g}")
    profile = _profile(config, grid)
    state = initial_state(config, v0_at_tau1)
    rep = RGReport(config)
    rep.V.append(state.V)
    rep.r.append(state.r)
    sim = Trajectory(FlowProblem(config.kind.flow_kind, m=config.m, base_point=config.base_point), similarity=True)
    sim.times.append(1.0)
    sim.fields.append(v0_at_tau1)
    size_in = float(np.abs(state.V).sum()) + state.r
    R1 = None
    tp = config.kind.time_power
    for _ in range(config.n_steps):
        try:
            new, traj = rg_step(config, state)
        except Exception as exc:  # partial report, then re-raise for divergence-type failures only
            rep.aborted = f"step {state.n}: {exc}"
            break
        rep.R.append(new.R)
        rep.V.append(new.V)
        rep.dV.append(float(np.linalg.norm(new.V - state.V)))
        rep.r.append(new.r)
        sim.times.append(config.L ** (tp * state.n))
        sim.fields.append(traj.fields[-1])
        R1 = new.R if R1 is None else R1
        size = float(np.abs(new.V).sum()) + new.r
        if size > 10.0 * size_in or new.R > 10.0 * R1:
            rep.aborted = f"step {state.n}: divergence (|V|+r = {size:.3e}, R = {new.R:.3e})"
            state = new
            break
        state = new
    _summarise(rep, config, profile, state)
    if keep_trajectory:
        rep.trajectory = sim
    return rep


def _summarise(rep: RGReport, config: RGConfig, profile: Field, state: RGState):
    dV = np.asarray(rep.dV)
    scale = float(np.abs(rep.V[0]).sum()) + rep.r[0]
    tiny = 1e-12 * max(scale, 1e-300)
    rep.dV_ratio = _geometric_ratio(dV[1:] if len(dV) > 2 else dV)
    if len(dV) and np.all(dV <= tiny):
        V_cauchy = True
        rep.V_lim = np.asarray(rep.V[-1])
    else:
        ratio = rep.dV_ratio
        V_cauchy = bool(np.isfinite(ratio) and ratio <= config.default_ratio_bound)
        tail = dV[-1] * ratio / (1.0 - ratio) if np.isfinite(ratio) and ratio < 1 else 0.0
        step = np.asarray(rep.V[-1]) - np.asarray(rep.V[-2]) if len(rep.V) > 1 else 0.0
        direction = step / max(np.linalg.norm(step), 1e-300) if np.ndim(step) else 0.0
        rep.V_lim = np.asarray(rep.V[-1]) + tail * direction
    rep.r_ratio = _geometric_ratio(rep.r)
    r_small = bool(rep.r[-1] <= config.r_tol * max(scale, 1e-300) or rep.r[-1] <= tiny)
    resid = Field(
        state.rho.grid,
        state.rho.values + (state.V - rep.V_lim).reshape((-1,) + (1,) * state.rho.grid.d) * profile.values[0],
    )
    denom = weighted_sobolev_norm(
        Field(profile.grid, np.ones((len(rep.V_lim),) + (1,) * profile.grid.d) * profile.values[0]),
        config.sobolev,
        tol=1.0,
    ) * max(float(np.abs(rep.V_lim).max()), 1e-300)
    err = weighted_sobolev_norm(resid, config.sobolev, tol=1.0)
    rep.profile_error = err / denom if denom > 0 else err
    profile_match = bool(rep.profile_error <= config.profile_tol or err <= tiny)
    # lem7n surrogate: R_n <= C2 L^(5/2) (|V_n| + r_n) with one C2 for the whole run
    if rep.R:
        lhs = np.asarray(rep.R)
        rhs = config.L**2.5 * (np.array([np.linalg.norm(v) for v in rep.V[: len(lhs)]]) + np.asarray(rep.r[: len(lhs)]))
        ratios = lhs / np.maximum(rhs, 1e-300)
        rep.lem7n_C2 = float(np.exp(np.mean(np.log(ratios))))
        rep.lem7n_spread = float(ratios.max() / ratios.min())
        rep.lem7n_holds = bool(np.all(lhs <= 1.5 * rep.lem7n_C2 * rhs))
    rep.verdicts = {
        "V_cauchy": V_cauchy and rep.aborted is None,
        "r_small": r_small and rep.aborted is None,
        "profile_match": profile_match and rep.aborted is None,
    }


def theorem41_direct_check(
    traj: Trajectory,
    V_lim,
    spec: WeightedSobolevSpec,
    config: Optional[RGConfig] = None,
    t_offset: float = 1.0,
) -> list:
    """Weighted-norm distance of the heat-renormalised solution from ``V_lim`` times the Gaussian.

    For ordinary trajectories the snapshot at flow time ``s`` is read as the
    solution at ``t = s + t_offset`` and renormalised as
    ``t^(d/2) v(xi sqrt(t), t)``; similarity trajectories (from :func:`run_rg`)
    are already renormalised and their times are used as given.  ``V_lim`` is
    a mass, so the Gaussian ``exp(-|xi|^2/4)`` enters with coefficient
    ``V_lim (4 pi)^(-d/2)``.  Returns ``(t, error, (1+t)^(-d/2))`` triples.
    """
    if config is not None and config.sobolev != spec:
        raise ValueError(f"weighted Sobolev spec {spec} does not match the RG configuration {config.sobolev}")
    V = np.atleast_1d(np.asarray(V_lim, dtype=float))
    out = []
    for s, f in zip(traj.times, traj.fields):
        grid = f.grid
        d = grid.d
        if V.shape[0] != f.m:
            raise ValueError(f"V_lim has {V.shape[0]} entries for a {f.m}-component field")
        t = s if traj.similarity else s + t_offset
        if t <= 0:
            continue
        if traj.similarity or abs(t - 1.0) < 1e-14:
            ren = f
        else:
            if t < 1.0:
                continue
            ren = rescale(f, math.sqrt(t), d)
        target = V.reshape((-1,) + (1,) * d) * np.exp(-grid.radius2 / 4.0) * (4.0 * np.pi) ** (-d / 2.0)
        err = weighted_sobolev_norm(Field(grid, ren.values - target), spec, tol=1.0)
        out.append((float(t), err, (1.0 + t) ** (-d / 2.0)))
    return out
