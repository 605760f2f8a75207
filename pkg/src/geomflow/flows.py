"""Right-hand sides and time integration for the geometric and semilinear flows.

All flows share the form ``u_t = -Lu + N(u)`` where ``L`` is ``-Delta`` or
``Delta^2``.  The linear part is integrated exactly (integrating factor) and
the nonlinear part with classical RK4 in the transformed variables.

Sphere geometry uses ``pi(y) = y / |y|``; ``A(y)(a, b) = -D^2 pi(y)(a, b)`` is
evaluated from its closed form off the sphere too, so deviation equations make
sense in the whole tubular neighbourhood.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .spectral import Field, Grid, SemigroupKind, lp_norm, semigroup_multiplier, derivative_symbol

__all__ = [
    "FlowKind",
    "FlowProblem",
    "StepperConfig",
    "Trajectory",
    "ConstraintError",
    "NumericalError",
    "hmf_rhs",
    "second_fundamental_form_sphere",
    "sff_derivative_sphere",
    "v_rhs",
    "w_rhs",
    "bihmf_rhs",
    "biharmonic_terms",
    "bih_v_rhs",
    "bih_bracket",
    "semilinear_rhs",
    "nonlinear_term",
    "step",
    "evolve",
    "stack_vw",
    "split_vw",
]

SPHERE_TOL = 1e-3


class ConstraintError(ValueError):
    """A field violates the geometric precondition of a right-hand side."""


class NumericalError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, stage=None, time=None):
        super().__init__(message)
        self.stage = stage
        self.time = time


class FlowKind(enum.Enum):
    HARMONIC_MAP_SPHERE = "harmonic_map_sphere"
    DEVIATION_V = "deviation_v"
    GRADIENT_W = "gradient_w"
    BIHARMONIC_MAP_SPHERE = "biharmonic_map_sphere"
    BIHARMONIC_DEVIATION = "biharmonic_deviation"
    SEMILINEAR_POWER = "semilinear_power"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


SPHERE_KINDS = (FlowKind.HARMONIC_MAP_SPHERE, FlowKind.BIHARMONIC_MAP_SPHERE)
DEVIATION_KINDS = (FlowKind.DEVIATION_V, FlowKind.GRADIENT_W, FlowKind.BIHARMONIC_DEVIATION)


def signed_power(q: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(s):
        return np.abs(s) ** (q - 1.0) * s

    f.__name__ = f"signed_power_{q:g}"
    return f


@dataclass(frozen=True)
class FlowProblem:
    """One right-hand side plus its parameters.

    ``rg_prefactors`` ``(lam1, lam2)`` scale the nonlinear terms the way the
    renormalised equations need; ``(1, 1)`` is the physical equation and
    ``(0, 0)`` its linear limit.  ``bilinear_form(y, a, b)`` may replace the
    sphere's second fundamental form in the deviation equation; it receives
    ``y`` of shape ``(m, N)`` and gradients ``a``, ``b`` of shape ``(m, d, N)``
    and must return the contracted form ``sum_k A(y)(a_k, b_k)``.
    """

    kind: FlowKind
    m: int = 1
    base_point: Optional[tuple] = None
    q: Optional[float] = None
    rg_prefactors: tuple = (1.0, 1.0)
    nonlinearity: Optional[Callable] = None
    bilinear_form: Optional[Callable] = None
    dealias_fraction: Optional[float] = None

    def __post_init__(self):
        kind = FlowKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        lam = tuple(float(x) for x in self.rg_prefactors)
        if len(lam) != 2 or not all(0.0 <= x <= 1.0 for x in lam):
            raise ValueError(f"rg_prefactors must be two reals in [0, 1], got {self.rg_prefactors}")
        object.__setattr__(self, "rg_prefactors", lam)
        if kind in DEVIATION_KINDS:
            if self.base_point is None:
                raise ValueError(f"{kind.value} needs a base point")
            p = np.asarray(self.base_point, dtype=float)
            if p.shape != (self.m,):
                raise ValueError(f"base point must have {self.m} entries")
            if abs(np.linalg.norm(p) - 1.0) > 1e-12:
                raise ValueError(f"base point must be a unit vector, |u*| = {np.linalg.norm(p):.6g}")
            object.__setattr__(self, "base_point", tuple(float(x) for x in p))
        if kind is FlowKind.SEMILINEAR_POWER:
            if self.q is None or not self.q > 1:
                raise ValueError(f"semilinear power needs q > 1, got {self.q}")
            if self.m != 1:
                raise ValueError("semilinear power flow is scalar (m = 1)")

    @property
    def semigroup(self) -> SemigroupKind:
        if self.kind in (FlowKind.BIHARMONIC_MAP_SPHERE, FlowKind.BIHARMONIC_DEVIATION):
            return SemigroupKind.BIHARMONIC
        return SemigroupKind.HEAT

    @property
    def default_dealias(self) -> float:
        if self.dealias_fraction is not None:
            return self.dealias_fraction
        # quartic terms need a stronger truncation than the 2/3 rule
        return 0.5 if self.semigroup is SemigroupKind.BIHARMONIC else 2.0 / 3.0

    def state_components(self, d: int) -> int:
        if self.kind is FlowKind.GRADIENT_W:
            return self.m * (1 + d)
        return self.m

    @property
    def f(self) -> Callable:
        if self.nonlinearity is not None:
            return self.nonlinearity
        return signed_power(self.q)

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "m": self.m,
            "base_point": list(self.base_point) if self.base_point else None,
            "q": self.q,
            "rg_prefactors": list(self.rg_prefactors),
            "nonlinearity": getattr(self.nonlinearity, "__name__", None),
            "dealias_fraction": self.default_dealias,
        }


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping controls.

    The step is ``max(dt, dt_relative * t)`` capped at ``dt_max``; with
    ``dt_relative`` unset it is simply ``dt``.  Steps are shortened to land on
    every snapshot time exactly.
    """

    dt: float
    t_end: float
    dealias: bool = True
    scheme: str = "if_rk4"
    sphere_renormalize_every: int = 10
    snapshot_times: tuple = ()
    p_user: float = 4.0
    dt_relative: Optional[float] = None
    dt_max: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.scheme != "if_rk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        snaps = tuple(float(t) for t in self.snapshot_times)
        if not snaps and self.t_end > 0:
            snaps = (float(self.t_end),)
        if any(b <= a for a, b in zip(snaps, snaps[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        if snaps and (snaps[0] <= 0 or snaps[-1] > self.t_end * (1 + 1e-12)):
            raise ValueError("snapshot times must lie in (0, t_end]")
        if self.sphere_renormalize_every < 1:
            raise ValueError("sphere_renormalize_every must be >= 1")
        object.__setattr__(self, "snapshot_times", snaps)

    def step_size(self, t: float) -> float:
        h = self.dt
        if self.dt_relative:
            h = max(h, self.dt_relative * t)
        if self.dt_max:
            h = min(h, self.dt_max)
        return h

    def fingerprint(self) -> dict:
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "dealias": self.dealias,
            "scheme": self.scheme,
            "sphere_renormalize_every": self.sphere_renormalize_every,
            "n_snapshots": len(self.snapshot_times),
            "p_user": self.p_user,
            "dt_relative": self.dt_relative,
            "dt_max": self.dt_max,
        }


@dataclass
class Trajectory:
    problem: FlowProblem
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    similarity: bool = False

    def __post_init__(self):
        if len(self.times) != len(self.fields):
            raise ValueError("one field per time required")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# spectral helpers working on raw arrays


def _spec_grad(grid: Grid, spec: np.ndarray) -> np.ndarray:
    """Physical-space gradient of a spectral array: shape ``(m, d, *grid.shape)``."""
    return np.stack([grid.ifft(spec * derivative_symbol(grid, k, 1)) for k in range(grid.d)], axis=1)


def _flat(a: np.ndarray, lead: int) -> np.ndarray:
    return a.reshape(a.shape[:lead] + (-1,))


def _div(grid: Grid, vec: np.ndarray, mask=None) -> np.ndarray:
    """Divergence over axis 1 of ``(m, d, *shape)`` physical data."""
    out = 0.0
    for k in range(grid.d):
        s = grid.fft(vec[:, k])
        if mask is not None:
            s = s * mask
        out = out + s * derivative_symbol(grid, k, 1)
    return grid.ifft(out)


def _mask(grid: Grid, problem: FlowProblem, dealias: bool):
    return grid.dealias_mask(problem.default_dealias) if dealias else None


def _check_sphere(values: np.ndarray, tol: float = SPHERE_TOL) -> None:
    dev = np.abs(np.sqrt(np.sum(values**2, axis=0)) - 1.0).max()
    if dev > tol:
        raise ConstraintError(f"field is off the sphere: max ||u| - 1| = {dev:.3e} > {tol:g}")


def _check_tube(y: np.ndarray) -> None:
    r = np.sqrt(np.sum(y**2, axis=0))
    dev = np.abs(r - 1.0).max()
    if dev >= 0.5:
        raise ConstraintError(
            f"u* + v leaves the tubular neighbourhood of the sphere: max ||y| - 1| = {dev:.3e}"
        )


# ---------------------------------------------------------------------------
# pointwise geometry


def second_fundamental_form_sphere(y, w1, w2) -> np.ndarray:
    """``-D^2 pi(y)(w1, w2)`` for ``pi(y) = y/|y|``.

    Accepts single vectors of length m or component-first arrays ``(m, ...)``.
    """
    y = np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(y**2, axis=0))
    if np.any(r < 0.5):
        raise ConstraintError(f"|y| = {float(np.min(r)):.3g} < 0.5 is outside the tubular neighbourhood")
    shape = y.shape
    yy = y.reshape(shape[0], -1)
    out = kernels.sphere_sff(
        yy, np.broadcast_to(w1, shape).reshape(yy.shape), np.broadcast_to(w2, shape).reshape(yy.shape)
    )
    return out.reshape(shape)


def sff_derivative_sphere(y, c, w1, w2) -> np.ndarray:
    """Directional derivative of ``A(y)(w1, w2)`` along ``c`` (third derivative of pi)."""
    y = np.asarray(y, dtype=float)
    shape = y.shape
    yy = y.reshape(shape[0], -1)
    args = [np.broadcast_to(v, shape).reshape(yy.shape) for v in (c, w1, w2)]
    return kernels.sphere_sff_deriv(yy, *args).reshape(shape)


# ---------------------------------------------------------------------------
# nonlinear terms (physical-space arrays in, physical-space arrays out)


def _n_harmonic(grid, problem, u, mask):
    spec = grid.fft(u)
    g = _spec_grad(grid, spec)
    return u * np.sum(g**2, axis=(0, 1))


def _contract_form(problem, y, a, b):
    m = y.shape[0]
    yy = _flat(y, 1)
    aa = _flat(a, 2)
    bb = _flat(b, 2)
    if problem.bilinear_form is not None:
        out = problem.bilinear_form(yy, aa, bb)
    else:
        out = kernels.sphere_sff_contract(yy, aa, bb)
    return np.asarray(out).reshape((m,) + y.shape[1:])


def _base(problem, v, grid):
    lam2 = problem.rg_prefactors[1]
    p = np.asarray(problem.base_point).reshape((-1,) + (1,) * grid.d)
    return p + lam2 * v


def _n_deviation(grid, problem, v, mask):
    lam1, _ = problem.rg_prefactors
    if lam1 == 0.0:
        return np.zeros_like(v)
    y = _base(problem, v, grid)
    _check_tube(y)
    g = _spec_grad(grid, grid.fft(v))
    return lam1 * _contract_form(problem, y, g, g)


def _n_gradient(grid, problem, state, mask):
    m, d = problem.m, grid.d
    lam1, lam2 = problem.rg_prefactors
    v = state[:m]
    w = state[m:].reshape((m, d) + grid.shape)
    out = np.zeros_like(state)
    if lam1 == 0.0:
        return out
    y = _base(problem, v, grid)
    _check_tube(y)
    out[:m] = lam1 * _contract_form(problem, y, w, w)
    # dw[:, k, j] = d_j w_k
    dw = np.stack([_spec_grad(grid, grid.fft(w[:, k])) for k in range(d)], axis=1)
    yy = _flat(y, 1)
    ww = _flat(w, 2)
    for j in range(d):
        term = 2.0 * kernels.sphere_sff_contract(yy, ww, _flat(dw[:, :, j], 2))
        if lam2:
            term = term + lam2 * kernels.sphere_sff_deriv_contract(yy, _flat(w[:, j], 1), ww, ww)
        out[m:].reshape((m, d) + grid.shape)[:, j] = lam1 * term.reshape((m,) + grid.shape)
    return out


def _bih_pieces(grid, u, mask):
    """|grad u|^2, its gradient, <Delta u, grad u>, Delta u and grad u."""
    spec = grid.fft(u)
    g = _spec_grad(grid, spec)
    lap = grid.ifft(-grid.rk2 * spec)
    G = np.sum(g**2, axis=(0, 1))
    Gs = grid.fft(G)
    if mask is not None:
        Gs = Gs * mask
    gradG = np.stack([grid.ifft(Gs * derivative_symbol(grid, k, 1)) for k in range(grid.d)])
    P = np.einsum("a...,ak...->k...", lap, g)
    return G, gradG, P, lap, g


def _bih_f1_f2(grid, u, mask):
    _, gradG, P, lap, g = _bih_pieces(grid, u, mask)
    V = gradG + 2.0 * P  # spatial vector field
    f1 = u * np.sum(lap**2, axis=0) + np.einsum("ak...,k...->a...", g, V)
    f2 = -u[:, None] * V[None]
    return f1, f2


def _n_biharmonic(grid, problem, u, mask):
    f1, f2 = _bih_f1_f2(grid, u, mask)
    return f1 + _div(grid, f2, mask)


def biharmonic_terms(u: Field) -> tuple[np.ndarray, np.ndarray]:
    """The two parts of the biharmonic map nonlinearity, ``N = f1 + div f2``.

    Returns ``f1`` with shape ``(m, *grid)`` and ``f2`` with shape ``(m, d, *grid)``.
    """
    return _bih_f1_f2(u.grid, np.asarray(u.values), None)


def bih_bracket_array(grid, v, mask=None):
    """``-(Delta (grad v, grad v) + div (Delta v, grad v) + (grad Delta v, grad v))``."""
    spec = grid.fft(v)
    g = _spec_grad(grid, spec)
    lap_spec = -grid.rk2 * spec
    lap = grid.ifft(lap_spec)
    G = np.sum(g**2, axis=(0, 1))
    Gs = grid.fft(G)
    if mask is not None:
        Gs = Gs * mask
    lapG = grid.ifft(-grid.rk2 * Gs)
    P = np.einsum("a...,ak...->k...", lap, g)
    divP = _div(grid, P[None], mask)[0]
    glap = _spec_grad(grid, lap_spec)
    Q = np.sum(glap * g, axis=(0, 1))
    return -(lapG + divP + Q)


def _n_bih_deviation(grid, problem, v, mask):
    lam1, lam2 = problem.rg_prefactors
    if lam1 == 0.0 and lam2 == 0.0:
        return np.zeros_like(v)
    B = bih_bracket_array(grid, v, mask)
    e1 = np.asarray(problem.base_point).reshape((-1,) + (1,) * grid.d)
    return lam1 * B[None] * e1 + lam2 * B[None] * v


def _n_semilinear(grid, problem, u, mask):
    fu = np.asarray(problem.f(u), dtype=float)
    bound = np.abs(u) ** problem.q
    excess = np.abs(fu) - bound * (1.0 + 1e-12) - 1e-300
    if np.any(excess > 0):
        i = np.unravel_index(np.argmax(excess), excess.shape)
        raise ConstraintError(
            f"nonlinearity violates |f(s)| <= |s|^q at s = {u[i]:.6g}: |f(s)| = {abs(fu[i]):.6g}"
        )
    return fu


_NONLINEAR = {
    FlowKind.HARMONIC_MAP_SPHERE: _n_harmonic,
    FlowKind.DEVIATION_V: _n_deviation,
    FlowKind.GRADIENT_W: _n_gradient,
    FlowKind.BIHARMONIC_MAP_SPHERE: _n_biharmonic,
    FlowKind.BIHARMONIC_DEVIATION: _n_bih_deviation,
    FlowKind.SEMILINEAR_POWER: _n_semilinear,
}


def nonlinear_term(problem: FlowProblem, f: Field, dealias: bool = False) -> Field:
    """The nonlinear part ``N(f)`` of the right-hand side."""
    grid = f.grid
    vals = _NONLINEAR[problem.kind](grid, problem, np.asarray(f.values), _mask(grid, problem, dealias))
    return Field(grid, vals, f"N[{f.label}]")


def _linear(grid, values, kind):
    spec = grid.fft(values)
    if kind is SemigroupKind.HEAT:
        return grid.ifft(-grid.rk2 * spec)
    return grid.ifft(-(grid.rk2**2) * spec)


def _rhs(problem, f, dealias=False):
    grid = f.grid
    n = _NONLINEAR[problem.kind](grid, problem, np.asarray(f.values), _mask(grid, problem, dealias))
    return Field(grid, _linear(grid, f.values, problem.semigroup) + n, f.label)


def hmf_rhs(u: Field) -> Field:
    """``Delta u + u |grad u|^2`` for a map into the unit sphere."""
    _check_sphere(u.values)
    return _rhs(FlowProblem(FlowKind.HARMONIC_MAP_SPHERE, m=u.m), u)


def v_rhs(v: Field, problem: FlowProblem) -> Field:
    if problem.kind is not FlowKind.DEVIATION_V:
        raise ValueError("v_rhs needs a DEVIATION_V problem")
    return _rhs(problem, v)


def stack_vw(v: Field, w: Field) -> Field:
    """Pack ``v`` (m components) and ``w`` (m*d components) into one state."""
    return Field(v.grid, np.concatenate([v.values, w.values]), f"({v.label}, {w.label})")


def split_vw(state: Field, m: int) -> tuple[Field, Field]:
    return (
        Field(state.grid, state.values[:m], "v"),
        Field(state.grid, state.values[m:], "w"),
    )


def w_rhs(w: Field, v: Field, problem: FlowProblem) -> Field:
    """Right-hand side of the gradient system for ``w`` given the base deviation ``v``.

    ``w`` carries ``m * d`` components ordered ``alpha * d + k`` like
    :func:`geomflow.spectral.gradient`.
    """
    if problem.kind is not FlowKind.GRADIENT_W:
        raise ValueError("w_rhs needs a GRADIENT_W problem")
    state = stack_vw(v, w)
    full = _rhs(problem, state)
    return Field(w.grid, full.values[problem.m :], f"w_rhs[{w.label}]")


def bihmf_rhs(u: Field) -> Field:
    """``-Delta^2 u + f1[u] + div f2[u]`` for a map into the unit sphere."""
    _check_sphere(u.values)
    return _rhs(FlowProblem(FlowKind.BIHARMONIC_MAP_SPHERE, m=u.m), u)


def bih_bracket(v: Field) -> Field:
    return Field(v.grid, bih_bracket_array(v.grid, np.asarray(v.values))[None], "bracket")


def bih_v_rhs(v: Field, problem: FlowProblem) -> Field:
    if problem.kind is not FlowKind.BIHARMONIC_DEVIATION:
        raise ValueError("bih_v_rhs needs a BIHARMONIC_DEVIATION problem")
    return _rhs(problem, v)


def semilinear_rhs(u: Field, problem: FlowProblem) -> Field:
    if problem.kind is not FlowKind.SEMILINEAR_POWER:
        raise ValueError("semilinear_rhs needs a SEMILINEAR_POWER problem")
    return _rhs(problem, u)


# ---------------------------------------------------------------------------
# time stepping


class _Stepper:
    """Integrating-factor RK4 with cached exponentials for the current step size."""

    def __init__(self, problem: FlowProblem, grid: Grid, dealias: bool):
        self.problem = problem
        self.grid = grid
        self.mask = _mask(grid, problem, dealias)
        self._nl = _NONLINEAR[problem.kind]
        self._h = None

    def _factors(self, h):
        if h != self._h:
            self._E = semigroup_multiplier(self.grid, h, self.problem.semigroup)
            self._E2 = semigroup_multiplier(self.grid, 0.5 * h, self.problem.semigroup)
            self._h = h
        return self._E, self._E2

    def _N(self, spec, stage, t):
        grid = self.grid
        u = grid.ifft(spec)
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite values entering RK stage {stage}", stage=stage, time=t)
        n = grid.fft(self._nl(grid, self.problem, u, self.mask))
        if self.mask is not None:
            n = n * self.mask
        if not np.all(np.isfinite(n)):
            raise NumericalError(f"non-finite nonlinear term in RK stage {stage}", stage=stage, time=t)
        return n

    def advance(self, values: np.ndarray, h: float, t: float = 0.0) -> np.ndarray:
        grid = self.grid
        E, E2 = self._factors(h)
        u = grid.fft(values)
        a = self._N(u, 1, t)
        b = self._N(E2 * (u + 0.5 * h * a), 2, t)
        c = self._N(E2 * u + 0.5 * h * b, 3, t)
        d = self._N(E * u + h * E2 * c, 4, t)
        new = E * u + (h / 6.0) * (E * a + 2.0 * E2 * (b + c) + d)
        out = grid.ifft(new)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite values after RK4 update", stage="update", time=t)
        return out


def step(problem: FlowProblem, f: Field, dt: float, dealias: bool = True) -> Field:
    """One integrating-factor RK4 step of size ``dt``.

    Sphere-valued kinds are projected back to the sphere after the step; use
    :func:`evolve` for the periodic projection schedule.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if f.m != problem.state_components(f.grid.d):
        raise ValueError(f"{problem.kind.value} state needs {problem.state_components(f.grid.d)} components")
    out = _Stepper(problem, f.grid, dealias).advance(np.asarray(f.values), dt)
    if problem.kind in SPHERE_KINDS:
        out = _project(out)
    return Field(f.grid, out, f.label)


def _project(values):
    shape = values.shape
    return kernels.normalize(values.reshape(shape[0], -1)).reshape(shape)


def _constraint_violation(problem, values, grid):
    if problem.kind in SPHERE_KINDS:
        return float(np.abs(np.sqrt(np.sum(values**2, axis=0)) - 1.0).max())
    if problem.kind in DEVIATION_KINDS:
        y = _base(problem, values[: problem.m], grid)
        return float(np.abs(np.sqrt(np.sum(y**2, axis=0)) - 1.0).max())
    return 0.0


def diagnostics(problem: FlowProblem, f: Field, p_user: float = 4.0) -> dict:
    """Norms of the field and its gradient plus constraint violation and mass."""
    grid = f.grid
    g = _spec_grad(grid, grid.fft(f.values))
    gmag = np.sqrt(np.sum(g**2, axis=(0, 1)))
    mass = f.values.sum(axis=tuple(range(1, grid.d + 1))) * grid.cell_volume
    return {
        "l2": lp_norm(f, 2),
        "lp": lp_norm(f, p_user),
        "linf": lp_norm(f, np.inf),
        "grad_l2": lp_norm(gmag, 2, grid),
        "grad_lp": lp_norm(gmag, p_user, grid),
        "grad_linf": float(gmag.max()),
        "constraint_violation": _constraint_violation(problem, f.values, grid),
        "mass": [float(x) for x in mass],
    }


def evolve(
    problem: FlowProblem,
    f0: Field,
    config: StepperConfig,
    callback: Optional[Callable] = None,
) -> Trajectory:
    """Integrate from ``t = 0`` and record ``f0`` plus every snapshot.

    ``callback(t, field)`` is invoked at each snapshot and may raise to abort.
    """
    grid = f0.grid
    if f0.m != problem.state_components(grid.d):
        raise ValueError(f"{problem.kind.value} state needs {problem.state_components(grid.d)} components")
    if problem.kind in SPHERE_KINDS:
        _check_sphere(f0.values)
    traj = Trajectory(problem)
    diag0 = diagnostics(problem, f0, config.p_user)
    diag0["drift"] = 0.0
    traj.times.append(0.0)
    traj.fields.append(f0)
    traj.diagnostics.append(diag0)
    if callback is not None:
        callback(0.0, f0)
    stepper = _Stepper(problem, grid, config.dealias)
    values = np.array(f0.values)
    t = 0.0
    nsteps = 0
    sphere = problem.kind in SPHERE_KINDS
    for target in config.snapshot_times:
        while t < target * (1 - 1e-13):
            h = config.step_size(t)
            remaining = target - t
            if h >= remaining * (1 - 1e-9):
                h = remaining
            elif h > 0.5 * remaining:
                # split the remainder into two equal steps instead of leaving a sliver
                h = 0.5 * remaining
            try:
                values = stepper.advance(values, h, t)
            except NumericalError as exc:
                raise NumericalError(f"{exc} (t = {t:.6g})", stage=exc.stage, time=t) from exc
            except ConstraintError as exc:
                raise ConstraintError(f"{exc} (t = {t:.6g})") from exc
            t = target if h == remaining else t + h
            nsteps += 1
            if sphere and nsteps % config.sphere_renormalize_every == 0:
                values = _project(values)
        drift = _constraint_violation(problem, values, grid) if sphere else 0.0
        if sphere:
            values = _project(values)
        snap = Field(grid, values, f"{f0.label} t={target:g}")
        diag = diagnostics(problem, snap, config.p_user)
        diag["drift"] = drift
        traj.times.append(float(target))
        traj.fields.append(snap)
        traj.diagnostics.append(diag)
        if callback is not None:
            callback(target, snap)
    return traj
