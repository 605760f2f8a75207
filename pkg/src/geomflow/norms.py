"""Estimators for the function-space quantities: Besov norms through heat and
biharmonic extensions, the Carleson (BMO) quantity, the X and X_b solution
norms, operator-norm decay probes for the two semigroups and the Beta integral.

Every ``sup_{t>0}`` is taken over a finite dyadic set of times, so reported
values are lower bounds of the continuous quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from . import kernels
from .flows import Trajectory
from .spectral import (
    BoundaryDecayError,
    Field,
    Grid,
    SemigroupKind,
    boundary_ratio,
    derivative_symbol,
    lp_norm,
    make_grid,
    semigroup_multiplier,
)

__all__ = [
    "DyadicRange",
    "NormReport",
    "ProbeResult",
    "besov_norm",
    "besov_norm_biharmonic",
    "besov_norm_negative",
    "carleson_bmo",
    "x_norm",
    "xb_norm",
    "kernel_exponent_probe",
    "kernel_exponent",
    "beta_integral",
    "embedding_corpus",
    "fit_loglog",
]


@dataclass(frozen=True)
class DyadicRange:
    """Times ``base**j`` for ``j_min <= j <= j_max``."""

    j_min: int
    j_max: int
    base: float = 2.0

    def __post_init__(self):
        if not self.base > 1:
            raise ValueError("base must exceed 1")
        if self.j_max <= self.j_min:
            raise ValueError("j_min must be smaller than j_max")
        if self.j_max - self.j_min + 1 < 16:
            raise ValueError("a dyadic range needs at least 16 samples")

    @property
    def samples(self) -> np.ndarray:
        return self.base ** np.arange(self.j_min, self.j_max + 1, dtype=float)

    @classmethod
    def spanning(cls, t_min: float, t_max: float, per_octave: int = 4) -> "DyadicRange":
        """Range with ``per_octave`` samples per factor two covering ``[t_min, t_max]``."""
        base = 2.0 ** (1.0 / per_octave)
        j0 = math.floor(math.log(t_min, base) + 1e-9)
        j1 = math.ceil(math.log(t_max, base) - 1e-9)
        j1 = max(j1, j0 + 15)
        return cls(j0, j1, base)


@dataclass
class NormReport:
    """Outcome of a discrete-sup estimator.

    ``per_sample`` rows are ``(t, integrand, *extra)`` with column names in
    ``columns``.  For Besov-type estimators ``value`` is the largest
    integrand; the X-type norms add a separate Carleson term listed in
    ``components``.
    """

    value: float
    argmax_t: float
    per_sample: list
    columns: tuple = ("t", "integrand")
    components: dict = field(default_factory=dict)
    name: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "argmax_t": self.argmax_t,
            "columns": list(self.columns),
            "per_sample": [list(map(float, row)) for row in self.per_sample],
            "components": dict(self.components),
        }


def _require_decay(f: Field, tol: float = 1e-6, modulo_constant: bool = False):
    """Reject fields that are not negligible at the box edge.

    Estimators that only see gradients accept fields tending to a constant
    (e.g. sphere-valued data near a point): the first grid value is
    subtracted before the check.
    """
    if modulo_constant:
        corner = f.values[(slice(None),) + (0,) * f.grid.d]
        f = Field(f.grid, f.values - corner.reshape((-1,) + (1,) * f.grid.d), f.label)
    ratio = boundary_ratio(f)
    if ratio > tol:
        raise BoundaryDecayError(
            f"field {f.label!r} is not decayed at the box boundary "
            f"(boundary/max = {ratio:.2e} > {tol:g}); enlarge the box"
        )


def _tensor_derivatives(grid: Grid, spec: np.ndarray, order: int) -> np.ndarray:
    """Pointwise magnitude of the full order-``order`` derivative tensor."""
    if order == 0:
        return np.sqrt(np.sum(grid.ifft(spec) ** 2, axis=0))
    acc = 0.0
    for idx in np.ndindex(*([grid.d] * order)):
        sym = 1.0
        for k in idx:
            sym = sym * derivative_symbol(grid, k, 1)
        acc = acc + np.sum(grid.ifft(spec * sym) ** 2, axis=0)
    return np.sqrt(acc)


def _report(name, rows, columns=("t", "integrand")) -> NormReport:
    vals = np.array([r[1] for r in rows])
    i = int(np.argmax(vals))
    return NormReport(float(vals[i]), float(rows[i][0]), rows, columns, name=name)


def besov_norm(v0: Field, p: float, trange: DyadicRange) -> NormReport:
    """``sup_t t^(1/2 - d/(2p)) || grad G(t) v0 ||_p`` over the dyadic times."""
    grid = v0.grid
    d = grid.d
    if not d < p < np.inf:
        raise ValueError(f"the Besov estimator needs d < p < infinity (d={d}, p={p})")
    _require_decay(v0, modulo_constant=True)
    spec = grid.fft(v0.values)
    expo = 0.5 - d / (2.0 * p)
    rows = []
    for t in trange.samples:
        mag = _tensor_derivatives(grid, spec * semigroup_multiplier(grid, t), 1)
        rows.append((float(t), t**expo * lp_norm(mag, p, grid)))
    return _report("besov", rows)


def besov_norm_negative(v0: Field, s: float, p: float, trange: DyadicRange) -> NormReport:
    """Negative-regularity norm ``sup_t t^(-s/2) || G(t) v0 ||_p`` (``s < 0``).

    This is the data norm of the semilinear equation, where the regularity is
    ``s = d/p - 2/(q-1)``.
    """
    if not s < 0:
        raise ValueError(f"the caloric characterisation without derivatives needs s < 0, got {s}")
    grid = v0.grid
    _require_decay(v0)
    spec = grid.fft(v0.values)
    rows = []
    for t in trange.samples:
        u = grid.ifft(spec * semigroup_multiplier(grid, t))
        rows.append((float(t), t ** (-s / 2.0) * lp_norm(np.sqrt(np.sum(u**2, axis=0)), p, grid)))
    return _report("besov_negative", rows)


def besov_norm_biharmonic(v0: Field, p: float, trange: DyadicRange) -> NormReport:
    """Biharmonic characterisation: first- plus second-derivative terms."""
    grid = v0.grid
    d = grid.d
    if not d < p < np.inf:
        raise ValueError(f"the Besov estimator needs d < p < infinity (d={d}, p={p})")
    if p < 2:
        raise ValueError("the second-derivative term needs p/2 >= 1")
    _require_decay(v0, modulo_constant=True)
    spec = grid.fft(v0.values)
    e1 = 0.25 - d / (4.0 * p)
    e2 = 0.5 - d / (2.0 * p)
    rows = []
    for t in trange.samples:
        s = spec * semigroup_multiplier(grid, t, SemigroupKind.BIHARMONIC)
        a = t**e1 * lp_norm(_tensor_derivatives(grid, s, 1), p, grid)
        b = t**e2 * lp_norm(_tensor_derivatives(grid, s, 2), p / 2.0, grid)
        rows.append((float(t), a + b, a, b))
    return _report("besov_biharmonic", rows, ("t", "integrand", "first", "second"))


# ---------------------------------------------------------------------------
# ball geometry shared by the Carleson-type terms


class _Balls:
    """Periodic balls around a lattice of centres, sorted for cumulative sums."""

    def __init__(self, grid: Grid, per_axis: int, radii: np.ndarray):
        self.grid = grid
        n = grid.n
        step = max(n // per_axis, 1)
        # index 0 is the box corner and n/2 the origin, so centred data sits on a centre
        idx = np.arange(0, n, step)[:per_axis]
        self.centres = list(np.ndindex(*([len(idx)] * grid.d)))
        self.centre_index = [tuple(idx[i] for i in c) for c in self.centres]
        # minimum-image distances from the origin index, reused by shifting
        off = np.minimum(np.arange(n), n - np.arange(n)) * grid.spacing
        dist2 = sum(
            np.reshape(off**2, [n if a == ax else 1 for a in range(grid.d)]) for ax in range(grid.d)
        )
        flat = dist2.ravel()
        base_order = np.argsort(flat, kind="stable")
        sorted_d2 = flat[base_order]
        self.radii = np.asarray(radii, dtype=float)
        cuts = np.searchsorted(sorted_d2, self.radii**2 * (1 + 1e-12), side="right")
        base_multi = np.unravel_index(base_order, grid.shape)
        orders = []
        for ci in self.centre_index:
            shifted = tuple((bm + c) % n for bm, c in zip(base_multi, ci))
            orders.append(np.ravel_multi_index(shifted, grid.shape))
        self.order = np.ascontiguousarray(orders, dtype=np.int64)
        self.cuts = np.ascontiguousarray(np.tile(cuts, (len(orders), 1)), dtype=np.int64)

    def sums(self, density: np.ndarray) -> np.ndarray:
        """Integrals of ``density`` over every (centre, radius) ball: ``(C, R)``."""
        return kernels.ball_sums(density.ravel(), self.order, self.cuts) * self.grid.cell_volume


def _default_centres(d):
    return 16 if d == 1 else 8


def carleson_bmo(u0: Field, x_samples: Optional[int], R_range: DyadicRange, nodes: int = 32) -> NormReport:
    """``sup_{x,R} R^(-d/2) || grad G(t) u0 ||_{L^2(B_R(x) x (0, R^2))}``.

    ``x_samples`` centres per axis are placed on a lattice; balls use the
    periodic (minimum-image) distance.  The time integral uses ``nodes``
    log-spaced points in ``(0, R^2]`` with a trapezoid rule and a constant
    extrapolation on the first sub-interval.
    """
    grid = u0.grid
    d = grid.d
    _require_decay(u0, modulo_constant=True)
    per_axis = x_samples or _default_centres(d)
    radii = R_range.samples
    balls = _Balls(grid, per_axis, radii)
    # Nodes t = R_0^2 q^k with q^3 = base^2, so the node sets of successive
    # radii overlap and each heat extension is computed once.
    sub = 3
    q = R_range.base ** (2.0 / sub)
    spec = grid.fft(u0.values)
    cache = {}

    def ball_integrals(k):
        if k not in cache:
            t = radii[0] ** 2 * q**k
            g2 = _tensor_derivatives(grid, spec * semigroup_multiplier(grid, t), 1) ** 2
            cache[k] = balls.sums(g2)
        return cache[k]

    rows = []
    best = (-1.0, 0.0)
    for j, R in enumerate(radii):
        ks = np.arange(sub * j - nodes + 1, sub * j + 1)
        ts = radii[0] ** 2 * q ** ks.astype(float)
        vals = np.stack([ball_integrals(int(k))[:, j] for k in ks])  # (nodes, C)
        integral = ts[0] * vals[0] + np.trapezoid(vals, ts, axis=0)
        per_centre = R ** (-d / 2.0) * np.sqrt(np.maximum(integral, 0.0))
        v = float(per_centre.max())
        rows.append((float(R**2), v, float(R)))
        if v > best[0]:
            best = (v, float(R**2))
    return NormReport(best[0], best[1], rows, ("t", "integrand", "R"), name="carleson_bmo")


def _difference_fields(traj: Trajectory, u0: Field, kind: SemigroupKind):
    grid = u0.grid
    spec0 = grid.fft(u0.values)
    out = []
    for t, f in zip(traj.times, traj.fields):
        lin = grid.ifft(spec0 * semigroup_multiplier(grid, t, kind)) if t > 0 else u0.values
        out.append(np.asarray(f.values) - lin)
    return out


def _spacetime_ball(times, densities, balls: _Balls, horizon_of_R) -> np.ndarray:
    """``int_0^{min(T_R, t_last)} int_{B_R} density`` by trapezoid over snapshots: ``(C, R)``."""
    sums = np.stack([balls.sums(rho) for rho in densities])  # (T, C, R)
    times = np.asarray(times, dtype=float)
    out = np.zeros(sums.shape[1:])
    for j, R in enumerate(balls.radii):
        T = min(horizon_of_R(R), times[-1])
        sel = times <= T
        ts = times[sel]
        ys = sums[sel, :, j]
        if ts[-1] < T:
            k = np.searchsorted(times, T)
            frac = (T - times[k - 1]) / (times[k] - times[k - 1])
            ts = np.append(ts, T)
            ys = np.vstack([ys, sums[k - 1, :, j] + frac * (sums[k, :, j] - sums[k - 1, :, j])])
        out[:, j] = np.trapezoid(ys, ts, axis=0) if len(ts) > 1 else 0.0
    return out


def _check_traj(traj: Trajectory):
    if len(traj) < 8:
        raise ValueError(f"the X-type norms need at least 8 snapshots, got {len(traj)}")
    positive = [t for t in traj.times if t > 0]
    if not positive or positive[-1] / positive[0] < 100 * (1 - 1e-9):
        raise ValueError("snapshot times must cover at least two decades")


def _default_radii(grid: Grid) -> np.ndarray:
    r = grid.spacing * 2.0 ** np.arange(0, 64)
    return r[r <= grid.half_extent * (1 + 1e-12)]


def x_norm(traj: Trajectory, u0: Field, x_samples: Optional[int] = None, radii=None) -> NormReport:
    """X norm of ``u(t) - G(t) u0`` over the snapshots of ``traj``."""
    _check_traj(traj)
    grid = u0.grid
    d = grid.d
    diffs = _difference_fields(traj, u0, SemigroupKind.HEAT)
    rows = []
    grads2 = []
    for t, w in zip(traj.times, diffs):
        g = _tensor_derivatives(grid, grid.fft(w), 1)
        grads2.append(g**2)
        sup_w = float(np.sqrt(np.sum(w**2, axis=0)).max())
        sup_g = float(g.max())
        rows.append((float(t), sup_w + math.sqrt(t) * sup_g, sup_w, sup_g))
    radii = _default_radii(grid) if radii is None else np.asarray(radii, dtype=float)
    balls = _Balls(grid, x_samples or _default_centres(d), radii)
    st = _spacetime_ball(traj.times, grads2, balls, lambda R: R**2)
    carl = (radii ** (-d / 2.0))[None, :] * np.sqrt(np.maximum(st, 0.0))
    carleson = float(carl.max())
    time_term = max(r[1] for r in rows)
    i = int(np.argmax([r[1] for r in rows]))
    return NormReport(
        time_term + carleson,
        rows[i][0],
        rows,
        ("t", "integrand", "sup", "grad_sup"),
        components={
            "time_term": time_term,
            "carleson_term": carleson,
            "carleson_R": float(radii[int(np.argmax(carl.max(axis=0)))]),
        },
        name="x_norm",
    )


def xb_norm(traj: Trajectory, u0: Field, x_samples: Optional[int] = None, radii=None) -> NormReport:
    """X_b norm of ``u(t) - b(t) u0`` with biharmonic scalings."""
    _check_traj(traj)
    grid = u0.grid
    d = grid.d
    diffs = _difference_fields(traj, u0, SemigroupKind.BIHARMONIC)
    rows = []
    dens1, dens2 = [], []
    for t, w in zip(traj.times, diffs):
        spec = grid.fft(w)
        g1 = _tensor_derivatives(grid, spec, 1)
        g2 = _tensor_derivatives(grid, spec, 2)
        dens1.append(g1**4)
        dens2.append(g2**2)
        sup_w = float(np.sqrt(np.sum(w**2, axis=0)).max())
        a1 = t**0.25 * float(g1.max())
        a2 = t**0.5 * float(g2.max())
        rows.append((float(t), sup_w + a1 + a2, sup_w, a1, a2))
    radii = _default_radii(grid) if radii is None else np.asarray(radii, dtype=float)
    balls = _Balls(grid, x_samples or _default_centres(d), radii)
    st1 = _spacetime_ball(traj.times, dens1, balls, lambda R: R**4)
    st2 = _spacetime_ball(traj.times, dens2, balls, lambda R: R**4)
    c1 = (radii ** (-d / 4.0))[None, :] * np.maximum(st1, 0.0) ** 0.25
    c2 = (radii ** (-d / 2.0))[None, :] * np.sqrt(np.maximum(st2, 0.0))
    carl = c1 + c2
    carleson = float(carl.max())
    time_term = max(r[1] for r in rows)
    i = int(np.argmax([r[1] for r in rows]))
    return NormReport(
        time_term + carleson,
        rows[i][0],
        rows,
        ("t", "integrand", "sup", "i1", "i2"),
        components={
            "time_term": time_term,
            "carleson_term": carleson,
            "carleson_i1": float(c1.max()),
            "carleson_i2": float(c2.max()),
        },
        name="xb_norm",
    )


# ---------------------------------------------------------------------------
# operator-norm decay probes


def kernel_exponent(kind, d: int, sigma: int, r: float, q: float) -> float:
    """Decay exponent of ``|| grad^sigma S(t) ||_{L^r -> L^q}`` (negative)."""
    kind = SemigroupKind.parse(kind)
    inv = (1.0 / r) - (0.0 if q == np.inf else 1.0 / q)
    o = kind.order
    return -(d / o) * inv - sigma / o


@dataclass
class ProbeResult:
    slope: float
    intercept: float
    expected: float
    residual: float
    samples: list


def fit_loglog(ts, values):
    """Least squares of ``log value`` on ``log t``: ``(slope, intercept, rms residual)``."""
    lt = np.log(np.asarray(ts, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    res = lv - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def _probe_grid(kind: SemigroupKind, d: int, t_min: float, t_max: float, spread: float):
    o = kind.order
    w_min = t_min ** (1.0 / o) / spread
    w_max = t_max ** (1.0 / o) * spread
    # heat: width^2 grows like 4t; biharmonic kernel has a slower, oscillating tail
    reach = math.sqrt(w_max**2 + 4.0 * t_max) if o == 2 else w_max + 6.0 * t_max ** 0.25
    half = 7.0 * reach
    h = w_min / 4.0
    n = 1 << max(3, math.ceil(math.log2(2 * half / h)))
    if d > 1:
        n = min(n, 512)
    return make_grid(d, n, half), w_min, w_max


def kernel_exponent_probe(
    kind,
    sigma: int,
    r: float,
    q: float,
    trange: DyadicRange,
    d: int = 1,
    n_probes: int = 10,
    spread: float = 4.0,
) -> ProbeResult:
    """Fit the decay of ``max_f ||grad^sigma S(t) f||_q / ||f||_r`` over a bump family.

    The family is ``exp(-|x|^2 / w^2)`` for ``n_probes`` widths spaced
    geometrically between ``t_min^(1/o) / spread`` and ``t_max^(1/o) * spread``
    (``o`` = 2 for heat, 4 for biharmonic); it is scale covariant, so the
    envelope over widths follows the operator-norm power law.
    """
    kind = SemigroupKind.parse(kind)
    if not (1 <= r <= q):
        raise ValueError(f"need 1 <= r <= q (Young's inequality direction), got r={r}, q={q}")
    ts = trange.samples
    grid, w_min, w_max = _probe_grid(kind, d, ts[0], ts[-1], spread)
    widths = np.geomspace(w_min, w_max, n_probes)
    best = np.zeros(len(ts))
    for w in widths:
        f = Field(grid, np.exp(-grid.radius2 / w**2))
        fr = lp_norm(f, r)
        spec = grid.fft(f.values)
        for i, t in enumerate(ts):
            mag = _tensor_derivatives(grid, spec * semigroup_multiplier(grid, t, kind), sigma)
            best[i] = max(best[i], lp_norm(mag, q, grid) / fr)
    slope, intercept, res = fit_loglog(ts, best)
    return ProbeResult(slope, intercept, kernel_exponent(kind, d, sigma, r, q), res, list(zip(ts, best)))


# ---------------------------------------------------------------------------


def _gauss_legendre(n=64):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def beta_integral(alpha: float, beta: float, t: float, nodes: int = 64) -> tuple[float, float]:
    """``int_0^t (t - s)^(-alpha) s^(-beta) ds`` and its Beta-function value.

    The integral is split at ``t/2``; on each half the substitution
    ``s = c * y^(1/(1-beta))`` (resp. the mirrored one) removes the endpoint
    singularity and Gauss-Legendre does the rest.
    """
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError(f"need 0 < alpha, beta < 1, got alpha={alpha}, beta={beta}")
    if not t > 0:
        raise ValueError("t must be positive")
    y, w = _gauss_legendre(nodes)
    half = 0.5 * t

    def piece(a_sing, b_reg):
        # int_0^half u^(-a_sing) (t - u)^(-b_reg) du with u = half * y^(1/(1-a_sing))
        e = 1.0 / (1.0 - a_sing)
        u = half * y**e
        jac = half ** (1.0 - a_sing) * e
        return float(np.sum(w * jac * (t - u) ** (-b_reg)))

    numeric = piece(beta, alpha) + piece(alpha, beta)
    reference = float(special.beta(1.0 - beta, 1.0 - alpha)) * t ** (1.0 - alpha - beta)
    return numeric, reference


def embedding_corpus(grid: Grid) -> dict:
    """Five localised scalar test functions used to order the Besov and BMO estimators."""
    r2 = grid.radius2
    x0 = grid.coords[0]
    return {
        "gauss_narrow": Field(grid, np.exp(-r2 / 0.5), "gauss_narrow"),
        "gauss_unit": Field(grid, np.exp(-r2), "gauss_unit"),
        "gauss_wide": Field(grid, np.exp(-r2 / 4.0), "gauss_wide"),
        "gauss_sine": Field(grid, np.exp(-r2 / 2.0) * np.sin(2.0 * x0), "gauss_sine"),
        "gauss_difference": Field(grid, np.exp(-r2) - 0.5 * np.exp(-r2 / 4.0), "gauss_difference"),
    }
