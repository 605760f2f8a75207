"""Named initial-data families.

Sphere-valued data are built with the exponential map of S^{m-1} at a base
point ``P`` applied to a small tangent field, so ``|u0| = 1`` to rounding.
The "critical" families are homogeneous under the parabolic scaling on a wide
range of scales (smoothed at the origin by a short exact heat evolution, cut off far
away by a flat-top envelope ``exp(-(|x|/R)^4)``); they are the data for which
the scale-invariant decay rates are visible over a couple of decades in time.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .spectral import Field, Grid

__all__ = [
    "RECIPES",
    "default_base_point",
    "exp_map",
    "make_data",
    "gaussian",
    "gaussian_geodesic",
    "dipole",
    "torus_mode",
    "critical_hedgehog",
    "critical_power",
    "constant",
]


def default_base_point(m: int) -> np.ndarray:
    """Last coordinate vector ``e_m`` (the "north pole")."""
    p = np.zeros(m)
    p[-1] = 1.0
    return p


def _tangent_frame(P: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at ``P``: shape ``(m-1, m)``."""
    m = P.shape[0]
    q, _ = np.linalg.qr(np.column_stack([P, np.eye(m)]))
    frame = q[:, 1:m].T
    # fix signs so the frame is deterministic and close to the coordinate axes
    for i in range(frame.shape[0]):
        j = int(np.argmax(np.abs(frame[i])))
        if frame[i, j] < 0:
            frame[i] = -frame[i]
    return frame


def exp_map(P, coeffs: np.ndarray) -> np.ndarray:
    """``exp_P(sum_i c_i e_i)`` for tangent coordinates ``coeffs`` of shape ``(m-1, *shape)``."""
    P = np.asarray(P, dtype=float)
    frame = _tangent_frame(P)
    v = np.tensordot(frame.T, coeffs, axes=(1, 0))  # (m, *shape)
    s = np.sqrt(np.sum(v**2, axis=0))
    # sin(s)/s with the removable singularity handled
    sinc = np.sinc(s / np.pi)
    shape = (-1,) + (1,) * (v.ndim - 1)
    return P.reshape(shape) * np.cos(s) + v * sinc


def _envelope(grid: Grid, R):
    if R is None:
        return 1.0
    return np.exp(-((grid.radius2 / R**2) ** 2))


def gaussian(grid: Grid, eps: float, m: int = 1, width: float = 1.0, **_) -> Field:
    """``eps * exp(-|x|^2 / width^2)`` in every component."""
    g = eps * np.exp(-grid.radius2 / width**2)
    return Field(grid, np.repeat(g[None], m, axis=0), "gaussian")


def gaussian_geodesic(grid: Grid, eps: float, m: int = 3, width: float = 1.0, P=None, **_) -> Field:
    """Bump of height ``eps`` along one geodesic through ``P``."""
    P = default_base_point(m) if P is None else np.asarray(P, dtype=float)
    c = np.zeros((m - 1,) + grid.shape)
    c[0] = eps * np.exp(-grid.radius2 / width**2)
    return Field(grid, exp_map(P, c), "gaussian_geodesic")


def dipole(grid: Grid, eps: float, m: int = 1, width: float = 1.0, axis: int = 0, **_) -> Field:
    """Mean-zero ``eps * x_axis * exp(-|x|^2 / width^2)``."""
    g = eps * grid.coords[axis] * np.exp(-grid.radius2 / width**2)
    return Field(grid, np.repeat(g[None], m, axis=0), "dipole")


def torus_mode(grid: Grid, eps: float, m: int = 2, P=None, **_) -> Field:
    """Non-decaying periodic perturbation of a constant map.

    ``m = 2``: ``(cos th, sin th)`` with ``th = eps sin(pi x_1 / Lambda)``.
    ``m >= 3``: tangent coordinates ``eps (sin(pi x_1/Lambda), cos(pi x_d/Lambda), 0, ...)``.
    """
    lam = grid.half_extent
    x1 = grid.coords[0]
    xd = grid.coords[-1]
    if m == 2:
        th = eps * np.sin(np.pi * x1 / lam)
        return Field(grid, np.stack([np.cos(th), np.sin(th)]), "torus_mode")
    P = default_base_point(m) if P is None else np.asarray(P, dtype=float)
    c = np.zeros((m - 1,) + grid.shape)
    c[0] = eps * np.sin(np.pi * x1 / lam)
    c[1] = eps * np.cos(np.pi * xd / lam)
    return Field(grid, exp_map(P, c), "torus_mode")


def critical_hedgehog(grid: Grid, eps: float, m: int = 3, R: float = 60.0, t0: float = 0.1, P=None, **_) -> Field:
    """Degree-zero tangent field ``eps * x / |x|`` (first ``min(d, m-1)`` directions).

    The origin is smoothed by the exact heat evolution for time ``t0``: in two
    dimensions ``G(t0) * (x/|x|) = (x/|x|) sqrt(pi z / 2) exp(-z) (I_0(z) + I_1(z))``,
    ``z = |x|^2 / (8 t0)``.  Beyond ``R`` the field is cut off.
    """
    if grid.d != 2:
        raise ValueError("critical_hedgehog is defined for d = 2")
    P = default_base_point(m) if P is None else np.asarray(P, dtype=float)
    r = np.sqrt(grid.radius2)
    safe = np.where(r > 0, r, 1.0)
    z = grid.radius2 / (8.0 * t0)
    profile = np.sqrt(0.5 * np.pi * z) * (special.i0e(z) + special.i1e(z)) * _envelope(grid, R)
    c = np.zeros((m - 1,) + grid.shape)
    for i in range(min(grid.d, m - 1)):
        c[i] = eps * np.where(r > 0, grid.coords[i] / safe, 0.0) * profile
    return Field(grid, exp_map(P, c), "critical_hedgehog")


def critical_power(grid: Grid, eps: float, m: int = 1, R: float = 60.0, t0: float = 0.1, **_) -> Field:
    """Heat evolution for time ``t0`` of ``eps / |x|`` in two dimensions, cut off beyond ``R``.

    Uses the closed form ``G(t0) * |x|^-1 = sqrt(pi / (4 t0)) exp(-z) I_0(z)``,
    ``z = |x|^2 / (8 t0)``; the data are homogeneous of degree ``-1``, the
    scale-critical degree for the cubic nonlinearity in two dimensions.
    """
    if grid.d != 2:
        raise ValueError("critical_power is defined for d = 2")
    g = eps * np.sqrt(np.pi / (4.0 * t0)) * special.i0e(grid.radius2 / (8.0 * t0)) * _envelope(grid, R)
    return Field(grid, np.repeat(g[None], m, axis=0), "critical_power")


def constant(grid: Grid, eps: float, m: int = 1, P=None, **_) -> Field:
    """Spatially constant field: ``P`` for sphere data when given, else ``eps`` in every component."""
    if P is not None:
        vals = np.asarray(P, dtype=float).reshape((-1,) + (1,) * grid.d)
    else:
        vals = np.full((m,) + (1,) * grid.d, float(eps))
    return Field(grid, np.broadcast_to(vals, (vals.shape[0],) + grid.shape).copy(), "constant")


RECIPES = {
    "gaussian": gaussian,
    "gaussian_geodesic": gaussian_geodesic,
    "dipole": dipole,
    "torus_mode": torus_mode,
    "critical_hedgehog": critical_hedgehog,
    "critical_power": critical_power,
    "constant": constant,
}


def make_data(name: str, grid: Grid, eps: float, **params) -> Field:
    if name not in RECIPES:
        raise ValueError(f"unknown initial-data recipe {name!r}; known: {sorted(RECIPES)}")
    if eps < 0:
        raise ValueError("amplitude eps must be non-negative")
    return RECIPES[name](grid, eps, **params)
