"""Periodic-box discretisation of R^d.

Fields live on the box [-L, L)^d sampled with ``n`` points per axis.  Every
linear operator (semigroups, derivatives, off-grid evaluation) is applied in
Fourier space, so results are exact for band-limited data up to rounding.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "SemigroupKind",
    "WeightedSobolevSpec",
    "BoundaryDecayError",
    "make_grid",
    "apply_semigroup",
    "derivative",
    "gradient",
    "laplacian",
    "lp_norm",
    "weighted_sobolev_norm",
    "rescale",
    "integrate",
    "boundary_ratio",
]


class BoundaryDecayError(ValueError):
    """Raised when a field is not small at the box boundary."""


class SemigroupKind(enum.Enum):
    HEAT = "heat"
    BIHARMONIC = "biharmonic"

    @classmethod
    def parse(cls, value) -> "SemigroupKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())

    @property
    def order(self) -> int:
        """Scaling order: time scales like length**order."""
        return 2 if self is SemigroupKind.HEAT else 4


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-half_extent, half_extent)^d``."""

    d: int
    n: int
    half_extent: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_per_axis must be a power of two >= 8, got {self.n}")
        if not self.half_extent > 0:
            raise ValueError(f"half extent must be positive, got {self.half_extent}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @cached_property
    def x(self) -> np.ndarray:
        """1-D coordinates along any axis."""
        return -self.half_extent + self.spacing * np.arange(self.n)

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode numbers in FFT order (Nyquist mode is negative)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def k(self) -> np.ndarray:
        """1-D wavenumbers ``(pi / half_extent) * m`` in FFT order."""
        return (np.pi / self.half_extent) * self.mode_index

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.d), indexing="ij"))

    @cached_property
    def radius2(self) -> np.ndarray:
        return sum(c * c for c in self.coords)

    # Wavenumber tables for the real-to-complex transform (last axis halved).
    @cached_property
    def rk(self) -> tuple[np.ndarray, ...]:
        ks = []
        for axis in range(self.d):
            if axis == self.d - 1:
                k1 = (np.pi / self.half_extent) * np.arange(self.n // 2 + 1)
            else:
                k1 = self.k
            shape = [1] * self.d
            shape[axis] = k1.size
            ks.append(k1.reshape(shape))
        return tuple(ks)

    @cached_property
    def rk2(self) -> np.ndarray:
        return sum(k * k for k in self.rk)

    @cached_property
    def nyquist_masks(self) -> tuple[np.ndarray, ...]:
        """Per-axis boolean masks (rfft layout) selecting the Nyquist plane."""
        masks = []
        for axis in range(self.d):
            kk = self.rk[axis]
            masks.append(np.abs(np.abs(kk) - np.pi / self.spacing) < 1e-9 * np.pi / self.spacing)
        return tuple(masks)

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        """Keep modes with ``|m_j| < fraction * n / 2`` on every axis (rfft layout)."""
        cutoff = fraction * self.n / 2.0
        keep = np.ones(self.rk2.shape, dtype=bool)
        for kk in self.rk:
            keep = keep & (np.abs(kk) * self.half_extent / np.pi < cutoff)
        return keep

    def fft(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.d, 0))
        return np.fft.rfftn(values, axes=axes)

    def ifft(self, spec: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.d, 0))
        return np.fft.irfftn(spec, s=self.shape, axes=axes)

    def fingerprint(self) -> dict:
        return {"d": self.d, "n_per_axis": self.n, "half_extent": self.half_extent}


def make_grid(d: int, n_per_axis: int, half_extent: float) -> Grid:
    return Grid(int(d), int(n_per_axis), float(half_extent))


@dataclass(frozen=True, eq=False)
class Field:
    """``m`` real components sampled on a :class:`Grid`.

    ``values`` has shape ``(m, n, ..., n)``; it is copied and frozen on
    construction so a Field can be shared freely.
    """

    grid: Grid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape == self.grid.shape:
            vals = vals[np.newaxis]
        if vals.ndim != self.grid.d + 1 or vals.shape[1:] != self.grid.shape:
            raise ValueError(
                f"values of shape {vals.shape} do not fit grid of shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"field {self.label!r} contains non-finite samples")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def with_values(self, values, label: str | None = None) -> "Field":
        return Field(self.grid, values, self.label if label is None else label)

    def component(self, i: int) -> "Field":
        return Field(self.grid, self.values[i : i + 1], f"{self.label}[{i}]")

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm over components."""
        return np.sqrt(np.sum(self.values**2, axis=0))

    def _check(self, other: "Field"):
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values, self.label)
        return Field(self.grid, self.values + other, self.label)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values, self.label)
        return Field(self.grid, self.values - other, self.label)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * scalar, self.label)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values, self.label)

    @classmethod
    def from_function(cls, grid: Grid, func, label: str = "") -> "Field":
        """Sample ``func(*coords)``; it may return one array or a sequence of them."""
        out = func(*grid.coords)
        if isinstance(out, (list, tuple)):
            out = np.stack([np.broadcast_to(o, grid.shape) for o in out])
        else:
            out = np.broadcast_to(out, grid.shape)
        return cls(grid, out, label)

    @classmethod
    def zeros(cls, grid: Grid, m: int = 1, label: str = "zero") -> "Field":
        return cls(grid, np.zeros((m,) + grid.shape), label)


@dataclass(frozen=True)
class WeightedSobolevSpec:
    """Norm ``|| f * sigma^r ||_{H^m}`` with ``sigma = (1 + |x|^2)^(1/2)``."""

    m: int
    r: float = 0.0

    def __post_init__(self):
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError("derivative order m must be a non-negative integer")
        if self.r < 0:
            raise ValueError("weight exponent r must be non-negative")


def semigroup_multiplier(grid: Grid, t: float, kind=SemigroupKind.HEAT) -> np.ndarray:
    kind = SemigroupKind.parse(kind)
    if kind is SemigroupKind.HEAT:
        return np.exp(-t * grid.rk2)
    return np.exp(-t * grid.rk2**2)


def apply_semigroup(f: Field, t: float, kind=SemigroupKind.HEAT) -> Field:
    """``exp(t Delta) f`` (heat) or ``exp(-t Delta^2) f`` (biharmonic)."""
    if t < 0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    if t == 0:
        return f
    kind = SemigroupKind.parse(kind)
    grid = f.grid
    spec = grid.fft(f.values) * semigroup_multiplier(grid, t, kind)
    return Field(grid, grid.ifft(spec), f.label)


def derivative_symbol(grid: Grid, axis: int, order: int) -> np.ndarray:
    sym = (1j * grid.rk[axis]) ** order
    if order % 2:
        sym = np.where(grid.nyquist_masks[axis], 0.0, sym)
    return sym


def derivative(f: Field, axis: int, order: int = 1) -> Field:
    if not 0 <= axis < f.grid.d:
        raise ValueError(f"axis {axis} out of range for d={f.grid.d}")
    if order < 1:
        raise ValueError("derivative order must be a positive integer")
    grid = f.grid
    spec = grid.fft(f.values) * derivative_symbol(grid, axis, order)
    return Field(grid, grid.ifft(spec), f.label)


def gradient(f: Field) -> Field:
    """All first derivatives; component ``alpha * d + k`` is ``d_k f_alpha``."""
    grid = f.grid
    spec = grid.fft(f.values)
    parts = [grid.ifft(spec * derivative_symbol(grid, k, 1)) for k in range(grid.d)]
    vals = np.stack(parts, axis=1).reshape((f.m * grid.d,) + grid.shape)
    return Field(grid, vals, f"grad {f.label}")


def laplacian(f: Field) -> Field:
    grid = f.grid
    return Field(grid, grid.ifft(-grid.rk2 * grid.fft(f.values)), f"lap {f.label}")


def lp_norm(f: Field | np.ndarray, p: float, grid: Grid | None = None) -> float:
    """Discrete L^p norm with the pointwise Euclidean norm over components."""
    if isinstance(f, Field):
        grid = f.grid
        mag = f.magnitude()
    else:
        mag = np.asarray(f)
    if p == np.inf or p == "inf":
        return float(mag.max()) if mag.size else 0.0
    p = float(p)
    if p < 1:
        raise ValueError(f"L^p exponent must be >= 1, got {p}")
    peak = float(mag.max())
    if peak == 0.0:
        return 0.0
    # scale by the peak so high powers do not underflow
    s = float(np.sum((mag / peak) ** p))
    return peak * (s * grid.cell_volume) ** (1.0 / p)


def boundary_ratio(f: Field) -> float:
    """max |f| on the outermost grid layer divided by max |f| (0 for zero fields)."""
    mag = f.magnitude()
    peak = mag.max()
    if peak == 0:
        return 0.0
    edge = 0.0
    for axis in range(f.grid.d):
        edge = max(edge, float(np.take(mag, 0, axis=axis).max()), float(np.take(mag, -1, axis=axis).max()))
    return edge / float(peak)


def _sobolev_weight(grid: Grid, m: int) -> np.ndarray:
    """sum over multi-indices |alpha| <= m of prod_j k_j^(2 alpha_j), full fft layout."""
    k2 = [kk**2 for kk in np.meshgrid(*([grid.k] * grid.d), indexing="ij")]
    w = np.zeros(grid.shape)
    for alpha in itertools.product(range(m + 1), repeat=grid.d):
        if sum(alpha) <= m:
            term = np.ones(grid.shape)
            for kj2, a in zip(k2, alpha):
                if a:
                    term = term * kj2**a
            w += term
    return w


def weighted_sobolev_norm(f: Field, spec: WeightedSobolevSpec, tol: float = 1e-8) -> float:
    """H^m norm of ``f * sigma^r`` (sum of L^2 norms of all derivatives up to order m)."""
    ratio = boundary_ratio(f)
    if ratio > tol:
        edge = ratio * float(f.magnitude().max())
        raise BoundaryDecayError(
            f"field {f.label!r} is not decayed at the box boundary: "
            f"max boundary magnitude {edge:.3e} ({ratio:.3e} of max)"
        )
    grid = f.grid
    g = f.values * (1.0 + grid.radius2) ** (0.5 * spec.r) if spec.r else f.values
    axes = tuple(range(1, grid.d + 1))
    spec_g = np.fft.fftn(g, axes=axes)
    w = _sobolev_weight(grid, spec.m)
    total = np.sum(np.abs(spec_g) ** 2 * w) * grid.cell_volume / grid.size
    return float(np.sqrt(total))


def _interp_matrix(grid: Grid, pts: np.ndarray) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant at ``pts`` (zero outside the box)."""
    n = grid.n
    phase = (pts + grid.half_extent)[:, None] * grid.k[None, :]
    mat = np.exp(1j * phase) / n
    nyq = n // 2
    # the Nyquist mode contributes a cosine so the interpolant stays real
    mat[:, nyq] = np.cos(phase[:, nyq]) / n
    # points in the last half-cell wrap periodically; only points past the box are zeroed
    outside = (pts < -grid.half_extent - 1e-12) | (pts >= grid.half_extent + 1e-12)
    mat[outside] = 0.0
    return mat


def rescale(f: Field, L: float, a: float, b: int = 1, warn_tol: float = 1e-6) -> Field:
    """Return ``g(xi) = L^a f(L^b xi)`` on the same grid.

    Off-grid samples use the full trigonometric interpolant; samples outside
    the box are zero.  If ``f`` is not negligible at the box edge the zero
    extension is inexact and the result label carries a truncation warning.
    """
    if not L > 1:
        raise ValueError(f"scale factor must satisfy L > 1, got {L}")
    if b <= 0:
        raise ValueError("argument power b must be positive")
    grid = f.grid
    s = float(L) ** b
    pts = s * grid.x
    mat = _interp_matrix(grid, pts)
    spec = np.fft.fftn(f.values, axes=tuple(range(1, grid.d + 1)))
    out = spec
    for axis in range(1, grid.d + 1):
        out = np.moveaxis(np.tensordot(out, mat, axes=([axis], [1])), -1, axis)
    vals = (float(L) ** a) * out.real
    label = f.label
    ratio = boundary_ratio(f)
    if ratio > warn_tol:
        label = f"{label} [truncation warning: boundary/max = {ratio:.2e}]"
    return Field(grid, vals, label)


def integrate(f: Field) -> np.ndarray:
    axes = tuple(range(1, f.grid.d + 1))
    return f.values.sum(axis=axes) * f.grid.cell_volume
