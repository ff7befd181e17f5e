"""Periodic grids (circle, flat torus) with second-order finite-difference calculus.

Points on axis a sit at coordinates j * spacing[a], j = 0 .. N_a - 1; the
flat point ordering runs axis 0 fastest.  All stencils wrap around
periodically, so the lattice is a discrete closed manifold.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "FieldStats",
    "make_grid",
    "constant_field",
    "coordinate_field",
    "laplacian",
    "gradient_sq",
    "integrate",
    "helmholtz_solve",
    "field_stats",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on a circle (dim 1) or flat torus (dim 2)."""

    dim: int
    points_per_axis: tuple[int, ...]
    axis_length: tuple[float, ...]
    spacing: tuple[float, ...]

    @property
    def npoints(self) -> int:
        n = 1
        for m in self.points_per_axis:
            n *= m
        return n

    @property
    def volume(self) -> float:
        v = 1.0
        for length in self.axis_length:
            v *= length
        return v

    @property
    def cell_volume(self) -> float:
        v = 1.0
        for s in self.spacing:
            v *= s
        return v

    def mesh_shape(self) -> tuple[int, ...]:
        # numpy layout: grid axis 0 is the fastest flat index, hence the
        # last numpy axis
        return tuple(reversed(self.points_per_axis))

    def numpy_axis(self, axis: int) -> int:
        return self.dim - 1 - axis

    def coordinates(self, axis: int) -> np.ndarray:
        """Flat array of the coordinate along `axis` at every grid point."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for a {self.dim}-d grid")
        coords = self.spacing[axis] * np.arange(self.points_per_axis[axis])
        shape = [1] * self.dim
        shape[self.numpy_axis(axis)] = self.points_per_axis[axis]
        full = np.broadcast_to(coords.reshape(shape), self.mesh_shape())
        return np.ascontiguousarray(full).ravel()


def make_grid(
    dim: int,
    points_per_axis: Sequence[int] | int,
    axis_length: Sequence[float] | float,
) -> Grid:
    """Build a periodic grid; spacing is stored as axis_length / points exactly."""
    if dim not in (1, 2):
        raise ValueError(f"unsupported dimension {dim}: only 1 (circle) and 2 (torus)")
    if isinstance(points_per_axis, (int, np.integer)):
        points_per_axis = [points_per_axis]
    if isinstance(axis_length, (int, float, np.floating)):
        axis_length = [axis_length]
    pts = tuple(int(n) for n in points_per_axis)
    lengths = tuple(float(L) for L in axis_length)
    if len(pts) != dim or len(lengths) != dim:
        raise ValueError(
            f"expected {dim} entries for points_per_axis and axis_length, "
            f"got {len(pts)} and {len(lengths)}"
        )
    for n in pts:
        if n < 4:
            raise ValueError(f"points_per_axis must be >= 4, got {n}")
    for L in lengths:
        if not L > 0:
            raise ValueError(f"axis_length must be positive, got {L}")
    spacing = tuple(L / n for L, n in zip(lengths, pts))
    return Grid(dim=dim, points_per_axis=pts, axis_length=lengths, spacing=spacing)


@dataclass(frozen=True)
class Field:
    """Real scalar function sampled on a Grid.

    Values are stored flat (axis 0 fastest), immutable, and are required to
    be finite; every arithmetic operation re-validates through this
    constructor.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.grid.npoints:
            raise ValueError(
                f"field has {v.size} values but grid has {self.grid.npoints} points"
            )
        v = v.reshape(-1).copy()
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"field contains a non-finite value at point {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mesh(self) -> np.ndarray:
        return self.values.reshape(self.grid.mesh_shape())

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def _coerce(self, other) -> np.ndarray | float:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        return Field(self.grid, self.values / self._coerce(other))

    def __rtruediv__(self, other) -> "Field":
        return Field(self.grid, self._coerce(other) / self.values)

    def __pow__(self, exponent: float) -> "Field":
        return Field(self.grid, self.values ** float(exponent))

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


def constant_field(grid: Grid, value: float) -> Field:
    return Field(grid, np.full(grid.npoints, float(value)))


def coordinate_field(grid: Grid, axis: int) -> Field:
    return Field(grid, grid.coordinates(axis))


def laplacian(u: Field) -> Field:
    """Second-order central Laplacian with periodic wraparound on each axis."""
    g = u.grid
    mesh = u.mesh()
    out = np.zeros_like(mesh)
    for axis in range(g.dim):
        np_axis = g.numpy_axis(axis)
        h2 = g.spacing[axis] ** 2
        out += (np.roll(mesh, -1, axis=np_axis) - 2.0 * mesh + np.roll(mesh, 1, axis=np_axis)) / h2
    return Field(g, out.ravel())


def gradient_sq(u: Field) -> Field:
    """Pointwise squared gradient magnitude via central differences."""
    g = u.grid
    mesh = u.mesh()
    out = np.zeros_like(mesh)
    for axis in range(g.dim):
        np_axis = g.numpy_axis(axis)
        two_h = 2.0 * g.spacing[axis]
        d = (np.roll(mesh, -1, axis=np_axis) - np.roll(mesh, 1, axis=np_axis)) / two_h
        out += d * d
    return Field(g, out.ravel())


def integrate(u: Field) -> float:
    """Rectangle-rule integral over the periodic domain (exact for constants)."""
    return float(u.grid.cell_volume * u.values.sum())


@functools.lru_cache(maxsize=32)
def _stencil_symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of -laplacian on the rfftn mode layout of `grid`."""
    shape = grid.mesh_shape()
    parts = []
    for np_axis, n in enumerate(shape):
        axis = grid.dim - 1 - np_axis
        h2 = grid.spacing[axis] ** 2
        if np_axis == len(shape) - 1:
            k = np.arange(n // 2 + 1)
        else:
            k = np.arange(n)
        lam = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h2
        sh = [1] * grid.dim
        sh[np_axis] = lam.size
        parts.append(lam.reshape(sh))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    total.setflags(write=False)
    return total


def helmholtz_solve(rhs: Field, alpha: float) -> Field:
    """Solve (alpha*I - laplacian) w = rhs by Fourier diagonalization.

    Uses the eigenvalues of the discrete stencil, not the continuum symbol,
    so applying the forward stencil operator to the result reproduces rhs to
    solver tolerance.
    """
    if not alpha > 0:
        raise ValueError(f"operator not invertible: alpha must be positive, got {alpha}")
    g = rhs.grid
    shape = g.mesh_shape()
    axes = tuple(range(g.dim))
    spec = np.fft.rfftn(rhs.mesh(), axes=axes)
    spec /= alpha + _stencil_symbol(g)
    out = np.fft.irfftn(spec, s=shape, axes=axes)
    return Field(g, out.ravel())


@dataclass(frozen=True)
class FieldStats:
    min: float
    max: float
    l2_norm: float
    linf_norm: float
    mean: float


def field_stats(u: Field) -> FieldStats:
    v = u.values
    l2 = float(np.sqrt(u.grid.cell_volume * np.sum(v * v)))
    return FieldStats(
        min=float(v.min()),
        max=float(v.max()),
        l2_norm=l2,
        linf_norm=float(np.abs(v).max()),
        mean=integrate(u) / u.grid.volume,
    )
