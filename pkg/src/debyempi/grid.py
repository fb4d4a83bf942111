"""Grid functions on a box-shaped field of view."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FOV:
    """Axis aligned box ``[xmin, xmax] x [ymin, ymax]`` in meters."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigError(f"degenerate field of view {self}")

    @classmethod
    def symmetric(cls, ax, ay):
        return cls(-ax, ax, -ay, ay)

    @property
    def extent(self):
        return (self.xmax - self.xmin, self.ymax - self.ymin)

    def spacing(self, shape):
        nx, ny = shape
        wx, wy = self.extent
        return wx / nx, wy / ny

    def cell_centers(self, shape):
        """Return 1D arrays of cell-center coordinates along x and y."""
        nx, ny = shape
        hx, hy = self.spacing(shape)
        xs = self.xmin + hx * (np.arange(nx) + 0.5)
        ys = self.ymin + hy * (np.arange(ny) + 0.5)
        return xs, ys

    def contains(self, points, tol=0.0):
        p = np.asarray(points, dtype=float)
        return ((p[..., 0] >= self.xmin - tol) & (p[..., 0] <= self.xmax + tol)
                & (p[..., 1] >= self.ymin - tol) & (p[..., 1] <= self.ymax + tol))

    def shrink(self, shape, cx, cy):
        """FOV left after removing ``cx``/``cy`` cells on every side."""
        hx, hy = self.spacing(shape)
        return FOV(self.xmin + cx * hx, self.xmax - cx * hx,
                   self.ymin + cy * hy, self.ymax - cy * hy)

    def grow(self, shape, px, py):
        hx, hy = self.spacing(shape)
        return FOV(self.xmin - px * hx, self.xmax + px * hx,
                   self.ymin - py * hy, self.ymax + py * hy)


class _GridBase:
    values: np.ndarray
    fov: FOV

    @property
    def shape(self):
        return self.values.shape[:2]

    @property
    def spacing(self):
        return self.fov.spacing(self.shape)

    @property
    def cell_area(self):
        hx, hy = self.spacing
        return hx * hy

    def centers(self):
        return self.fov.cell_centers(self.shape)

    def same_geometry(self, other):
        return self.shape == other.shape and self.fov == other.fov

    def _check(self):
        nx, ny = self.values.shape[:2]
        if nx < 2 or ny < 2:
            raise ConfigError(f"grid must be at least 2x2, got {nx}x{ny}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("grid values must be finite")


@dataclass
class ScalarGrid(_GridBase):
    """Real valued ``Nx x Ny`` grid function, constant on each cell.

    Axis 0 runs along x, axis 1 along y.
    """

    values: np.ndarray
    fov: FOV

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigError(f"ScalarGrid needs a 2D array, got shape {self.values.shape}")
        self._check()

    @classmethod
    def zeros(cls, shape, fov):
        return cls(np.zeros(shape), fov)

    def with_values(self, values):
        return ScalarGrid(values, self.fov)


@dataclass
class MatrixFieldGrid(_GridBase):
    """``n x n`` matrix valued grid function of shape ``(Nx, Ny, n, n)``."""

    values: np.ndarray
    fov: FOV

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        v = self.values
        if v.ndim != 4 or v.shape[2] != v.shape[3]:
            raise ConfigError(f"MatrixFieldGrid needs shape (Nx, Ny, n, n), got {v.shape}")
        self._check()

    @property
    def n(self):
        return self.values.shape[2]

    def component(self, i, j):
        return ScalarGrid(self.values[:, :, i, j], self.fov)

    def with_values(self, values):
        return MatrixFieldGrid(values, self.fov)


def trace_of(A):
    """Pointwise trace of a matrix field."""
    return ScalarGrid(np.trace(A.values, axis1=2, axis2=3), A.fov)
