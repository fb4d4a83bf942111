"""Langevin magnetization theory: the MPI kernel and the core operator.

Field quantities are expressed as ``mu0 * H`` (tesla) throughout, so the
selection-field gradient is in T/m and the saturation scale ``H_sat`` is the
value ``k_B T / (M_sat * pi/6 * d^3)`` directly. Only the ratio
``G x / H_sat`` enters the kernel, which is unit invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError, DomainError
from .grid import MatrixFieldGrid, ScalarGrid

MU0 = 4e-7 * np.pi
K_BOLTZMANN = 1.380649e-23

# below this argument the Taylor series is more accurate than coth(x) - 1/x
_TAYLOR_CUTOFF = 5e-2


@dataclass
class PhysicalParams:
    """Scanner and particle constants.

    Defaults reproduce the simulated setup: 293 K, ``M_sat = 4.74e5``,
    21 nm cores and the in-plane gradient ``diag(-1, -1)`` T/m.
    """

    temperature: float = 293.0
    M_sat: float = 4.74e5
    diameter: float = 21e-9
    mu0: float = MU0
    k_B: float = K_BOLTZMANN
    G: np.ndarray = field(default_factory=lambda: -np.eye(2))
    R: np.ndarray = field(default_factory=lambda: np.eye(2))
    m: float | None = None

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name in ("temperature", "M_sat", "diameter"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")
        n = self.G.shape[0]
        if self.G.shape != (n, n) or self.R.shape != (n, n):
            raise ConfigError("G and R must be square matrices of the same size")
        if abs(np.linalg.det(self.G)) < 1e-300 or np.linalg.cond(self.G) > 1e12:
            raise ConfigError("selection-field gradient G must be invertible")
        if self.m is None:
            self.m = self.M_sat * self.particle_volume

    @property
    def n(self):
        return self.G.shape[0]

    @property
    def particle_volume(self):
        return np.pi / 6.0 * self.diameter ** 3

    @property
    def H_sat(self):
        return self.k_B * self.temperature / (self.M_sat * self.particle_volume)

    @property
    def gradient_scale(self):
        """``|det G|^(1/n)``, the isotropic strength of the gradient."""
        return abs(np.linalg.det(self.G)) ** (1.0 / self.n)

    @property
    def unit_gradient(self):
        """``G`` normalized to unit determinant magnitude."""
        return self.G / self.gradient_scale

    @property
    def signal_constant(self):
        """Scalar prefactor ``-mu0 * m`` of the Langevin signal."""
        return -self.mu0 * self.m

    @property
    def spatial_resolution(self):
        """Kernel width in meters, ``H_sat / |det G|^(1/n)``."""
        return self.H_sat / self.gradient_scale


def _check_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0) or np.any(np.isinf(x)):
        raise DomainError("argument must be finite and nonnegative")
    return x


def _langevin(x):
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    x2 = xs * xs
    taylor = xs * (1 / 3 - x2 * (1 / 45 - x2 * (2 / 945 - x2 / 4725)))
    direct = 1.0 / np.tanh(xl) - 1.0 / xl
    return np.where(small, taylor, direct)


def _langevin_over_x(x):
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    x2 = xs * xs
    taylor = 1 / 3 - x2 * (1 / 45 - x2 * (2 / 945 - x2 / 4725))
    direct = (1.0 / np.tanh(xl) - 1.0 / xl) / xl
    return np.where(small, taylor, direct)


def _langevin_prime(x):
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    x2 = xs * xs
    taylor = 1 / 3 - x2 * (1 / 15 - x2 * (2 / 189 - x2 / 675))
    with np.errstate(over="ignore"):
        direct = 1.0 / xl ** 2 - 1.0 / np.sinh(xl) ** 2
    return np.where(small, taylor, direct)


def langevin(x):
    """Langevin function ``coth(x) - 1/x``, extended by 0 at the origin."""
    x = _check_nonneg(x)
    out = _langevin(x)
    return float(out) if out.ndim == 0 else out


def langevin_derivative(x):
    """Derivative ``1/x^2 - csch(x)^2`` of the Langevin function, 1/3 at 0."""
    x = _check_nonneg(x)
    out = _langevin_prime(x)
    return float(out) if out.ndim == 0 else out


def _check_h(h):
    if not h > 0:
        raise DomainError(f"resolution scale h must be positive, got {h}")


def kernel_eigenvalues(r):
    """Radial and transverse eigenvalues of ``K`` at distance ``r``."""
    r = np.asarray(r, dtype=float)
    return _langevin_prime(r), _langevin_over_x(r)


def mpi_kernel(y, h=1.0):
    """Matrix valued MPI kernel ``K_h(y) = K(y/h) / h``.

    ``y`` may carry leading batch dimensions; the last axis is the spatial
    dimension ``n``. Returns an array of shape ``y.shape + (n,)``.
    """
    _check_h(h)
    y = np.asarray(y, dtype=float) / h
    if not np.all(np.isfinite(y)):
        raise DomainError("kernel argument must be finite")
    n = y.shape[-1]
    r = np.linalg.norm(y, axis=-1)
    radial, transverse = kernel_eigenvalues(r)
    safe = np.where(r > 0, r, 1.0)
    u = y / safe[..., None]
    proj = u[..., :, None] * u[..., None, :]
    eye = np.eye(n)
    K = radial[..., None, None] * proj + transverse[..., None, None] * (eye - proj)
    # u is zero at the origin, so K reduces to transverse * I = I/3 there
    return K / h


def trace_kernel(y, h=1.0):
    """Trace ``tr K_h(y)`` of the MPI kernel; strictly positive, radial."""
    _check_h(h)
    y = np.asarray(y, dtype=float) / h
    n = y.shape[-1]
    r = np.linalg.norm(y, axis=-1)
    radial, transverse = kernel_eigenvalues(r)
    return (radial + (n - 1) * transverse) / h


def displacement_table(shape, spacing):
    """Cell-center displacements ``(i*hx, j*hy)`` for ``|i| < Nx, |j| < Ny``."""
    nx, ny = shape
    hx, hy = spacing
    dx = hx * np.arange(-(nx - 1), nx)
    dy = hy * np.arange(-(ny - 1), ny)
    return np.stack(np.meshgrid(dx, dy, indexing="ij"), axis=-1)


def kernel_table(shape, spacing, params, h=None, kind="matrix"):
    """Quadrature weights of the core operator on a grid.

    Entry ``[Nx-1+i, Ny-1+j]`` is ``K_h(G d) |det G|^(1/n) hx hy`` for the
    displacement ``d = (i hx, j hy)``. With ``G = g I`` this is the spatial
    kernel ``K_{H_sat/g}(d)`` times the cell area.
    """
    h = params.H_sat if h is None else h
    d = displacement_table(shape, spacing) @ params.G.T
    weight = params.gradient_scale * spacing[0] * spacing[1]
    if kind == "matrix":
        return mpi_kernel(d, h) * weight
    if kind == "trace":
        return trace_kernel(d, h) * weight
    raise ConfigError(f"unknown kernel kind {kind!r}")


def convolve_table(rho, table, method="fft"):
    """Linear (zero extended) convolution of ``rho`` with a kernel table.

    ``table`` has shape ``(2Nx-1, 2Ny-1, ...)``; trailing axes are handled
    componentwise. ``method="direct"`` is an exact summation reference.
    """
    nx, ny = rho.shape
    extra = table.shape[2:]
    flat = table.reshape(table.shape[0], table.shape[1], -1)
    out = np.empty((nx, ny, flat.shape[2]))
    if method == "fft":
        for c in range(flat.shape[2]):
            out[:, :, c] = fftconvolve(flat[:, :, c], rho, mode="valid")
    elif method == "direct":
        out[:] = 0.0
        for j in range(nx):
            for l in range(ny):
                if rho[j, l] != 0.0:
                    out += rho[j, l] * flat[nx - 1 - j:2 * nx - 1 - j, ny - 1 - l:2 * ny - 1 - l]
    else:
        raise ConfigError(f"unknown convolution method {method!r}")
    return out.reshape((nx, ny) + extra)


def core_operator_apply(rho, h=None, params=None, method="fft"):
    """MPI core response ``A_h[rho] = K_h * rho`` sampled at cell centers.

    Parameters
    ----------
    rho : ScalarGrid
        Particle concentration, zero outside the FOV.
    h : float, optional
        Kernel dilation; defaults to ``params.H_sat``.
    params : PhysicalParams, optional
    method : {"fft", "direct"}

    Returns
    -------
    MatrixFieldGrid
    """
    params = PhysicalParams() if params is None else params
    if params.n != 2:
        raise ConfigError("grids are two-dimensional; params.n must be 2")
    table = kernel_table(rho.shape, rho.spacing, params, h)
    return MatrixFieldGrid(convolve_table(rho.values, table, method), rho.fov)


def core_operator_adjoint(A, h=None, params=None, method="fft"):
    """Adjoint of :func:`core_operator_apply` for the Euclidean inner product."""
    params = PhysicalParams() if params is None else params
    table = kernel_table(A.shape, A.spacing, params, h)
    # K is even, so correlation equals convolution with the same table
    nx, ny = A.shape
    out = np.zeros((nx, ny))
    for i in range(A.n):
        for j in range(A.n):
            out += convolve_table(A.values[:, :, i, j], table[:, :, i, j], method)
    return ScalarGrid(out, A.fov)
