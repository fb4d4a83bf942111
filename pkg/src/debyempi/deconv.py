"""Deconvolution stage: plug-and-play half quadratic splitting.

Recovers the concentration ``rho`` from the core response ``A`` by
alternating a quadratic data step over all selected kernel entries
``K^{ij} * rho = A^{ij}`` with a Gaussian denoising step whose strength is
driven by a noise estimate of the current iterate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn, irfft2, next_fast_len, rfft2

from .cg import conjugate_gradient
from .errors import ConfigError, DomainError
from .grid import MatrixFieldGrid, ScalarGrid, trace_of
from .physics import PhysicalParams, kernel_table

SIGMA_FLOOR = 1e-12

# c in 1 / (1 + c sigma^2 |omega|^4), frozen from calibrate_tikhonov_constant(sigma=1e-3)
TIKHONOV_CONSTANT = 8.9e4


@dataclass
class DeconvConfig:
    nu0: float = 1e-7
    n_it: int = 10
    beta: tuple = (1, 1, 1, 1)
    cg_max_iters: int = 10000
    cg_tolerance: float = 1e-12
    pad_pct: float = 5.0
    cut_pct: float = 5.0
    kernel: str = "matrix"
    denoiser: str = "tikhonov"

    def __post_init__(self):
        if self.n_it < 1:
            raise ConfigError("n_it must be at least 1")
        if not self.nu0 > 0:
            raise ConfigError("nu0 must be positive")
        self.beta = tuple(int(b) for b in self.beta)
        if any(b not in (0, 1) for b in self.beta) or not any(self.beta):
            raise ConfigError("beta weights must be 0/1 with at least one 1")
        for name in ("pad_pct", "cut_pct"):
            if not 0 <= getattr(self, name) < 50:
                raise ConfigError(f"{name} must lie in [0, 50)")
        if self.kernel not in ("matrix", "trace"):
            raise ConfigError(f"unknown kernel mode {self.kernel!r}")

    def beta_matrix(self, n):
        b = np.asarray(self.beta, dtype=float)
        if b.size != n * n:
            raise ConfigError(f"need {n * n} beta weights, got {b.size}")
        return b.reshape(n, n)


@dataclass
class DeconvReport:
    sigmas: list = field(default_factory=list)
    nus: list = field(default_factory=list)
    lam: float = 0.0
    cg_iterations: list = field(default_factory=list)
    cg_converged: list = field(default_factory=list)


# ---------------------------------------------------------------- noise level

def haar_diagonal(values):
    """Finest diagonal detail coefficients of an orthonormal Haar transform."""
    v = np.asarray(values, dtype=float)
    nx, ny = (v.shape[0] // 2) * 2, (v.shape[1] // 2) * 2
    v = v[:nx, :ny]
    return 0.5 * (v[0::2, 0::2] - v[0::2, 1::2] - v[1::2, 0::2] + v[1::2, 1::2])


def noise_estimator(image):
    """Robust Gaussian noise level: ``median(|HH|) / 0.6745``."""
    values = image.values if isinstance(image, ScalarGrid) else np.asarray(image, dtype=float)
    if min(values.shape) < 4:
        raise ConfigError("noise estimation needs at least a 4x4 image")
    return float(np.median(np.abs(haar_diagonal(values))) / 0.6745)


# ------------------------------------------------------------------ denoisers

def _biharmonic_symbol(shape):
    nx, ny = shape
    ex = 2.0 - 2.0 * np.cos(np.pi * np.arange(nx) / nx)
    ey = 2.0 - 2.0 * np.cos(np.pi * np.arange(ny) / ny)
    return (ex[:, None] + ey[None, :]) ** 2


def tikhonov_denoise(values, sigma, constant=TIKHONOV_CONSTANT):
    """Spectral Tikhonov smoothing ``1 / (1 + c sigma^2 |omega|^4)`` in the DCT domain."""
    values = np.asarray(values, dtype=float)
    if sigma == 0:
        return values.copy()
    hat = dctn(values, norm="ortho")
    hat /= 1.0 + constant * sigma ** 2 * _biharmonic_symbol(values.shape)
    return idctn(hat, norm="ortho")


def default_denoiser(image, sigma):
    """Default Gaussian denoiser; identity at ``sigma = 0``, keeps the mean."""
    return image.with_values(tikhonov_denoise(image.values, sigma))


def identity_denoiser(image, sigma):
    return image.with_values(image.values.copy())


DENOISERS = {"tikhonov": default_denoiser, "identity": identity_denoiser}


def calibration_image(shape=(64, 64)):
    """Smooth test image (sum of Gaussian bumps, peak near 1)."""
    nx, ny = shape
    x = (np.arange(nx) + 0.5) / nx
    y = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(x, y, indexing="ij")
    bumps = [(0.3, 0.35, 0.08, 1.0), (0.65, 0.6, 0.12, 0.7), (0.5, 0.8, 0.05, 0.8)]
    return sum(a * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s ** 2)) for cx, cy, s, a in bumps)


def calibrate_tikhonov_constant(sigma=1e-3, seeds=range(8), shape=(64, 64)):
    """Constant ``c`` for which the denoiser MSE is minimal at the true sigma.

    Only the product ``c sigma^2`` matters, so the optimum product found by a
    bounded scalar search is divided by ``sigma^2``.
    """
    from scipy.optimize import minimize_scalar

    clean = calibration_image(shape)
    noisy = [clean + sigma * np.random.default_rng(s).standard_normal(shape) for s in seeds]

    def mse(logp):
        p = math.exp(logp)
        return np.mean([np.mean((tikhonov_denoise(z, 1.0, p) - clean) ** 2) for z in noisy])

    res = minimize_scalar(mse, bounds=(-12, 6), method="bounded", options={"xatol": 1e-6})
    return math.exp(res.x) / sigma ** 2


# ----------------------------------------------------------- grid operations

def pad_count(n, pct):
    return math.ceil(n * pct / 100.0)


def pad_grid(image, pct):
    """Extend a grid by ``ceil(N pct / 100)`` cells per side, replicating edges."""
    if not 0 <= pct < 50:
        raise ConfigError("padding fraction must lie in [0, 50)")
    px, py = (pad_count(n, pct) for n in image.shape)
    if px == 0 and py == 0:
        return image
    pads = ((px, px), (py, py)) + ((0, 0),) * (image.values.ndim - 2)
    values = np.pad(image.values, pads, mode="edge")
    return type(image)(values, image.fov.grow(image.shape, px, py))


def cut_grid(image, pct, reference_shape=None):
    """Remove ``ceil(N pct / 100)`` cells per side, ``N`` from ``reference_shape``."""
    if not 0 <= pct < 50:
        raise ConfigError("cut fraction must lie in [0, 50)")
    ref = image.shape if reference_shape is None else reference_shape
    cx, cy = (pad_count(n, pct) for n in ref)
    if cx == 0 and cy == 0:
        return image
    nx, ny = image.shape
    if 2 * cx >= nx - 1 or 2 * cy >= ny - 1:
        raise ConfigError("cut removes the whole grid")
    values = image.values[cx:nx - cx, cy:ny - cy]
    return type(image)(values, image.fov.shrink(image.shape, cx, cy))


def pad_and_cut(image, padding_fraction, cut_fraction):
    """Pad, then cut, with both counts relative to the input grid size."""
    return cut_grid(pad_grid(image, padding_fraction), cut_fraction, image.shape)


# ------------------------------------------------------------- convolutions

class KernelConvolution:
    """Zero-extended convolution with an even kernel table, via cached FFTs.

    The kernel is even, so the operator is symmetric and serves as its own
    adjoint (correlation with the same table).
    """

    def __init__(self, table):
        table = np.asarray(table, dtype=float)
        self.n = ((table.shape[0] + 1) // 2, (table.shape[1] + 1) // 2)
        nx, ny = self.n
        self.fft_shape = (next_fast_len(3 * nx - 2, real=True), next_fast_len(3 * ny - 2, real=True))
        self.spectrum = rfft2(table, self.fft_shape)

    def __call__(self, values):
        nx, ny = self.n
        full = irfft2(rfft2(values, self.fft_shape) * self.spectrum, self.fft_shape)
        return full[nx - 1:2 * nx - 1, ny - 1:2 * ny - 1]

    adjoint = __call__


class MultiKernelProblem:
    """Quadratic data step ``sum_ij beta_ij |K^ij * rho - A^ij|^2 + nu |rho - z|^2``."""

    def __init__(self, tables, data, beta):
        self.ops = []
        self.data = []
        for idx in np.ndindex(beta.shape):
            if beta[idx]:
                self.ops.append(KernelConvolution(tables[(slice(None), slice(None)) + idx]))
                self.data.append(np.asarray(data[(slice(None), slice(None)) + idx], dtype=float))
        self.shape = self.data[0].shape
        self.rhs_data = sum(op.adjoint(d) for op, d in zip(self.ops, self.data))

    def gram(self, rho):
        return sum(op.adjoint(op(rho)) for op in self.ops)

    def residual(self, rho):
        return sum(float(np.sum((op(rho) - d) ** 2)) for op, d in zip(self.ops, self.data))

    def solve(self, nu, z, tol, maxiter, x0=None):
        def apply(x):
            return (self.gram(x.reshape(self.shape)) + nu * x.reshape(self.shape)).ravel()

        b = (self.rhs_data + nu * z).ravel()
        res = conjugate_gradient(apply, b, x0=None if x0 is None else x0.ravel(),
                                 tol=tol, maxiter=maxiter)
        return res.x.reshape(self.shape), res


def deconv_problem(A, params, cfg, h=None):
    """Build the data step for a (possibly padded) core response."""
    if cfg.kernel == "trace":
        table = kernel_table(A.shape, A.spacing, params, h, kind="trace")
        return MultiKernelProblem(table[:, :, None, None], trace_of(A).values[:, :, None, None],
                                  np.ones((1, 1)))
    table = kernel_table(A.shape, A.spacing, params, h)
    return MultiKernelProblem(table, A.values, cfg.beta_matrix(A.n))


def hqs_deconvolve(A, params=None, cfg=None, denoiser=None, h=None, report=None):
    """Recover ``rho`` from the core response by plug-and-play HQS.

    Runs ``n_it`` cycles of: CG data step with weight ``nu_k``, noise
    estimate ``sigma_{k+1}``, denoising at ``sigma_{k+1}``, and the update
    ``nu_{k+1} = lambda / sigma_{k+1}^2`` with ``lambda = nu_0 sigma_1^2``.

    Parameters
    ----------
    A : MatrixFieldGrid
        Core response on the working grid (already padded if desired).
    params : PhysicalParams
    cfg : DeconvConfig
    denoiser : callable, optional
        ``(ScalarGrid, sigma) -> ScalarGrid``; defaults to ``cfg.denoiser``.
    h : float, optional
        Kernel dilation, defaults to ``params.H_sat``.
    report : DeconvReport, optional
        Filled with the sigma / nu schedule when given.

    Returns
    -------
    ScalarGrid
    """
    params = PhysicalParams() if params is None else params
    cfg = DeconvConfig() if cfg is None else cfg
    denoiser = DENOISERS[cfg.denoiser] if denoiser is None else denoiser
    if not np.all(np.isfinite(A.values)):
        raise DomainError("core response must be finite")
    report = DeconvReport() if report is None else report
    prob = deconv_problem(A, params, cfg, h)
    rho2 = np.zeros(A.shape)
    rho1 = None
    nu = cfg.nu0
    lam = None
    for k in range(cfg.n_it):
        rho1, res = prob.solve(nu, rho2, cfg.cg_tolerance, cfg.cg_max_iters, x0=rho1)
        report.cg_iterations.append(res.iterations)
        report.cg_converged.append(res.converged)
        report.nus.append(nu)
        sigma = noise_estimator(rho1)
        if sigma < SIGMA_FLOOR:
            warnings.warn(f"noise estimate {sigma:.3g} clamped to {SIGMA_FLOOR}")
            sigma = SIGMA_FLOOR
        report.sigmas.append(sigma)
        if lam is None:
            lam = cfg.nu0 * sigma ** 2
            report.lam = lam
        out = denoiser(ScalarGrid(rho1, A.fov), sigma)
        if out.shape != A.shape:
            raise ConfigError("denoiser changed the image shape")
        rho2 = out.values
        nu = lam / sigma ** 2
    report.nus.append(nu)
    return ScalarGrid(rho2, A.fov)


def deconvolution_stage(A, params=None, cfg=None, denoiser=None, report=None):
    """Pad the core response, deconvolve, and cut back to the reporting grid."""
    cfg = DeconvConfig() if cfg is None else cfg
    padded = pad_grid(A, cfg.pad_pct)
    rho = hqs_deconvolve(padded, params, cfg, denoiser, report=report)
    return cut_grid(rho, cfg.cut_pct, A.shape)
