"""MPI core stage: recover the core response ``A`` from trajectory samples.

The unknown is the matrix field ``A`` on an ``Nx x Ny`` grid. Its energy is

    E[A] = 1/L sum_k |y_k - I[A](r_k) w_k|^2 + gamma sum_ij |Delta^2 A_ij|^2

with ``y_k`` the calibrated Langevin samples and ``w_k = G_hat v_k``. The
Neumann Laplacian is diagonal in the orthonormal DCT-II basis, so CG runs on
the DCT coefficients of ``A`` with a diagonal preconditioner.

The energy is nondimensional: lengths are measured in the particle
resolution ``H_sat / |G|`` and time in sampling steps, so velocities are in
resolution lengths per sample. ``A`` itself keeps SI units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn

from .cg import conjugate_gradient
from .errors import ConfigError, DomainError
from .grid import FOV, MatrixFieldGrid, ScalarGrid
from .interpolation import interpolation_matrix
from .physics import PhysicalParams


@dataclass
class CoreStageConfig:
    gamma: float = 7e-7
    shape: tuple = (32, 32)
    cg_max_iters: int = 15000
    cg_tolerance: float = 1e-6
    fov: FOV | None = None
    length_unit: float | None = None
    time_unit: float | None = None
    order: int = 2
    interpolation: str = "cosine"

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if not 0 < self.cg_tolerance < 1:
            raise ConfigError("cg_tolerance must lie in (0, 1)")
        if self.cg_max_iters < 1:
            raise ConfigError("cg_max_iters must be at least 1")
        if self.order != 2 or self.interpolation != "cosine":
            raise ConfigError("only the order-2 regularizer with cosine interpolation is supported")
        self.shape = tuple(int(s) for s in self.shape)


@dataclass
class CoreSolveReport:
    iterations: int
    residual: float
    energy: float
    data_fidelity: float
    converged: bool
    energy_trace: list = field(default_factory=list)


def laplacian_eigenvalues(shape, spacing):
    """Eigenvalues of the reflective 5-point Laplacian in the DCT-II basis."""
    nx, ny = shape
    hx, hy = spacing
    ex = (2.0 - 2.0 * np.cos(np.pi * np.arange(nx) / nx)) / hx ** 2
    ey = (2.0 - 2.0 * np.cos(np.pi * np.arange(ny) / ny)) / hy ** 2
    return -(ex[:, None] + ey[None, :])


def laplacian_apply(values, spacing):
    """5-point Laplacian with half-sample reflection at the boundary."""
    hx, hy = spacing
    p = np.pad(values, ((1, 1), (1, 1)), mode="symmetric")
    return ((p[2:, 1:-1] - 2 * values + p[:-2, 1:-1]) / hx ** 2
            + (p[1:-1, 2:] - 2 * values + p[1:-1, :-2]) / hy ** 2)


def bilaplacian_apply(g, spacing=None):
    """Discrete Laplacian applied twice (reflective boundaries).

    Accepts a :class:`ScalarGrid` (physical spacing) or a bare array with
    ``spacing`` defaulting to 1.
    """
    if isinstance(g, ScalarGrid):
        if min(g.shape) < 5:
            raise ConfigError("bi-Laplacian needs at least a 5x5 grid")
        return g.with_values(laplacian_apply(laplacian_apply(g.values, g.spacing), g.spacing))
    spacing = (1.0, 1.0) if spacing is None else spacing
    return laplacian_apply(laplacian_apply(np.asarray(g, dtype=float), spacing), spacing)


class CoreProblem:
    """Matrix-free normal equations of the core-stage energy.

    Fields are stored as arrays of shape ``(Nx, Ny, n, n)``.
    """

    def __init__(self, samples, positions, weights, shape, fov, gamma, length_unit=1.0):
        self.y = np.asarray(samples, dtype=float)
        self.w = np.asarray(weights, dtype=float)
        self.L, self.n = self.y.shape
        self.shape = tuple(shape)
        self.fov = fov
        self.gamma = float(gamma)
        hx, hy = fov.spacing(self.shape)
        self.spacing = (hx / length_unit, hy / length_unit)
        self.W, self.n_outside = interpolation_matrix(positions, self.shape, fov)
        self.WT = self.W.T.tocsr()
        lam = laplacian_eigenvalues(self.shape, self.spacing)
        self.reg_symbol = lam ** 4
        # average diagonal of the data term, per velocity component
        col = np.asarray(self.W.multiply(self.W).sum(axis=1)).ravel()
        diag = (col[:, None] * self.w ** 2).sum(axis=0) / (self.L * np.prod(self.shape))
        self.data_diag = np.broadcast_to(diag[None, :], (self.n, self.n))

    @property
    def field_shape(self):
        return self.shape + (self.n, self.n)

    def forward(self, A):
        """Predicted samples ``I[A](r_k) w_k``, shape ``(L, n)``."""
        nx, ny = self.shape
        Ak = (self.W @ A.reshape(nx * ny, -1)).reshape(self.L, self.n, self.n)
        return np.einsum("kij,kj->ki", Ak, self.w)

    def adjoint(self, res):
        outer = res[:, :, None] * self.w[:, None, :]
        return (self.WT @ outer.reshape(self.L, -1)).reshape(self.field_shape)

    def regularizer(self, A):
        return sum(float(np.sum(bilaplacian_apply(A[:, :, i, j], self.spacing) ** 2))
                   for i in range(self.n) for j in range(self.n))

    def data_fidelity(self, A):
        return float(np.sum((self.y - self.forward(A)) ** 2)) / self.L

    def energy(self, A):
        return self.data_fidelity(A) + self.gamma * self.regularizer(A)

    def gradient(self, A):
        """Euler-Lagrange residual, i.e. the gradient of :meth:`energy`."""
        return 2.0 * (self.normal(A) - self.rhs())

    # operators in the spatial domain
    def normal(self, A):
        out = self.adjoint(self.forward(A)) / self.L
        if self.gamma:
            hat = dctn(A, axes=(0, 1), norm="ortho")
            out = out + idctn(self.gamma * self.reg_symbol[:, :, None, None] * hat,
                              axes=(0, 1), norm="ortho")
        return out

    def rhs(self):
        return self.adjoint(self.y) / self.L

    # operators on DCT coefficients, as used by the solver
    def normal_hat(self, Ahat):
        A = idctn(Ahat, axes=(0, 1), norm="ortho")
        out = dctn(self.adjoint(self.forward(A)) / self.L, axes=(0, 1), norm="ortho")
        return out + self.gamma * self.reg_symbol[:, :, None, None] * Ahat

    def rhs_hat(self):
        return dctn(self.rhs(), axes=(0, 1), norm="ortho")

    def preconditioner(self):
        d = self.data_diag[None, None] + self.gamma * self.reg_symbol[:, :, None, None]
        d = np.where(d > 0, d, 1.0)
        return lambda r: r / d

    def operator_norm(self, iters=20):
        """Power-iteration estimate of the largest eigenvalue of the normal operator."""
        x = np.random.default_rng(0).standard_normal(self.field_shape)
        lam = 0.0
        for _ in range(iters):
            y = self.normal_hat(x)
            lam = float(np.linalg.norm(y) / np.linalg.norm(x))
            x = y
        return lam

    def solve(self, tol=1e-6, maxiter=15000, track_energy=False):
        """Minimize the energy by preconditioned CG on the DCT coefficients.

        Stops with the usual least-squares pair of tests on the stacked
        residual ``r = (y - F A, sqrt(gamma) Delta^2 A)``: either ``|r|``
        falls below ``tol`` times the data norm (consistent data) or the
        normal-equation residual falls below ``tol |N|^(1/2) |r|``.
        """
        trace = []
        y_norm = float(np.linalg.norm(self.y)) / np.sqrt(self.L)
        op_norm = np.sqrt(self.operator_norm())

        def energy_hat(xhat):
            A = idctn(xhat, axes=(0, 1), norm="ortho")
            reg = float(np.sum(self.reg_symbol[:, :, None, None] * xhat ** 2))
            return self.data_fidelity(A) + self.gamma * reg

        def converged(xhat, r):
            # the gradient of the energy is twice the normal residual
            res = np.sqrt(max(energy_hat(xhat), 0.0))
            return res <= tol * y_norm or np.linalg.norm(r) <= tol * op_norm * res

        def cb(k, xhat):
            trace.append(energy_hat(xhat))

        res = conjugate_gradient(self.normal_hat, self.rhs_hat(), maxiter=maxiter,
                                 precond=self.preconditioner(),
                                 callback=cb if track_energy else None, converged=converged)
        A = idctn(res.x, axes=(0, 1), norm="ortho")
        fid = self.data_fidelity(A)
        report = CoreSolveReport(res.iterations, res.residual,
                                 fid + self.gamma * self.regularizer(A), fid, res.converged, trace)
        return A, report


def calibrated_data(scan, params):
    """Samples divided by the calibration scalar and ``R``, plus velocity weights."""
    y = scan.samples / scan.calibration
    y = np.linalg.solve(params.R, y.T).T
    w = scan.velocities @ params.unit_gradient.T
    return y, w


def default_fov(scan):
    p = np.abs(scan.positions).max(axis=0)
    return FOV.symmetric(p[0], p[1])


def core_problem(scan, cfg, params=None):
    params = PhysicalParams() if params is None else params
    if scan.model != "langevin" or np.any(scan.tau != 0):
        raise DomainError("core stage needs Langevin data; apply relaxation_adaption first")
    fov = cfg.fov if cfg.fov is not None else default_fov(scan)
    ell = params.spatial_resolution if cfg.length_unit is None else cfg.length_unit
    theta = scan.dt if cfg.time_unit is None else cfg.time_unit
    y, w = calibrated_data(scan, params)
    scale = theta / ell
    return CoreProblem(y * scale, scan.positions, w * scale, cfg.shape, fov, cfg.gamma, ell)


def core_stage_solve(scan, cfg, params=None, track_energy=False):
    """Reconstruct the core response by minimizing the regularized energy.

    Returns
    -------
    (MatrixFieldGrid, CoreSolveReport)
        The report flags non-convergence; the field is returned regardless.
    """
    prob = core_problem(scan, cfg, params)
    A, report = prob.solve(cfg.cg_tolerance, cfg.cg_max_iters, track_energy)
    return MatrixFieldGrid(A, prob.fov), report
