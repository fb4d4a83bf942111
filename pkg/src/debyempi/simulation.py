"""Synthetic FFP scans: trajectories, Langevin and Debye signals, noise."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .grid import FOV
from .interpolation import interpolation_matrix
from .physics import PhysicalParams, core_operator_apply

# Lissajous drive used for the simulated experiments: amplitude 12 mT at a
# 1 T/m gradient, frequencies 2.5 MHz / 102 and 2.5 MHz / 96.
DEFAULT_DRIVE_AMPLITUDE = 0.012
DEFAULT_FREQUENCIES = (2.5e6 / 102, 2.5e6 / 96)
DEFAULT_DT = 4e-7
DEFAULT_SAMPLES = 1632
DEFAULT_TAU = 5e-6


@dataclass
class Trajectory:
    """Sampled FFP trajectory ``r(t_k)``, ``v(t_k)`` at ``t_k = k dt``.

    ``positions`` and ``velocities`` have shape ``(L, n)``; the initial
    point ``t_0 = 0`` is kept separately in ``r0``/``v0``.
    """

    positions: np.ndarray
    velocities: np.ndarray
    dt: float
    r0: np.ndarray
    v0: np.ndarray
    kind: str = "tabulated"
    amplitudes: tuple | None = None
    frequencies: tuple | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("time step must be positive")
        if self.positions.shape != self.velocities.shape:
            raise DomainError("positions and velocities must have equal shapes")

    @property
    def L(self):
        return len(self.positions)

    @property
    def repetition_time(self):
        return self.L * self.dt

    @property
    def times(self):
        return self.dt * np.arange(1, self.L + 1)

    def bounding_fov(self):
        """Smallest axis parallel box containing the samples (the DF-FOV)."""
        p = np.vstack([self.r0[None], self.positions])
        return FOV(p[:, 0].min(), p[:, 0].max(), p[:, 1].min(), p[:, 1].max())


def lissajous_trajectory(A_x, A_y, f_x, f_y, dt, L):
    """Lissajous curve ``r(t) = (A_x cos 2 pi f_x t, A_y cos 2 pi f_y t)``.

    Amplitudes are FFP excursions in meters; velocities are the analytic
    derivative.
    """
    for name, val in dict(A_x=A_x, A_y=A_y, f_x=f_x, f_y=f_y, dt=dt).items():
        if not val > 0:
            raise DomainError(f"{name} must be positive")
    if int(L) < 1:
        raise DomainError("L must be at least 1")
    amp = np.array([A_x, A_y], dtype=float)
    om = 2 * np.pi * np.array([f_x, f_y], dtype=float)

    def at(t):
        t = np.asarray(t, dtype=float)[..., None]
        return amp * np.cos(om * t), -amp * om * np.sin(om * t)

    t = dt * np.arange(1, int(L) + 1)
    r, v = at(t)
    r0, v0 = at(0.0)
    return Trajectory(r, v, float(dt), r0, v0, kind="lissajous",
                      amplitudes=(float(A_x), float(A_y)), frequencies=(float(f_x), float(f_y)))


def default_trajectory(params=None, dt=DEFAULT_DT, L=DEFAULT_SAMPLES):
    """The simulated-data Lissajous scan.

    The drive amplitude of 12 mT is converted to an FFP excursion through
    the gradient strength.
    """
    params = PhysicalParams() if params is None else params
    a = DEFAULT_DRIVE_AMPLITUDE / params.gradient_scale
    return lissajous_trajectory(a, a, *DEFAULT_FREQUENCIES, dt, L)


@dataclass
class ScanRecord:
    """Time series of signal samples with the FFP positions and velocities.

    ``samples[k]`` is the signal at ``t_{k+1} = (k + 1) dt``; ``s0`` is the
    sample at ``t_0``. ``calibration`` is the scalar relating signal units to
    the core response (``-mu0 m`` for simulated data). ``tau`` holds one
    relaxation time per channel; all zeros means Langevin data.
    """

    samples: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    dt: float
    s0: np.ndarray
    model: str = "langevin"
    tau: np.ndarray | None = None
    calibration: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.s0 = np.asarray(self.s0, dtype=float)
        tau = 0.0 if self.tau is None else self.tau
        self.tau = np.broadcast_to(np.asarray(tau, dtype=float), (self.n,)).copy()
        if not (len(self.samples) == len(self.positions) == len(self.velocities)):
            raise DomainError("samples, positions and velocities must have equal length")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.model not in ("langevin", "debye"):
            raise DomainError(f"unknown model tag {self.model!r}")

    @property
    def L(self):
        return len(self.samples)

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def times(self):
        return self.dt * np.arange(1, self.L + 1)

    def with_samples(self, samples, s0=None, **changes):
        s0 = self.s0 if s0 is None else s0
        return replace(self, samples=np.array(samples, dtype=float), s0=np.array(s0, dtype=float),
                       **changes)


def langevin_signal(A, traj, params):
    """Signal ``c R I[A](r_k) G_hat v_k`` of a core response ``A``.

    ``G_hat`` is the unit-determinant gradient. Returns ``(samples, s0)``.
    """
    pts = np.vstack([traj.r0[None], traj.positions])
    vel = np.vstack([traj.v0[None], traj.velocities])
    W, outside = interpolation_matrix(pts, A.shape, A.fov)
    if outside:
        raise DomainError(f"{outside} trajectory sample(s) lie outside the FOV")
    n = A.n
    Ak = (W @ A.values.reshape(-1, n * n)).reshape(-1, n, n)
    w = vel @ params.unit_gradient.T
    s = params.signal_constant * np.einsum("ab,kbc,kc->ka", params.R, Ak, w)
    return s[1:], s[0]


def forward_langevin(rho, traj, params=None):
    """Adiabatic (Langevin) scan of the concentration ``rho``."""
    params = PhysicalParams() if params is None else params
    if np.any(rho.values < 0):
        raise DomainError("concentration must be nonnegative")
    A = core_operator_apply(rho, params=params)
    samples, s0 = langevin_signal(A, traj, params)
    return ScanRecord(samples, traj.positions.copy(), traj.velocities.copy(), traj.dt, s0,
                      model="langevin", tau=np.zeros(samples.shape[1]),
                      calibration=params.signal_constant)


def relaxation_factor(dt, tau):
    """``alpha = exp(-dt / tau)``, with ``alpha = 0`` for ``tau = 0``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or not dt > 0:
        raise DomainError("need tau >= 0 and dt > 0")
    with np.errstate(divide="ignore"):
        return np.where(tau > 0, np.exp(-dt / np.where(tau > 0, tau, 1.0)), 0.0)


def debye_filter(s_ad, alpha, s0):
    """Recurrence ``s_n = alpha s_{n-1} + (1 - alpha) s_ad,n`` per channel.

    This is the piecewise-constant quadrature of the Duhamel integral,
    evaluated sequentially in O(L).
    """
    s_ad = np.asarray(s_ad, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), s_ad.shape[1:])
    out = np.empty_like(s_ad)
    prev = np.array(s0, dtype=float)
    a = alpha
    b = 1.0 - alpha
    for k in range(len(s_ad)):
        prev = a * prev + b * s_ad[k]
        out[k] = prev
    return out


def forward_debye(scan, tau, s0=None):
    """Debye-relaxed version of a Langevin scan.

    Parameters
    ----------
    scan : ScanRecord
        Langevin-model samples.
    tau : float or array_like
        Relaxation time in seconds, scalar or one per channel.
    s0 : array_like, optional
        Initial state; defaults to the first adiabatic sample, which removes
        the start-up transient.
    """
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (scan.n,))
    if np.any(tau <= 0):
        raise DomainError("tau must be positive; a zero relaxation time is the Langevin scan itself")
    if not np.all(np.isfinite(scan.samples)):
        raise DomainError("non-finite samples")
    s0 = scan.samples[0] if s0 is None else np.asarray(s0, dtype=float)
    alpha = relaxation_factor(scan.dt, tau)
    out = debye_filter(scan.samples, alpha, s0)
    return scan.with_samples(out, s0=s0, model="debye", tau=tau.copy())


def add_noise(scan, snr_db, seed, per_channel=True):
    """Add white Gaussian noise at a target SNR in dB.

    Noise power is set from each channel's mean square (or the global mean
    square with ``per_channel=False``). ``snr_db = inf`` returns a copy.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return scan.with_samples(scan.samples.copy())
    s = scan.samples
    power = np.mean(s ** 2, axis=0) if per_channel else np.full(scan.n, np.mean(s ** 2))
    if np.any(power == 0):
        raise DomainError("cannot set an SNR relative to a zero signal")
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    noisy = s + sigma * rng.standard_normal(s.shape)
    s0 = scan.s0 + sigma * rng.standard_normal(scan.n)
    return scan.with_samples(noisy, s0=s0)
