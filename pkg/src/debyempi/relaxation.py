"""Relaxation adaption: map Debye-model samples to Langevin-model samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DomainError
from .simulation import relaxation_factor

# 1 - alpha below this is treated as numerically singular
ALPHA_GUARD = 1e-12


@dataclass
class RelaxationParams:
    """Per-channel relaxation times; ``tau = 0`` disables adaption on a channel."""

    tau: np.ndarray
    dt: float

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if np.any(self.tau < 0) or np.any(~np.isfinite(self.tau)):
            raise DomainError("relaxation times must be finite and nonnegative")
        if not self.dt > 0:
            raise DomainError("dt must be positive")

    @property
    def alpha(self):
        return relaxation_factor(self.dt, self.tau)


def relaxation_adaption(scan, params):
    """Invert the discrete Debye recurrence exactly.

    ``s_ad,n = (s_n - alpha s_{n-1}) / (1 - alpha)`` for ``n = 1..L`` with
    ``s_0`` taken from ``scan.s0``. Channels with ``tau = 0`` pass through
    unchanged. The result is always tagged as Langevin data.

    Parameters
    ----------
    scan : ScanRecord
    params : RelaxationParams or float
        A bare float is used as a common tau with ``scan.dt``.
    """
    if not isinstance(params, RelaxationParams):
        params = RelaxationParams(np.full(scan.n, float(params)), scan.dt)
    tau = np.broadcast_to(params.tau, (scan.n,))
    alpha = np.broadcast_to(params.alpha, (scan.n,))
    if np.any(alpha >= 1.0):
        raise DomainError("alpha >= 1; tau too large for the time step")
    if np.any(1.0 - alpha < ALPHA_GUARD):
        raise ConditioningError(
            "1 - alpha < 1e-12: the adaption is numerically singular for dt << tau "
            "and would need a regularized Volterra inversion")
    s = scan.samples
    prev = np.vstack([scan.s0[None], s[:-1]])
    out = (s - alpha * prev) / (1.0 - alpha)
    active = tau > 0
    out[:, ~active] = s[:, ~active]
    return scan.with_samples(out, model="langevin", tau=np.zeros(scan.n))


def condition_number(alpha, T, tau):
    """Row-sum condition number ``(1 - e^{-T/tau}) (1 + alpha) / (1 - alpha)``.

    Returns ``inf`` at ``alpha = 1``.
    """
    if not (0.0 <= alpha <= 1.0):
        raise DomainError("alpha must lie in [0, 1]")
    if not (T > 0 and tau > 0):
        raise DomainError("T and tau must be positive")
    if alpha == 1.0:
        return np.inf
    return (1.0 - np.exp(-T / tau)) * (1.0 + alpha) / (1.0 - alpha)


def volterra_matrix(alpha, L):
    """Dense lower-triangular ``B[n, k] = (1 - alpha) alpha^(n-k)`` of the discrete system."""
    n = np.arange(L)
    expo = n[:, None] - n[None, :]
    B = np.where(expo >= 0, (1.0 - alpha) * float(alpha) ** np.maximum(expo, 0), 0.0)
    return B


def noise_gain(alpha):
    """Variance amplification of white noise through the adaption."""
    return (1.0 + alpha ** 2) / (1.0 - alpha) ** 2
