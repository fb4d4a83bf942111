"""Frequency-domain preprocessing of receive signals.

Bins are addressed by their signed DFT index, so every filter acts on a bin
and its mirror together and real signals stay real.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

IMAG_TOLERANCE = 1e-9


@dataclass
class SpectrumRecord:
    """Per-channel spectra of one repetition, shape ``(L, n)``."""

    spectrum: np.ndarray
    dt: float
    snr: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    guarded_bins: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.spectrum = np.asarray(self.spectrum, dtype=complex)
        if self.spectrum.ndim == 1:
            self.spectrum = self.spectrum[:, None]
        if self.snr is not None:
            self.snr = np.asarray(self.snr, dtype=float).reshape(self.spectrum.shape)
            if np.any(self.snr < 0):
                raise DomainError("SNR values must be nonnegative")

    @property
    def L(self):
        return self.spectrum.shape[0]

    @property
    def n(self):
        return self.spectrum.shape[1]

    @property
    def df(self):
        return 1.0 / (self.L * self.dt)

    @property
    def frequencies(self):
        return np.fft.fftfreq(self.L, self.dt)

    def bin_index(self):
        """Distance of each bin from DC, ``min(k, L - k)``."""
        k = np.arange(self.L)
        return np.minimum(k, self.L - k)

    def with_spectrum(self, spectrum, **changes):
        return replace(self, spectrum=spectrum, **changes)


def to_spectrum(samples, dt, snr=None):
    return SpectrumRecord(np.fft.fft(np.asarray(samples, dtype=float), axis=0), dt, snr)


def to_time_domain(spec):
    """Inverse DFT per channel; rejects spectra that are not conjugate symmetric."""
    x = np.fft.ifft(spec.spectrum, axis=0)
    scale = np.abs(x).max()
    if scale > 0 and np.abs(x.imag).max() > IMAG_TOLERANCE * scale:
        raise DomainError("inverse DFT has a significant imaginary part")
    return x.real.copy()


def snr_threshold(spec, thresholds):
    """Zero bins whose SNR falls below the per-channel threshold."""
    if spec.snr is None:
        raise ConfigError("spectrum carries no SNR estimates")
    theta = np.broadcast_to(np.asarray(thresholds, dtype=float), (spec.n,))
    keep = spec.snr >= theta[None, :]
    return spec.with_spectrum(np.where(keep, spec.spectrum, 0.0), thresholds=theta.copy())


def highpass_cutoff(L, dt, n_harmonics, f_x, f_y, offset=100):
    """Cut-off bin ``floor(max(f_x, f_y) n / df) + offset``."""
    if n_harmonics < 0:
        raise ConfigError("harmonic count must be nonnegative")
    df = 1.0 / (L * dt)
    return math.floor(max(f_x, f_y) * n_harmonics / df + 1e-9) + int(offset)


def highpass_filter(spec, n_harmonics, f_x, f_y, offset=100):
    """Zero every bin whose index from DC lies below the cut-off."""
    cut = highpass_cutoff(spec.L, spec.dt, n_harmonics, f_x, f_y, offset)
    if cut >= spec.L / 2:
        warnings.warn(f"high-pass cut-off {cut} removes the whole spectrum")
    keep = spec.bin_index() >= cut
    return spec.with_spectrum(np.where(keep[:, None], spec.spectrum, 0.0))


def aftf_divide(spec, a_af, eps=None):
    """Divide out the analog-filter transfer function.

    Bins where ``|a_af| < eps`` (default ``1e-8 max|a_af|``) are zeroed and
    counted in ``guarded_bins``.
    """
    a = np.asarray(a_af, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    a = np.broadcast_to(a, spec.spectrum.shape)
    if eps is None:
        eps = 1e-8 * np.abs(a).max()
    ok = np.abs(a) >= eps
    out = np.zeros_like(spec.spectrum)
    np.divide(spec.spectrum, a, out=out, where=ok)
    return spec.with_spectrum(out, guarded_bins=spec.guarded_bins + int((~ok).sum()))


def snr_from_empty_scans(signal, empty_scans):
    """Per-bin SNR ``|S| / std(empty)`` from an ensemble of empty-scanner spectra.

    ``empty_scans`` has shape ``(M, L, n)`` in the time domain.
    """
    noise = np.fft.fft(np.asarray(empty_scans, dtype=float), axis=1).std(axis=0)
    spec = np.fft.fft(np.asarray(signal, dtype=float), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(noise > 0, np.abs(spec) / noise, np.inf)
    return snr


def simulate_empty_scans(L, n, noise_std, count, seed):
    rng = np.random.default_rng(seed)
    return noise_std * rng.standard_normal((count, L, n))


def preprocess_scan(scan, thresholds=None, snr=None, n_harmonics=None, frequencies=None,
                    a_af=None, offset=100):
    """Apply the selected steps and return a new scan with filtered samples.

    ``s0`` is left untouched; the Debye recurrence only needs it as a seed.
    """
    spec = to_spectrum(scan.samples, scan.dt, snr)
    if thresholds is not None:
        spec = snr_threshold(spec, thresholds)
    if n_harmonics is not None:
        f_x, f_y = frequencies
        spec = highpass_filter(spec, n_harmonics, f_x, f_y, offset)
    if a_af is not None:
        spec = aftf_divide(spec, a_af)
    return scan.with_samples(to_time_domain(spec))
