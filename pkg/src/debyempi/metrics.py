"""Image quality metrics against a reference."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError
from .grid import ScalarGrid


def _values(img):
    return img.values if isinstance(img, ScalarGrid) else np.asarray(img, dtype=float)


def _pair(x, ref):
    x, ref = _values(x), _values(ref)
    if x.shape != ref.shape:
        raise ConfigError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref):
    """Peak signal-to-noise ratio in dB, peak taken as ``max(ref)``.

    Returns ``inf`` when the images agree exactly.
    """
    x, ref = _pair(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(ref.max() ** 2 / mse))


def ssim(x, ref, win_size=7):
    """Mean structural similarity over all valid ``win_size`` windows.

    Uniform window with sample statistics; stabilizers ``(0.01 R)^2`` and
    ``(0.03 R)^2`` where ``R`` is the dynamic range of ``ref``.
    """
    x, ref = _pair(x, ref)
    if min(x.shape) < max(8, win_size):
        raise ConfigError("ssim needs images of at least 8x8 and the window size")
    R = float(ref.max() - ref.min())
    if R == 0.0:
        R = float(abs(ref.max())) or 1.0
    c1, c2 = (0.01 * R) ** 2, (0.03 * R) ** 2
    wx = sliding_window_view(x, (win_size, win_size))
    wy = sliding_window_view(ref, (win_size, win_size))
    npix = win_size * win_size
    mx, my = wx.mean(axis=(-2, -1)), wy.mean(axis=(-2, -1))
    dx, dy = wx - mx[..., None, None], wy - my[..., None, None]
    scale = 1.0 / (npix - 1)
    vx = scale * (dx * dx).sum(axis=(-2, -1))
    vy = scale * (dy * dy).sum(axis=(-2, -1))
    cxy = scale * (dx * dy).sum(axis=(-2, -1))
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
    return float(s.mean())
