"""Separable cosine interpolation between cell centers."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp


def cosine_weight(u):
    """Blending weight ``(1 - cos(pi u)) / 2`` for local coordinate ``u``."""
    return 0.5 * (1.0 - np.cos(np.pi * np.asarray(u, dtype=float)))


def _axis_weights(coord, lo, h, n):
    t = (coord - lo) / h - 0.5
    i0 = np.floor(t).astype(int)
    u = t - i0
    below = t <= 0
    above = t >= n - 1
    i0 = np.clip(i0, 0, n - 2)
    u = np.where(below, 0.0, np.where(above, 1.0, u))
    w = cosine_weight(u)
    return i0, 1.0 - w, w


def interpolation_matrix(points, shape, fov):
    """Sparse matrix mapping flattened grid values to values at ``points``.

    Points beyond the outermost cell centers take the boundary value along
    that axis. Returns ``(W, n_outside)`` where ``n_outside`` counts points
    lying outside the FOV box itself (clamped).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    nx, ny = shape
    hx, hy = fov.spacing(shape)
    ix, ax0, ax1 = _axis_weights(pts[:, 0], fov.xmin, hx, nx)
    iy, ay0, ay1 = _axis_weights(pts[:, 1], fov.ymin, hy, ny)
    rows = np.repeat(np.arange(len(pts)), 4)
    cols = np.stack([ix * ny + iy, ix * ny + iy + 1,
                     (ix + 1) * ny + iy, (ix + 1) * ny + iy + 1], axis=1).ravel()
    vals = np.stack([ax0 * ay0, ax0 * ay1, ax1 * ay0, ax1 * ay1], axis=1).ravel()
    W = sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), nx * ny))
    W.sum_duplicates()
    n_outside = int(np.count_nonzero(~fov.contains(pts, tol=1e-12 * max(fov.extent))))
    return W, n_outside


def interpolate_grid(values, points, fov):
    """Interpolate a grid with trailing component axes at ``points``."""
    values = np.asarray(values, dtype=float)
    shape = values.shape[:2]
    W, _ = interpolation_matrix(points, shape, fov)
    flat = values.reshape(shape[0] * shape[1], -1)
    out = W @ flat
    pts_shape = np.asarray(points).shape[:-1]
    return out.reshape(pts_shape + values.shape[2:])


def interpolate_matrix_field(A, x):
    """Cosine-interpolated value of the matrix field ``A`` at position ``x``.

    Positions outside the FOV are clamped to the boundary cells with a
    warning.
    """
    x = np.asarray(x, dtype=float)
    outside = np.count_nonzero(~A.fov.contains(x.reshape(-1, 2)))
    if outside:
        warnings.warn(f"{outside} interpolation point(s) outside the FOV were clamped")
    return interpolate_grid(A.values, x, A.fov)
