"""Preconditioned conjugate gradient for matrix-free SPD systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(apply_A, b, x0=None, tol=1e-6, maxiter=1000, precond=None,
                       callback=None, converged=None):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    Stops when ``||b - A x|| <= tol * ||b||``, or when ``converged(x, r)``
    returns true if that test is supplied instead. ``precond`` applies an
    SPD approximation of ``A^{-1}``. ``callback(k, x)`` runs after every
    update. Raises :class:`NumericalError` on non-positive curvature.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(np.vdot(r, z))
    res = np.linalg.norm(r) / bnorm
    if converged is None:
        def converged(x, r):
            return np.linalg.norm(r) <= tol * bnorm
    done = converged(x, r)
    k = 0
    while not done and k < maxiter:
        Ap = apply_A(p)
        curv = float(np.vdot(p, Ap))
        if not curv > 0:
            if np.linalg.norm(p) == 0:
                break
            raise NumericalError(f"CG breakdown: non-positive curvature {curv:.3e} at iteration {k}")
        step = rz / curv
        x += step * p
        r -= step * Ap
        k += 1
        res = np.linalg.norm(r) / bnorm
        if callback is not None:
            callback(k, x)
        done = converged(x, r)
        if done:
            break
        z = precond(r) if precond is not None else r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, k, float(res), bool(done))
