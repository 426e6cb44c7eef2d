"""Dense symmetric PSD helpers built on a single eigendecomposition."""

from __future__ import annotations

import numpy as np

from cfmarket import ZeroMatrixError

RANK_TOL = 1e-10


def _eigh(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return w, V


def _cutoff(w, tol):
    top = np.max(np.abs(w)) if w.size else 0.0
    return tol * top


def pinv(A, tol: float = RANK_TOL) -> np.ndarray:
    """Symmetric pseudoinverse; eigenvalues below ``tol * lambda_max`` count as zero."""
    w, V = _eigh(A)
    keep = w > _cutoff(w, tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def sqrt_psd(A) -> np.ndarray:
    w, V = _eigh(A)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def pos_eig_range(A, tol: float = RANK_TOL) -> tuple[float, float]:
    """Smallest and largest strictly positive eigenvalue."""
    w, _ = _eigh(A)
    pos = w[w > _cutoff(w, tol)]
    if pos.size == 0:
        raise ZeroMatrixError("matrix has no positive eigenvalue")
    return float(pos.min()), float(pos.max())


def centering_projection(N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be positive")
    return np.eye(N) - np.full((N, N), 1.0 / N)


def restricted_spectrum(A, B, tol: float = RANK_TOL) -> tuple[float, float]:
    """Generalized eigenvalue extrema of x'Ax / x'Bx over range(B).

    Computed as the positive spectrum of pinv(sqrt(B)) A pinv(sqrt(B)).
    """
    B = np.asarray(B, dtype=float)
    if not np.any(B):
        raise ZeroMatrixError("B is the zero matrix")
    R = pinv(sqrt_psd(B), tol)
    return pos_eig_range(R @ np.asarray(A, dtype=float) @ R, tol)
