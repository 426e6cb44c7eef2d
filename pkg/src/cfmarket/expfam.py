"""Exponential-family primitives for a complete market.

With one-hot payoffs the log partition function is log-sum-exp, its gradient
is the softmax and its conjugate is the negative entropy on the simplex.
"""

from __future__ import annotations

import numpy as np

from cfmarket import NotInteriorError

SIMPLEX_TOL = 1e-12


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def check_coherent(mu, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return `mu` as an array after checking it lies on the simplex."""
    mu = as_vector(mu)
    if np.any(mu < -tol) or abs(mu.sum() - 1.0) > max(tol, 1e-15 * mu.size):
        raise ValueError(f"not a coherent price vector: {mu}")
    return mu


def check_interior(mu, tol: float = SIMPLEX_TOL) -> np.ndarray:
    mu = check_coherent(mu, tol)
    if np.any(mu <= 0.0):
        raise NotInteriorError(f"price vector is on the boundary: {mu}")
    return mu


def log_partition(theta) -> float:
    theta = as_vector(theta)
    m = theta.max()
    return float(m + np.log(np.exp(theta - m).sum()))


def mean_payoff(theta) -> np.ndarray:
    """Softmax of the natural parameter (expected one-hot payoff)."""
    theta = as_vector(theta)
    e = np.exp(theta - theta.max())
    return e / e.sum()


def payoff_covariance(mu) -> np.ndarray:
    """diag(mu) - mu mu^T, the Hessian of the log partition at price mu."""
    mu = check_interior(mu)
    return np.diag(mu) - np.outer(mu, mu)


def neg_entropy(mu) -> float:
    mu = check_coherent(mu)
    pos = mu > 0
    return float(np.sum(mu[pos] * np.log(mu[pos])))


def inverse_mean(mu) -> np.ndarray:
    """The log-price representative of the natural parameters mapping to `mu`."""
    mu = check_interior(mu)
    return np.log(mu)
