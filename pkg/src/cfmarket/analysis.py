"""Closed-form error formulas: bias, cost comparison, convergence rates, sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from cfmarket import DegenerateUniformError, NonPositiveGapError, PreconditionViolation, expfam, linops
from cfmarket.cost import CostKind, hessian_at_price, state_for_price
from cfmarket.dynamics import DynamicsKind, block_count


@dataclass(frozen=True)
class ErrorDecomposition:
    sampling: float
    bias: float
    convergence: float
    total: float


@dataclass(frozen=True)
class SigmaBounds:
    """Leading-order (asymptotic in b) local strong convexity bounds.

    ``sigma_high`` and ``kappa_low`` are None for single-security dynamics,
    where only a lower bound on strong convexity is available.
    """

    sigma_low: float
    sigma_high: float | None
    kappa_high: float
    kappa_low: float | None
    n_blocks: int


def harmonic_mean(a: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    return a.size / np.sum(1.0 / a)


def _state_differences(kind, mu) -> np.ndarray:
    """Matrix of s_k - s_j for the state priced at mu, without cancellation.

    log(mu_k / mu_j) is taken as log1p of the exactly rounded difference, which
    keeps full relative accuracy when the two prices are close.
    """
    dmu = mu[:, None] - mu[None, :]
    d = np.log1p(dmu / mu[None, :])
    if CostKind.parse(kind) is CostKind.IND:
        d = d + np.log1p(dmu / (1.0 - mu[:, None]))
    return d


def _cov_times_state(mu, kind) -> np.ndarray:
    # (H s)_k = mu_k sum_j mu_j (s_k - s_j)
    return mu * (_state_differences(kind, mu) @ mu)


def _cov_quadratic(mu, kind) -> float:
    # s' H s = 1/2 sum_kj mu_k mu_j (s_k - s_j)^2
    d = _state_differences(kind, mu)
    return float(0.5 * mu @ (d * d) @ mu)


def asymptotic_bias(mu_bar, kind, b: float, a_bar: float, N: int) -> np.ndarray:
    """First-order term of mu*(b) - mu_bar:  -b (a_bar/N) H_T(mu_bar) s,  s priced at mu_bar."""
    mu_bar = expfam.check_interior(mu_bar)
    return -b * (a_bar / N) * _cov_times_state(mu_bar, kind)


def _bias_vectors(mu_bar, permissive):
    mu_bar = expfam.check_interior(mu_bar)
    hs = _cov_times_state(mu_bar, CostKind.LMSR)
    degenerate = np.linalg.norm(hs) < 1e-12
    if degenerate and not permissive:
        raise DegenerateUniformError("bias ratio undefined at a uniform clearing price")
    return mu_bar, hs, degenerate


def eta(mu_bar, permissive: bool = False) -> float:
    """Ratio of IND to LMSR asymptotic bias norms at the same liquidity.

    With ``permissive`` a uniform price gives 1 instead of raising.
    """
    mu_bar, hs, degenerate = _bias_vectors(mu_bar, permissive)
    if degenerate:
        return 1.0
    return float(np.linalg.norm(_cov_times_state(mu_bar, CostKind.IND)) / np.linalg.norm(hs))


def eta_kl(mu_bar, permissive: bool = False) -> float:
    """Bias ratio measured in KL divergence (quadratic form in H)."""
    mu_bar, _, degenerate = _bias_vectors(mu_bar, permissive)
    if degenerate:
        return 1.0
    return float(np.sqrt(_cov_quadratic(mu_bar, CostKind.IND) / _cov_quadratic(mu_bar, CostKind.LMSR)))


def kl_divergence(p, q) -> float:
    p = expfam.check_coherent(p)
    q = expfam.check_coherent(q)
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise ValueError("KL divergence is infinite: q vanishes where p does not")
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))


def match_liquidity(b: float, eta_value: float) -> float:
    if eta_value < 1:
        raise ValueError("eta must be at least 1")
    return b / eta_value


def curvature_ratio_spectrum(mu_bar, kind, diagonal: bool = False) -> tuple[float, float]:
    """Positive eigenvalue range of H_T^(1/2) H_C^+ H_T^(1/2) at mu_bar.

    With ``diagonal`` only the diagonal of H_C is used (single-security case).
    """
    kind = CostKind.parse(kind)
    mu_bar = expfam.check_interior(mu_bar)
    if kind is CostKind.LMSR and not diagonal:
        # H_C = H_T, so the product is the projection onto range(H_T)
        return 1.0, 1.0
    HT = expfam.payoff_covariance(mu_bar)
    HC = hessian_at_price(kind, mu_bar)
    if diagonal:
        HC = np.diag(np.diag(HC))
    R = linops.sqrt_psd(HT)
    return linops.pos_eig_range(R @ linops.pinv(HC) @ R)


def pdp_range(a: Sequence[float]) -> tuple[float, float]:
    """Positive eigenvalue range of P diag(a) P with P the centering projection."""
    a = np.asarray(a, dtype=float)
    if a.size >= 2 and np.all(a == a[0]):
        # P diag(a) P = a P
        return float(a[0]), float(a[0])
    P = linops.centering_projection(a.size)
    return linops.pos_eig_range(P @ np.diag(a) @ P)


def sigma_bounds(kind, cost, mu_bar, a: Sequence[float], b: float) -> SigmaBounds:
    kind = DynamicsKind.parse(kind)
    cost = CostKind.parse(cost)
    mu_bar = expfam.check_interior(mu_bar)
    a = np.asarray(a, dtype=float)
    N, K = a.size, mu_bar.size
    pdp_lo, pdp_hi = pdp_range(a)
    n_blocks = block_count(kind, N, K)
    if kind is DynamicsKind.ASD:
        lo, hi = curvature_ratio_spectrum(mu_bar, cost)
        s_lo = 2 * b * pdp_lo * lo
        s_hi = 2 * b * pdp_hi * hi
        return SigmaBounds(s_lo, s_hi, 1 - s_lo / n_blocks, 1 - s_hi / n_blocks, n_blocks)
    lo, _ = curvature_ratio_spectrum(mu_bar, cost, diagonal=True)
    s_lo = b * pdp_lo * lo
    return SigmaBounds(s_lo, None, 1 - s_lo / n_blocks, None, n_blocks)


def _gap_at(gaps, t):
    if isinstance(gaps, Mapping):
        return gaps[t]
    for tt, g in gaps:
        if tt == t:
            return g
    raise KeyError(f"no gap recorded at t={t}")


def empirical_sigma(gaps, t1: int, t2: int, n_blocks: int) -> float:
    """Strong convexity implied by the geometric decay of the mean gap between t1 and t2.

    ``gaps`` is a mapping or a sequence of (t, mean gap) pairs.
    """
    if not t2 > t1:
        raise ValueError("need t2 > t1")
    g1, g2 = _gap_at(gaps, t1), _gap_at(gaps, t2)
    if not (g1 > 0 and g2 > 0):
        raise NonPositiveGapError(f"gaps must be positive, got {g1} and {g2}")
    return float(n_blocks * (1.0 - (g2 / g1) ** (1.0 / (t2 - t1))))


def log_linear_fit(ts, gaps) -> tuple[float, float]:
    """Slope and R^2 of log10(gap) against t."""
    res = stats.linregress(np.asarray(ts, dtype=float), np.log10(np.asarray(gaps, dtype=float)))
    return float(res.slope), float(res.rvalue**2)


def n_eff(a: Sequence[float]) -> float:
    inv = 1.0 / np.asarray(a, dtype=float)
    if np.any(inv <= 0):
        raise ValueError("risk aversions must be positive")
    return float(inv.sum() ** 2 / np.sum(inv**2))


def sampling_error_bound(sigma: float, K: int, n_eff_value: float, delta: float) -> float:
    """Chebyshev bound sigma * sqrt(K / (N_eff delta)) on the clearing-price error."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return float(sigma * np.sqrt(K / (n_eff_value * delta)))


def error_decomposition(mu_true, mu_bar, mu_star, mu_t) -> ErrorDecomposition:
    mu_true, mu_bar, mu_star, mu_t = (np.asarray(x, dtype=float) for x in (mu_true, mu_bar, mu_star, mu_t))
    if not (mu_true.shape == mu_bar.shape == mu_star.shape == mu_t.shape):
        raise ValueError("price vectors differ in dimension")
    return ErrorDecomposition(
        float(np.linalg.norm(mu_true - mu_bar)),
        float(np.linalg.norm(mu_bar - mu_star)),
        float(np.linalg.norm(mu_star - mu_t)),
        float(np.linalg.norm(mu_true - mu_t)),
    )


def trade_ratio_rho(mu_bar, a, from_cost, to_cost, eta_used: float | None = None) -> float:
    """Worst-case factor of extra trades for ``to_cost`` at bias-matched liquidity.

    ``eta_used`` defaults to the liquidity ratio b/b' that equalizes the
    asymptotic biases of the two costs.
    """
    from_cost, to_cost = CostKind.parse(from_cost), CostKind.parse(to_cost)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if not np.allclose(a, a[0]):
        raise ValueError("trade ratio assumes equal risk aversions")
    if eta_used is None:
        if from_cost is to_cost:
            eta_used = 1.0
        else:
            e = eta(mu_bar, permissive=True)
            eta_used = e if from_cost is CostKind.LMSR else 1.0 / e
    _, hi = curvature_ratio_spectrum(mu_bar, from_cost)
    lo, _ = curvature_ratio_spectrum(mu_bar, to_cost)
    return float(eta_used * hi / lo)


def lemma_conv_spectrum(mu) -> tuple[float, float]:
    """Eigenvalue range of D^(-1/2) H D^(-1/2) on its range, H the multinomial covariance."""
    mu = expfam.check_interior(mu)
    H = expfam.payoff_covariance(mu)
    D = np.diag(mu * (1 - mu))
    return linops.restricted_spectrum(H, D)


def lemma_bias_ratio(mu_sorted, s, v, tol: float = 1e-12) -> tuple[float, float]:
    """Quadratic-form ratios v'Hv / s'Hs and v'H^2v / s'H^2s.

    Requires sorted mu, s, v with consecutive gaps satisfying
    gap(s) <= gap(v) <= 2 gap(s).
    """
    mu = expfam.check_interior(mu_sorted)
    s = expfam.as_vector(s)
    v = expfam.as_vector(v)
    if not (mu.shape == s.shape == v.shape):
        raise PreconditionViolation("mismatched dimensions")
    if np.any(np.diff(mu) > tol):
        raise PreconditionViolation("mu must be sorted in nonincreasing order")
    ds, dv = -np.diff(s), -np.diff(v)
    slack = tol * (1 + np.abs(ds))
    if np.any(ds < -slack) or np.any(dv < ds - slack) or np.any(dv > 2 * ds + slack):
        raise PreconditionViolation("consecutive differences violate gap(s) <= gap(v) <= 2 gap(s)")
    H = expfam.payoff_covariance(mu)
    denom1 = s @ H @ s
    if not denom1 > 0:
        raise PreconditionViolation("s'Hs must be positive")
    Hs, Hv = H @ s, H @ v
    return float((v @ H @ v) / denom1), float((Hv @ Hv) / (Hs @ Hs))
