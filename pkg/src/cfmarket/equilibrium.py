"""Market-clearing and market-maker equilibrium prices.

The market-maker equilibrium price minimizes the dual objective
``sum_i F_i^*(mu) + b C^*(mu)`` over the simplex.  We minimize it over the
relative interior with damped Newton in softmax coordinates, which keeps every
iterate strictly positive.  Passing ``cost=None`` means no market maker
(b = 0), whose minimizer is the market-clearing price.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from cfmarket import MaxIterationsError, expfam
from cfmarket.cost import CostKind, LiquidCost, state_for_price
from cfmarket.market import Population

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITER = 200


@dataclass(frozen=True)
class EquilibriumResult:
    mu_star: np.ndarray
    f_star: float
    grad_norm: float
    iterations: int


def weighted_belief(pop: Population) -> np.ndarray:
    """Risk-aversion-weighted average natural parameter."""
    w = 1.0 / pop.risk_aversions
    return (w @ pop.thetas) / w.sum()


def market_clearing_price(pop: Population) -> np.ndarray:
    return expfam.mean_payoff(weighted_belief(pop))


def lmsr_closed_form(pop: Population, b) -> np.ndarray:
    """LMSR market-maker equilibrium from a zero initial state.

    The market maker acts as one more exponential trader with belief 0 and
    risk aversion 1/b, so the equilibrium is that enlarged population's
    clearing price.
    """
    if isinstance(b, LiquidCost):
        if b.kind is not CostKind.LMSR:
            raise ValueError("closed form exists only for LMSR")
        b = b.b
    if b < 0:
        raise ValueError("liquidity must be nonnegative")
    w = 1.0 / pop.risk_aversions
    return expfam.mean_payoff((w @ pop.thetas) / (w.sum() + b))


class _Dual:
    """Dual objective pieces, aggregated over traders."""

    def __init__(self, pop: Population, cost: LiquidCost | None):
        w = 1.0 / pop.risk_aversions
        self.A = w.sum()
        self.theta_w = w @ pop.thetas
        self.kind = None if cost is None else cost.kind
        self.b = 0.0 if cost is None else cost.b

    @staticmethod
    def _logs(z):
        lse = logsumexp(z)
        log_mu = z - lse
        mu = np.exp(log_mu)
        # 1 - mu without cancellation for the (at most one) entry above 1/2
        with np.errstate(divide="ignore"):
            log1m = np.log1p(-mu)
        k = int(np.argmax(mu))
        if mu[k] > 0.5:
            log1m[k] = logsumexp(np.delete(z, k)) - lse
        return mu, log_mu, log1m

    def value(self, mu, log_mu, log1m) -> float:
        v = self.A * (mu @ log_mu) - self.theta_w @ mu
        if self.kind is CostKind.LMSR:
            v += self.b * (mu @ log_mu)
        elif self.kind is CostKind.IND:
            v += self.b * (mu @ log_mu + (1.0 - mu) @ log1m)
        return float(v)

    def grad(self, log_mu, log1m) -> np.ndarray:
        g = self.A * (log_mu + 1.0) - self.theta_w
        if self.kind is CostKind.LMSR:
            g = g + self.b * (log_mu + 1.0)
        elif self.kind is CostKind.IND:
            g = g + self.b * (log_mu - log1m)
        return g

    def curvature(self, mu, log1m) -> np.ndarray:
        """Diagonal of the Euclidean Hessian in price space."""
        d = self.A / mu
        if self.kind is CostKind.LMSR:
            d = d + self.b / mu
        elif self.kind is CostKind.IND:
            d = d + self.b / (mu * np.exp(log1m))
        return d

    def at(self, z):
        mu, log_mu, log1m = self._logs(z)
        return mu, log_mu, log1m, self.value(mu, log_mu, log1m)


def dual_objective(pop: Population, cost: LiquidCost | None, mu) -> tuple[float, np.ndarray]:
    """Dual value and its gradient projected on the simplex tangent space."""
    mu = expfam.check_interior(mu)
    d = _Dual(pop, cost)
    log_mu = np.log(mu)
    log1m = np.log1p(-mu)
    g = d.grad(log_mu, log1m)
    return d.value(mu, log_mu, log1m), g - g.mean()


def solve_equilibrium(
    pop: Population,
    cost: LiquidCost | None,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
    mu0=None,
) -> EquilibriumResult:
    """Market-maker equilibrium price and the optimal potential value F*.

    ``F* = -min dual`` by strong duality.  Starts from the clearing price
    unless ``mu0`` is given.  ``tol`` is absolute; the gradient grows like
    sum(1/a) + b, so for b beyond about 1e5 it sits below rounding.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = _Dual(pop, cost)
    if mu0 is None:
        z = weighted_belief(pop)
    else:
        z = np.log(expfam.check_interior(mu0))
    z = z - z[-1]
    mu, log_mu, log1m, val = d.at(z)

    for it in range(max_iter + 1):
        g = d.grad(log_mu, log1m)
        pg = g - g.mean()
        gnorm = float(np.linalg.norm(pg))
        if gnorm <= tol:
            return EquilibriumResult(mu, -val, gnorm, it)
        if it == max_iter:
            break
        # gradient and Hessian in softmax coordinates, last coordinate pinned
        h = mu * (g - mu @ g)
        J = np.diag(mu) - np.outer(mu, mu)
        H = np.diag(h) - np.outer(h, mu) - np.outer(mu, h) + J @ (d.curvature(mu, log1m)[:, None] * J)
        hr, Hr = h[:-1], H[:-1, :-1]
        step = _newton_direction(Hr, hr)
        slope = float(hr @ step)
        t = 1.0
        noise = 1e-13 * max(1.0, abs(val))
        while True:
            z_new = z.copy()
            z_new[:-1] += t * step
            cand = d.at(z_new)
            if cand[3] <= val + 1e-4 * t * slope:
                break
            if abs(cand[3] - val) <= noise and t == 1.0 and _pgnorm(d, cand) < gnorm:
                # decrease is below rounding of the value; trust the gradient
                break
            if t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 and cand[3] > val:
            log.debug("line search stalled at iteration %d, |pg|=%g", it, gnorm)
            break
        z = z_new
        mu, log_mu, log1m, val = cand
    raise MaxIterationsError(
        f"equilibrium solve did not reach tol={tol} in {max_iter} iterations (|pg|={gnorm:.3e})"
    )


def _pgnorm(d: _Dual, cand) -> float:
    g = d.grad(cand[1], cand[2])
    return float(np.linalg.norm(g - g.mean()))


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve (H + lam I) p = -g with the smallest lam making the system PD."""
    scale = max(np.max(np.abs(np.diag(H))), 1e-300)
    lam = 0.0
    for _ in range(60):
        try:
            L = np.linalg.cholesky(H + lam * np.eye(len(g)))
        except np.linalg.LinAlgError:
            lam = max(2 * lam, 1e-12 * scale)
            continue
        y = np.linalg.solve(L, -g)
        return np.linalg.solve(L.T, y)
    return -g


def verify_equilibrium(pop: Population, cost: LiquidCost | None, mu_star, tol: float = DEFAULT_TOL) -> float:
    """Largest violation of the equilibrium conditions at a candidate price.

    Allocations are rebuilt as ``(theta_i - log mu*) / a_i``.  The result adds
    the worst per-trader price mismatch to the tangent-space mismatch between
    the total allocation and the market maker's state at ``mu*``.
    """
    mu_star = expfam.check_interior(mu_star)
    a = pop.risk_aversions
    base = expfam.inverse_mean(mu_star)
    r = (pop.thetas - base) / a[:, None]
    price_res = max(
        float(np.linalg.norm(expfam.mean_payoff(t.theta - t.a * ri) - mu_star))
        for t, ri in zip(pop, r)
    )
    target = np.zeros_like(mu_star) if cost is None else cost.b * state_for_price(cost.kind, mu_star)
    diff = r.sum(axis=0) - target
    tangent = diff - diff.mean()
    return price_res + float(np.linalg.norm(tangent))
