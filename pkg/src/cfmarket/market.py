"""Exponential-utility traders, their potentials, and belief generation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from cfmarket import expfam
from cfmarket.cost import LiquidCost


@dataclass(frozen=True)
class TraderParams:
    theta: np.ndarray
    a: float = 1.0

    def __post_init__(self):
        theta = expfam.as_vector(self.theta)
        if not np.all(np.isfinite(theta)):
            raise ValueError("trader belief must be finite")
        if not self.a > 0:
            raise ValueError(f"risk aversion must be positive, got {self.a}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "a", float(self.a))


@dataclass(frozen=True)
class Population:
    traders: tuple[TraderParams, ...]

    def __post_init__(self):
        traders = tuple(self.traders)
        if not traders:
            raise ValueError("a population needs at least one trader")
        if len({t.theta.size for t in traders}) != 1:
            raise ValueError("traders disagree on the number of securities")
        object.__setattr__(self, "traders", traders)

    @classmethod
    def from_arrays(cls, thetas, a=1.0) -> "Population":
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        a = np.broadcast_to(np.asarray(a, dtype=float), (thetas.shape[0],))
        return cls(tuple(TraderParams(th, ai) for th, ai in zip(thetas, a)))

    @property
    def N(self) -> int:
        return len(self.traders)

    @property
    def K(self) -> int:
        return self.traders[0].theta.size

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([t.theta for t in self.traders])

    @property
    def risk_aversions(self) -> np.ndarray:
        return np.array([t.a for t in self.traders])

    def __len__(self) -> int:
        return self.N

    def __iter__(self):
        return iter(self.traders)

    def __getitem__(self, i) -> TraderParams:
        return self.traders[i]


@dataclass
class MarketState:
    """Per-trader allocations and cash plus the outstanding shares.

    Traders start with nothing; use :meth:`empty`.
    """

    allocations: np.ndarray
    cash: np.ndarray
    shares: np.ndarray = field(default=None)

    def __post_init__(self):
        self.allocations = np.array(self.allocations, dtype=float)
        self.cash = np.array(self.cash, dtype=float)
        if self.shares is None:
            self.shares = self.allocations.sum(axis=0)
        self.shares = np.array(self.shares, dtype=float)

    @classmethod
    def empty(cls, N: int, K: int) -> "MarketState":
        return cls(np.zeros((N, K)), np.zeros(N), np.zeros(K))

    def copy(self) -> "MarketState":
        return MarketState(self.allocations.copy(), self.cash.copy(), self.shares.copy())

    def check(self, cost: LiquidCost | None = None, tol: float = 1e-9) -> None:
        """Assert share bookkeeping and, given a market maker, cash conservation."""
        drift = np.max(np.abs(self.shares - self.allocations.sum(axis=0)))
        assert drift <= tol * max(1.0, np.max(np.abs(self.shares))), f"share drift {drift}"
        if cost is not None:
            K = self.shares.size
            expected = cost.value(np.zeros(K)) - cost.value(self.shares)
            scale = max(1.0, abs(expected))
            assert abs(self.cash.sum() - expected) <= tol * scale, "cash not conserved"


class BeliefMode(str, enum.Enum):
    UNIFORM = "uniform"
    SINGLE_PEAKED = "single_peaked"


@dataclass(frozen=True)
class GroundTruth:
    theta_true: np.ndarray
    sigma: float
    mode: BeliefMode = BeliefMode.UNIFORM
    nu: float | None = None

    @property
    def mu_true(self) -> np.ndarray:
        return expfam.mean_payoff(self.theta_true)


def trader_potential(t: TraderParams, x) -> float:
    x = expfam.as_vector(x)
    return expfam.log_partition(t.theta + t.a * x) / t.a


def trader_potential_grad(t: TraderParams, x) -> np.ndarray:
    return expfam.mean_payoff(t.theta + t.a * expfam.as_vector(x))


def trader_conjugate(t: TraderParams, mu) -> float:
    mu = expfam.check_coherent(mu)
    return (expfam.neg_entropy(mu) - float(t.theta @ mu)) / t.a


def expected_utility(t: TraderParams, r, c: float) -> float:
    r = expfam.as_vector(r)
    exponent = expfam.log_partition(t.theta - t.a * r) - expfam.log_partition(t.theta) - t.a * c
    return -np.exp(exponent) / t.a


def trader_terms(pop: Population, allocations) -> np.ndarray:
    """F_i(-r_i) for every trader at once."""
    a = pop.risk_aversions
    z = pop.thetas - a[:, None] * np.asarray(allocations, dtype=float)
    return logsumexp(z, axis=1) / a


def total_potential(pop: Population, c: LiquidCost, state: MarketState) -> float:
    alloc = state.allocations
    return float(trader_terms(pop, alloc).sum() + c.value(alloc.sum(axis=0)))


def ground_truth(mode, K: int, nu: float | None = None, sigma: float | None = None) -> GroundTruth:
    """Ground-truth natural parameter for the uniform or single-peaked setting.

    Default noise levels are 1 (uniform) and 5 (single-peaked).
    """
    mode = BeliefMode(mode)
    if K < 2:
        raise ValueError("need at least two securities")
    if mode is BeliefMode.UNIFORM:
        return GroundTruth(np.zeros(K), 1.0 if sigma is None else float(sigma), mode)
    if nu is None:
        nu = 0.02
    if not (nu > 0 and nu * (K - 1) < 1):
        raise ValueError(f"single-peaked needs 0 < nu*(K-1) < 1, got nu={nu}, K={K}")
    theta = np.full(K, np.log(nu))
    theta[0] = np.log(1.0 - nu * (K - 1))
    return GroundTruth(theta, 5.0 if sigma is None else float(sigma), mode, float(nu))


def sample_beliefs(gt: GroundTruth, N: int, seed, a: float | Sequence[float] = 1.0) -> Population:
    """Draw N beliefs from Normal(theta_true, sigma^2 I) with a seeded generator."""
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((N, gt.theta_true.size))
    return Population.from_arrays(gt.theta_true + gt.sigma * noise, a)
