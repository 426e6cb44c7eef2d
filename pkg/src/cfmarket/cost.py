"""LMSR and sum-of-independent-LMSR (IND) cost functions.

Everything except the liquidity wrapper works on the unit-liquidity cost C;
``LiquidCost`` implements C_b(s) = b C(s / b).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, xlogy

from cfmarket import NotInteriorError
from cfmarket import expfam


class CostKind(str, enum.Enum):
    LMSR = "LMSR"
    IND = "IND"

    @classmethod
    def parse(cls, value) -> "CostKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown cost kind {value!r}; expected LMSR or IND") from None


def _price_arg(kind: CostKind, mu) -> np.ndarray:
    # IND prices live in the open box (0,1)^K and need not sum to one
    if kind is CostKind.LMSR:
        return expfam.check_interior(mu)
    mu = expfam.as_vector(mu)
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise NotInteriorError(f"IND price outside (0,1)^K: {mu}")
    return mu


def cost_value(kind, s) -> float:
    kind = CostKind.parse(kind)
    s = expfam.as_vector(s)
    if kind is CostKind.LMSR:
        return expfam.log_partition(s)
    return float(np.logaddexp(0.0, s).sum())


def cost_price(kind, s) -> np.ndarray:
    kind = CostKind.parse(kind)
    s = expfam.as_vector(s)
    if kind is CostKind.LMSR:
        return expfam.mean_payoff(s)
    return expit(s)


def hessian_at_price(kind, mu) -> np.ndarray:
    """Hessian of C expressed as a function of the price it produces."""
    kind = CostKind.parse(kind)
    mu = _price_arg(kind, mu)
    if kind is CostKind.LMSR:
        return expfam.payoff_covariance(mu)
    return np.diag(mu * (1.0 - mu))


def conjugate_value(kind, mu) -> float:
    kind = CostKind.parse(kind)
    if kind is CostKind.LMSR:
        return expfam.neg_entropy(mu)
    mu = expfam.as_vector(mu)
    if np.any(mu < 0.0) or np.any(mu > 1.0):
        raise ValueError(f"IND conjugate is infinite outside [0,1]^K: {mu}")
    return float(np.sum(xlogy(mu, mu) + xlogy(1.0 - mu, 1.0 - mu)))


def state_for_price(kind, mu) -> np.ndarray:
    """An element of the conjugate's subdifferential: a state priced at `mu`.

    LMSR returns log(mu) rather than a zero-mean shift of it.
    """
    kind = CostKind.parse(kind)
    mu = _price_arg(kind, mu)
    if kind is CostKind.LMSR:
        return np.log(mu)
    return logit(mu)


def worst_case_loss_unit(kind, K: int) -> float:
    kind = CostKind.parse(kind)
    if K < 2:
        raise ValueError("need at least two securities")
    if kind is CostKind.LMSR:
        return float(np.log(K))
    return float(K * np.log(2.0))


@dataclass(frozen=True)
class LiquidCost:
    kind: CostKind
    b: float

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind.parse(self.kind))
        if not self.b > 0:
            raise ValueError(f"liquidity must be positive, got {self.b}")

    def value(self, s) -> float:
        return self.b * cost_value(self.kind, np.asarray(s, dtype=float) / self.b)

    def price(self, s) -> np.ndarray:
        return cost_price(self.kind, np.asarray(s, dtype=float) / self.b)

    @property
    def hessian_factor(self) -> float:
        # Hessian of C_b at s is hessian_factor * H_C(price(s))
        return 1.0 / self.b

    def hessian(self, s) -> np.ndarray:
        x = np.asarray(s, dtype=float) / self.b
        if self.kind is CostKind.IND:
            # p(1-p) from the state stays accurate where p rounds to 1
            return np.diag(expit(x) * expit(-x)) / self.b
        mu = expfam.mean_payoff(x)
        return (np.diag(mu) - np.outer(mu, mu)) / self.b

    def conjugate(self, mu) -> float:
        return self.b * conjugate_value(self.kind, mu)

    def worst_case_loss(self, K: int) -> float:
        return self.b * worst_case_loss_unit(self.kind, K)


def liquid_value(c: LiquidCost, s) -> float:
    return c.value(s)


def liquid_price(c: LiquidCost, s) -> np.ndarray:
    return c.price(s)


def liquid_hessian_factor(c: LiquidCost) -> float:
    return c.hessian_factor


def worst_case_loss(c: LiquidCost, K: int) -> float:
    return c.worst_case_loss(K)
