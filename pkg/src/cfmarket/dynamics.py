"""Trade simulation as randomized block-coordinate descent on the potential F.

ASD: a uniformly random trader buys her utility-maximizing bundle.
SSD: a uniformly random trader trades a uniformly random single security.
Each trade exactly minimizes F over the chosen block, so F never increases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from cfmarket import BracketFailure, MaxIterationsError, expfam
from cfmarket.cost import CostKind, LiquidCost
from cfmarket.market import MarketState, Population, TraderParams, trader_terms

BR_TOL = 1e-12
BR_MAX_ITER = 100


class DynamicsKind(str, enum.Enum):
    ASD = "ASD"
    SSD = "SSD"

    @classmethod
    def parse(cls, value) -> "DynamicsKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown dynamics {value!r}; expected ASD or SSD") from None


def block_count(kind, N: int, K: int) -> int:
    kind = DynamicsKind.parse(kind)
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    return N if kind is DynamicsKind.ASD else N * K


def _block_objective(t: TraderParams, r_i, s, c: LiquidCost, delta) -> float:
    return expfam.log_partition(t.theta - t.a * (r_i + delta)) / t.a + c.value(s + delta)


def best_response_all(
    t: TraderParams, r_i, s, c: LiquidCost, tol: float = BR_TOL, max_iter: int = BR_MAX_ITER, fast: bool = True
) -> np.ndarray:
    """Utility-maximizing bundle for one trader given the market state.

    The stationarity condition is  softmax(theta - a(r + delta)) = price(s + delta).
    LMSR has a closed form (pinned to zero total shares); otherwise damped
    Newton with the exact block Hessian.
    """
    r_i = np.asarray(r_i, dtype=float)
    s = np.asarray(s, dtype=float)
    if fast and c.kind is CostKind.LMSR:
        u = t.theta - t.a * r_i - s / c.b
        u = u - u.mean()
        return u / (t.a + 1.0 / c.b)
    return _newton_block(t, r_i, s, c, tol, max_iter)


def _newton_block(t, r_i, s, c, tol, max_iter):
    a, b = t.a, c.b
    K = s.size
    delta = np.zeros(K)
    x = t.theta - a * r_i
    val = _block_objective(t, r_i, s, c, delta)
    for _ in range(max_iter):
        belief = expfam.mean_payoff(x - a * delta)
        price = c.price(s + delta)
        g = price - belief
        if np.linalg.norm(g) <= tol:
            return delta
        H = a * (np.diag(belief) - np.outer(belief, belief)) + c.hessian(s + delta)
        if c.kind is CostKind.LMSR:
            # both terms annihilate the ones direction; keep sum(delta) = 0
            H = H + np.full((K, K), 1.0 / K)
        step = -np.linalg.solve(H, g)
        slope = float(g @ step)
        noise = 1e-13 * max(1.0, abs(val))
        tstep = 1.0
        while True:
            cand = delta + tstep * step
            cval = _block_objective(t, r_i, s, c, cand)
            if cval <= val + 1e-4 * tstep * slope:
                break
            if tstep == 1.0 and abs(cval - val) <= noise:
                # decrease below rounding of the objective; plain Newton step
                break
            if tstep < 1e-10:
                break
            tstep *= 0.5
        if tstep < 1e-10 and cval > val:
            if np.linalg.norm(g) <= 1e3 * tol:
                return delta
            break
        delta, val = cand, cval
    raise MaxIterationsError(f"best response did not converge (|g|={np.linalg.norm(g):.3e})")


def _single_derivative(t, x_k, others_lse, c, s_k, others_s, delta):
    # d/d delta of F_i(-r - delta e_k) + C_b(s + delta e_k)
    belief = expit(x_k - t.a * delta - others_lse)
    if c.kind is CostKind.LMSR:
        price = expit((s_k + delta) / c.b - others_s)
        dprice = price * (1 - price) / c.b
    else:
        price = expit((s_k + delta) / c.b)
        dprice = price * (1 - price) / c.b
    return price - belief, dprice + t.a * belief * (1 - belief)


def best_response_single(
    t: TraderParams, r_i, s, k: int, c: LiquidCost, tol: float = BR_TOL, max_iter: int = BR_MAX_ITER
) -> float:
    """Utility-maximizing trade in security k alone.

    The derivative is price_k - belief_k, strictly increasing in the trade.
    Both sides are logistic in the trade size, which gives the starting point;
    a bracketed Newton iteration then polishes it.
    """
    r_i = np.asarray(r_i, dtype=float)
    s = np.asarray(s, dtype=float)
    K = s.size
    if not 0 <= k < K:
        raise IndexError(f"security index {k} out of range for K={K}")
    x = t.theta - t.a * r_i
    others = np.delete(np.arange(K), k)
    others_lse = logsumexp(x[others]) if K > 1 else -np.inf
    others_s = logsumexp(s[others] / c.b) if K > 1 else -np.inf
    deriv = lambda d: _single_derivative(t, x[k], others_lse, c, s[k], others_s, d)  # noqa: E731

    g0, _ = deriv(0.0)
    if abs(g0) <= tol:
        return 0.0
    # logit of belief is linear in delta with slope -a, logit of the price
    # (LMSR or IND) is linear with slope 1/b, so their crossing is explicit
    u = x[k] - others_lse
    v = s[k] / c.b - (others_s if c.kind is CostKind.LMSR else 0.0)
    guess = (u - v) / (t.a + 1.0 / c.b) if np.isfinite(u - v) else 0.0

    bound = 1e3 * (1.0 + np.linalg.norm(t.theta)) * max(1.0, c.b) + abs(guess)
    lo, hi = -bound, bound
    if not (deriv(lo)[0] < 0 < deriv(hi)[0]):
        raise BracketFailure(f"no sign change of the derivative within |delta| <= {bound:g}")
    d = float(np.clip(guess, lo, hi))
    for _ in range(max_iter):
        g, h = deriv(d)
        if abs(g) <= tol:
            return d
        if g > 0:
            hi = d
        else:
            lo = d
        nd = d - g / h if h > 0 else 0.5 * (lo + hi)
        if not lo < nd < hi:
            nd = 0.5 * (lo + hi)
        if nd == d:
            return d
        d = nd
    raise MaxIterationsError(f"single-security best response did not converge (g={g:.3e})")


@dataclass
class TradeRecord:
    t: int
    mu: np.ndarray
    f: float
    gap: float


@dataclass
class Trajectory:
    kind: DynamicsKind
    b: float
    seed: int | None
    f_star: float
    provisional: bool = False
    records: list[TradeRecord] = field(default_factory=list)
    final_state: MarketState | None = None

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.records])

    @property
    def potentials(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    @property
    def prices(self) -> np.ndarray:
        return np.stack([r.mu for r in self.records])

    def __len__(self) -> int:
        return len(self.records)


class Simulator:
    """Stateful trade engine for one market; single writer of its state.

    Trader terms F_i(-r_i) are cached so each trade costs O(K) potential work.
    ``check`` turns on the conservation and monotonicity assertions.
    """

    def __init__(self, pop: Population, cost: LiquidCost, kind=DynamicsKind.ASD, check: bool = False):
        self.pop = pop
        self.cost = cost
        self.kind = DynamicsKind.parse(kind)
        self.check = check
        self.state = MarketState.empty(pop.N, pop.K)
        self._terms = trader_terms(pop, self.state.allocations)
        self._c_value = cost.value(self.state.shares)

    @property
    def potential(self) -> float:
        return float(self._terms.sum() + self._c_value)

    @property
    def price(self) -> np.ndarray:
        return self.cost.price(self.state.shares)

    def step(self, rng: np.random.Generator) -> float:
        """Execute one trade; returns the new potential value."""
        pop, c, st = self.pop, self.cost, self.state
        N, K = pop.N, pop.K
        blk = int(rng.integers(block_count(self.kind, N, K)))
        if self.kind is DynamicsKind.ASD:
            i = blk
            delta = best_response_all(pop[i], st.allocations[i], st.shares, c)
        else:
            i, k = divmod(blk, K)
            delta = np.zeros(K)
            delta[k] = best_response_single(pop[i], st.allocations[i], st.shares, k, c)
        return self.apply(i, delta)

    def apply(self, i: int, delta) -> float:
        st, c = self.state, self.cost
        delta = np.asarray(delta, dtype=float)
        if not np.any(delta):
            return self.potential
        before = self.potential if self.check else None
        new_shares = st.shares + delta
        new_c = c.value(new_shares)
        st.allocations[i] += delta
        st.cash[i] -= new_c - self._c_value
        st.shares = new_shares
        self._c_value = new_c
        t = self.pop[i]
        self._terms[i] = expfam.log_partition(t.theta - t.a * st.allocations[i]) / t.a
        f = self.potential
        if self.check:
            st.check(c)
            assert f <= before + 1e-12 * max(1.0, abs(before)), f"potential increased: {before} -> {f}"
        return f


def step(state: MarketState, pop: Population, cost: LiquidCost, kind, rng) -> tuple[MarketState, TradeRecord]:
    """Functional single trade: returns a new state and its record (gap relative to 0)."""
    sim = Simulator(pop, cost, kind)
    sim.state = state.copy()
    sim._terms = trader_terms(pop, sim.state.allocations)
    sim._c_value = cost.value(sim.state.shares)
    f = sim.step(rng)
    return sim.state, TradeRecord(-1, sim.price, f, np.nan)


def run(
    pop: Population,
    cost: LiquidCost,
    kind,
    trades: int,
    seed,
    f_star: float | None = None,
    check: bool = False,
    record_every: int = 1,
) -> Trajectory:
    """Simulate ``trades`` trades from the empty market.

    Without ``f_star`` gaps are measured against the best potential seen and
    the trajectory is flagged provisional.
    """
    if trades < 0:
        raise ValueError("trades must be nonnegative")
    sim = Simulator(pop, cost, kind, check=check)
    rng = np.random.default_rng(seed)
    fs = [sim.potential]
    mus = [sim.price]
    ts = [0]
    for t in range(1, trades + 1):
        f = sim.step(rng)
        if t % record_every == 0 or t == trades:
            fs.append(f)
            mus.append(sim.price)
            ts.append(t)
    provisional = f_star is None
    ref = min(fs) if provisional else f_star
    records = [TradeRecord(t, mu, f, f - ref) for t, mu, f in zip(ts, mus, fs)]
    return Trajectory(sim.kind, cost.b, seed, ref, provisional, records, sim.state)
