import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmarket.cost import CostKind, LiquidCost
from cfmarket.equilibrium import (
    _Dual,
    dual_objective,
    lmsr_closed_form,
    market_clearing_price,
    solve_equilibrium,
    verify_equilibrium,
)
from cfmarket.expfam import mean_payoff
from cfmarket.market import Population, TraderParams

from conftest import rel_err


def random_pop(seed, N=6, K=4, scale=1.5, vary_a=True):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 3.0, N) if vary_a else 1.0
    return Population.from_arrays(scale * rng.normal(size=(N, K)), a)


def test_clearing_price_examples():
    theta = np.array([0.5, -1.0, 2.0])
    pop = Population.from_arrays(np.tile(theta, (4, 1)), [1, 2, 3, 4])
    np.testing.assert_allclose(market_clearing_price(pop), mean_payoff(theta), atol=1e-15)
    t1, t2 = np.array([1.0, 0.0, -1.0]), np.array([-2.0, 0.5, 0.3])
    pop = Population([TraderParams(t1, 1.0), TraderParams(t2, 3.0)])
    np.testing.assert_allclose(market_clearing_price(pop), mean_payoff(0.75 * t1 + 0.25 * t2), atol=1e-15)


def test_closed_form_examples():
    t1, t2 = np.array([1.0, 0.0, -1.0]), np.array([-2.0, 0.5, 0.3])
    pop = Population([TraderParams(t1), TraderParams(t2)])
    np.testing.assert_allclose(lmsr_closed_form(pop, 1.0), mean_payoff((t1 + t2) / 3), atol=1e-15)
    np.testing.assert_allclose(lmsr_closed_form(pop, 0.0), market_clearing_price(pop), atol=1e-15)
    np.testing.assert_allclose(lmsr_closed_form(pop, 1e9), np.full(3, 1 / 3), atol=1e-8)
    with pytest.raises(ValueError):
        lmsr_closed_form(pop, LiquidCost("IND", 1.0))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from([None, "LMSR", "IND"]))
def test_dual_gradient_along_tangent(seed, kind):
    pop = random_pop(seed)
    cost = None if kind is None else LiquidCost(kind, 0.3)
    rng = np.random.default_rng(seed + 1)
    mu = rng.dirichlet(np.full(pop.K, 3.0))
    d = rng.normal(size=pop.K)
    d -= d.mean()
    h = 1e-6
    fd = (dual_objective(pop, cost, mu + h * d)[0] - dual_objective(pop, cost, mu - h * d)[0]) / (2 * h)
    exact = dual_objective(pop, cost, mu)[1] @ d
    assert abs(fd - exact) <= 1e-6 * max(abs(exact), 1e-2)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["LMSR", "IND"]))
def test_dual_hessian_along_tangent(seed, kind):
    pop = random_pop(seed)
    cost = LiquidCost(kind, 0.3)
    rng = np.random.default_rng(seed + 2)
    mu = rng.dirichlet(np.full(pop.K, 3.0))
    d = rng.normal(size=pop.K)
    d -= d.mean()
    h = 1e-5
    fd = (dual_objective(pop, cost, mu + h * d)[1] - dual_objective(pop, cost, mu - h * d)[1]) / (2 * h)
    curv = _Dual(pop, cost).curvature(mu, np.log1p(-mu))
    exact = curv * d
    exact -= exact.mean()
    assert rel_err(fd, exact) < 1e-5


def test_dual_is_minimized_at_clearing_price():
    pop = random_pop(3)
    mu_bar = market_clearing_price(pop)
    v0 = dual_objective(pop, None, mu_bar)[0]
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert v0 <= dual_objective(pop, None, rng.dirichlet(np.ones(pop.K)))[0]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), b=st.sampled_from([1e-3, 0.05, 0.3, 2.0]))
def test_solver_matches_lmsr_closed_form(seed, b):
    pop = random_pop(seed)
    res = solve_equilibrium(pop, LiquidCost("LMSR", b))
    np.testing.assert_allclose(res.mu_star, lmsr_closed_form(pop, b), atol=1e-8)
    assert res.grad_norm <= 1e-10


def test_single_trader_ind_residual():
    t = TraderParams(np.array([1.5, -0.5, 0.2, -1.0]), 1.0)
    pop = Population([t])
    c = LiquidCost("IND", 0.5)
    res = solve_equilibrium(pop, c)
    r = (t.theta - np.log(res.mu_star)) / t.a
    r = r + (c.b * np.log(res.mu_star / (1 - res.mu_star)) - r)[0]
    np.testing.assert_allclose(mean_payoff(t.theta - t.a * r), c.price(r), atol=1e-6)


@pytest.mark.parametrize("kind", list(CostKind))
def test_verify_equilibrium(kind):
    pop = random_pop(11)
    c = LiquidCost(kind, 0.2)
    res = solve_equilibrium(pop, c)
    assert verify_equilibrium(pop, c, res.mu_star) <= 1e-9
    d = np.zeros(pop.K)
    d[0], d[1] = 0.01, -0.01
    assert verify_equilibrium(pop, c, res.mu_star + d) > 1e-10


@pytest.mark.parametrize("kind", list(CostKind))
def test_uniqueness_from_different_starts(kind):
    pop = random_pop(5)
    c = LiquidCost(kind, 0.4)
    a = solve_equilibrium(pop, c, mu0=np.array([0.7, 0.1, 0.1, 0.1]))
    b = solve_equilibrium(pop, c, mu0=np.array([0.05, 0.05, 0.1, 0.8]))
    np.testing.assert_allclose(a.mu_star, b.mu_star, atol=2e-10)
    assert a.f_star == pytest.approx(b.f_star, abs=1e-10)


@pytest.mark.parametrize("kind", list(CostKind))
def test_bias_monotone_and_linearly_bounded(desk_pop, kind):
    mu_bar = market_clearing_price(desk_pop)
    grid = 2.0 ** np.arange(-10, 0)
    bias = np.array([np.linalg.norm(solve_equilibrium(desk_pop, LiquidCost(kind, b)).mu_star - mu_bar) for b in grid])
    assert np.all(np.diff(bias) >= -1e-9)
    ratio = bias / grid
    assert ratio.max() / ratio.min() < 2.0


@pytest.mark.parametrize("kind", list(CostKind))
def test_tiny_and_huge_liquidity_limits(desk_pop, kind):
    mu_bar = market_clearing_price(desk_pop)
    np.testing.assert_allclose(solve_equilibrium(desk_pop, LiquidCost(kind, 1e-8)).mu_star, mu_bar, atol=1e-6)
    if kind == "LMSR":
        np.testing.assert_allclose(solve_equilibrium(desk_pop, LiquidCost(kind, 1e5)).mu_star, 0.2, atol=1e-4)


def test_f_star_matches_primal_potential(desk_pop):
    from cfmarket.dynamics import run

    c = LiquidCost("IND", 0.2)
    res = solve_equilibrium(desk_pop, c)
    traj = run(desk_pop, c, "ASD", 1000, 0, res.f_star)
    assert traj.gaps.min() >= -1e-9
    assert traj.gaps[-1] < 1e-8
