import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from cfmarket.cost import LiquidCost
from cfmarket.dynamics import best_response_all
from cfmarket.expfam import log_partition, mean_payoff
from cfmarket.market import (
    MarketState,
    Population,
    TraderParams,
    expected_utility,
    ground_truth,
    sample_beliefs,
    total_potential,
    trader_conjugate,
    trader_potential,
    trader_potential_grad,
)

from conftest import fd_grad, interior_simplex, rel_err, vectors


def test_trader_potential_examples():
    assert trader_potential(TraderParams(np.zeros(3), 1.0), np.zeros(3)) == pytest.approx(np.log(3))
    assert trader_potential(TraderParams(np.zeros(4), 2.0), np.zeros(4)) == pytest.approx(0.5 * np.log(4))


def test_trader_conjugate_examples():
    mu = np.full(5, 0.2)
    assert trader_conjugate(TraderParams(np.zeros(5), 1.0), mu) == pytest.approx(-np.log(5))
    assert trader_conjugate(TraderParams(np.zeros(5), 2.0), mu) == pytest.approx(-0.5 * np.log(5))


def test_expected_utility_examples():
    t = TraderParams(np.array([0.4, -0.2, 1.0]), 2.5)
    assert expected_utility(t, np.zeros(3), 0.0) == pytest.approx(-1 / 2.5)
    r = np.array([0.3, -0.1, 0.5])
    u0, u1 = expected_utility(t, r, 0.2), expected_utility(t, r, 1.2)
    assert u1 / u0 == pytest.approx(np.exp(-t.a))
    # -aU = E_p[exp(-a(r_w + c))] with p = softmax(theta)
    p = mean_payoff(t.theta)
    assert -t.a * u0 == pytest.approx(p @ np.exp(-t.a * (r + 0.2)), rel=1e-12)


def test_invalid_traders():
    with pytest.raises(ValueError):
        TraderParams(np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        TraderParams(np.array([np.nan, 0.0]), 1.0)
    with pytest.raises(ValueError):
        Population([TraderParams(np.zeros(2)), TraderParams(np.zeros(3))])


@settings(max_examples=40)
@given(theta=vectors(4), x=vectors(4, -2, 2), a=st.floats(0.2, 5))
def test_potential_gradient_by_finite_differences(theta, x, a):
    t = TraderParams(theta, a)
    assert rel_err(fd_grad(lambda y: trader_potential(t, y), x), trader_potential_grad(t, x)) < 1e-6


@settings(max_examples=40)
@given(theta=vectors(4), x=vectors(4, -2, 2), a=st.floats(0.2, 5))
def test_conjugate_identity(theta, x, a):
    t = TraderParams(theta, a)
    mu = trader_potential_grad(t, x)
    if mu.min() < 1e-12:
        return
    assert trader_conjugate(t, mu) == pytest.approx(mu @ x - trader_potential(t, x), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(theta=vectors(3), r=vectors(3, -1, 1), mu=interior_simplex(3, 3, 0.05), d=vectors(3, -1, 1), a=st.floats(0.3, 3))
def test_utility_and_potential_share_argmax(theta, r, mu, d, a):
    t = TraderParams(theta, a)
    if np.linalg.norm(d) < 1e-3:
        return
    neg_u = lambda s: -expected_utility(t, r + s * d, -(s * d) @ mu)  # noqa: E731
    pot = lambda s: trader_potential(t, -(r + s * d)) + (s * d) @ mu  # noqa: E731
    opts = dict(bounds=(-30, 30), method="bounded", options={"xatol": 1e-10})
    s1 = minimize_scalar(neg_u, **opts).x
    s2 = minimize_scalar(pot, **opts).x
    assert s1 == pytest.approx(s2, abs=1e-5)


def test_total_potential_at_empty_state(desk_pop):
    c = LiquidCost("IND", 0.3)
    st0 = MarketState.empty(desk_pop.N, desk_pop.K)
    expected = sum(log_partition(t.theta) / t.a for t in desk_pop) + c.value(np.zeros(desk_pop.K))
    assert total_potential(desk_pop, c, st0) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=30)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["LMSR", "IND"]))
def test_total_potential_midpoint_convexity(seed, kind):
    rng = np.random.default_rng(seed)
    pop = Population.from_arrays(rng.normal(size=(4, 3)), rng.uniform(0.5, 2, 4))
    c = LiquidCost(kind, 0.2)
    A, B = rng.normal(size=(2, 4, 3))

    def F(alloc):
        return total_potential(pop, c, MarketState(alloc, np.zeros(4), alloc.sum(axis=0)))

    assert F(0.5 * (A + B)) <= 0.5 * (F(A) + F(B)) + 1e-12


def test_single_trader_lmsr_minimizer():
    t = TraderParams(np.array([1.2, -0.4, 0.3]), 1.5)
    c = LiquidCost("LMSR", 0.4)
    r = best_response_all(t, np.zeros(3), np.zeros(3), c, fast=False)
    np.testing.assert_allclose(trader_potential_grad(t, -r), c.price(r), atol=1e-10)


def test_market_state_bookkeeping():
    st0 = MarketState.empty(3, 2)
    assert not st0.allocations.any() and not st0.cash.any() and not st0.shares.any()
    st0.check(LiquidCost("LMSR", 1.0))
    bad = st0.copy()
    bad.shares = bad.shares + 1.0
    with pytest.raises(AssertionError):
        bad.check()


def test_ground_truth_settings():
    np.testing.assert_allclose(ground_truth("uniform", 3).mu_true, np.full(3, 1 / 3))
    gt = ground_truth("single_peaked", 5, nu=0.02)
    assert gt.mu_true.sum() == pytest.approx(1.0)
    assert gt.mu_true[0] == pytest.approx(0.92)
    assert gt.sigma == 5.0
    with pytest.raises(ValueError):
        ground_truth("single_peaked", 5, nu=0.3)


def test_sample_beliefs_contracts():
    gt = ground_truth("single_peaked", 4, sigma=0.0)
    pop = sample_beliefs(gt, 6, 1)
    np.testing.assert_array_equal(pop.thetas, np.tile(gt.theta_true, (6, 1)))
    gt = ground_truth("uniform", 4)
    np.testing.assert_array_equal(sample_beliefs(gt, 5, 42).thetas, sample_beliefs(gt, 5, 42).thetas)
    assert not np.array_equal(sample_beliefs(gt, 5, 42).thetas, sample_beliefs(gt, 5, 43).thetas)


def test_sample_beliefs_monte_carlo_mean():
    gt = ground_truth("single_peaked", 5)
    n = 100_000
    pop = sample_beliefs(gt, n, 7)
    err = np.abs(pop.thetas.mean(axis=0) - gt.theta_true)
    assert np.all(err <= 4 * gt.sigma / np.sqrt(n))
