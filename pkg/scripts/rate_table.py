"""Empirical strong convexity against its asymptotic bounds, for every
(cost, dynamics) pair on the desk setup.  Prints a plain-text table.

    python scripts/rate_table.py --seeds 20
"""

import argparse

import numpy as np

from cfmarket import NonPositiveGapError
from cfmarket.analysis import empirical_sigma, sigma_bounds
from cfmarket.cost import LiquidCost
from cfmarket.dynamics import block_count, run
from cfmarket.equilibrium import market_clearing_price, solve_equilibrium
from cfmarket.market import ground_truth, sample_beliefs


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--belief-seed", type=int, default=0)
    p.add_argument("--b", type=float, nargs="*", default=[0.0125, 0.025, 0.05])
    args = p.parse_args()

    pop = sample_beliefs(ground_truth("single_peaked", 5), 10, args.belief_seed)
    mu_bar = market_clearing_price(pop)
    print(f"{'cost':5s} {'dyn':4s} {'b':>7s} {'low/b':>7s} {'hat/b':>7s} {'high/b':>7s}")
    for dyn in ("ASD", "SSD"):
        nb = block_count(dyn, pop.N, pop.K)
        for cost in ("LMSR", "IND"):
            for b in args.b:
                c = LiquidCost(cost, b)
                # long enough for the gap to shrink by roughly e^-8
                T = int(round(4 * nb / b))
                f_star = solve_equilibrium(pop, c).f_star
                g = np.mean([run(pop, c, dyn, T, s, f_star).gaps for s in range(args.seeds)], axis=0)
                sb = sigma_bounds(dyn, cost, mu_bar, pop.risk_aversions, b)
                try:
                    hat = empirical_sigma(dict(enumerate(g)), T // 2, T, nb) / b
                except NonPositiveGapError:
                    hat = float("nan")
                high = "" if sb.sigma_high is None else f"{sb.sigma_high / b:7.3f}"
                print(f"{cost:5s} {dyn:4s} {b:7.4f} {sb.sigma_low / b:7.3f} {hat:7.3f} {high:>7s}")


if __name__ == "__main__":
    main()
