"""Command-line entry point: ``cfmarket <command> --config FILE``.

Every command writes a CSV with a commented metadata header.  Simulation
cells (cost, liquidity, sequence seed) are independent and may be spread over
worker processes; results are always assembled in a fixed order.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from cfmarket import MarketError, NonPositiveGapError, __version__, analysis
from cfmarket.config import ConfigError, ExperimentConfig, load_config
from cfmarket.cost import CostKind, LiquidCost
from cfmarket.dynamics import DynamicsKind, block_count, run
from cfmarket.equilibrium import market_clearing_price, solve_equilibrium
from cfmarket.market import Population

FLOAT_FMT = "%.12g"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x.value if isinstance(x, CostKind | DynamicsKind) else x)


@dataclass(frozen=True)
class _Cell:
    thetas: np.ndarray
    a: np.ndarray
    cost: CostKind
    b: float
    dynamics: DynamicsKind
    trades: int
    seed: int
    f_star: float
    record_every: int


def _simulate_cell(cell: _Cell):
    pop = Population.from_arrays(cell.thetas, cell.a)
    traj = run(pop, LiquidCost(cell.cost, cell.b), cell.dynamics, cell.trades, cell.seed, cell.f_star,
               record_every=cell.record_every)
    ts = np.array([r.t for r in traj.records])
    return ts, traj.gaps, traj.prices


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


class _Experiment:
    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.pop = cfg.population()
        self.mu_bar = market_clearing_price(self.pop)
        self._eq = {}

    def equilibrium(self, cost, b):
        key = (CostKind.parse(cost), float(b))
        if key not in self._eq:
            self._eq[key] = solve_equilibrium(self.pop, LiquidCost(*key))
        return self._eq[key]

    def simulate(self, dynamics=None, record_every=None):
        """Trajectories keyed by (cost, b); each value lists per-seed (ts, gaps, prices)."""
        cfg = self.cfg
        dyn = DynamicsKind.parse(dynamics or cfg.dynamics)
        every = record_every or cfg.record_every
        keys, cells = [], []
        for cost in cfg.costs:
            for b in cfg.b_grid:
                eq = self.equilibrium(cost, b)
                keys.append((cost, b))
                cells.extend(
                    _Cell(self.pop.thetas, self.pop.risk_aversions, cost, b, dyn, cfg.trades, seed, eq.f_star, every)
                    for seed in cfg.sequence_seeds
                )
        out = _map(_simulate_cell, cells, self.threads)
        n = cfg.n_sequences
        return {key: out[j * n:(j + 1) * n] for j, key in enumerate(keys)}


def cmd_clearing(exp: _Experiment):
    cfg = exp.cfg
    truth = cfg.truth()
    ne = analysis.n_eff(cfg.a)
    bound = analysis.sampling_error_bound(truth.sigma, cfg.K, ne, cfg.delta)
    rows = [(k, exp.mu_bar[k], truth.mu_true[k]) for k in range(cfg.K)]
    meta = [f"n_eff={FLOAT_FMT % ne}", f"sampling_bound={FLOAT_FMT % bound}", f"delta={FLOAT_FMT % cfg.delta}"]
    return ["k", "mu_bar", "mu_true"], rows, meta


def cmd_bias_sweep(exp: _Experiment):
    cfg = exp.cfg
    a_bar = analysis.harmonic_mean(cfg.a)
    rows = []
    for cost in cfg.costs:
        for b in cfg.b_grid:
            asym = float(np.linalg.norm(analysis.asymptotic_bias(exp.mu_bar, cost, b, a_bar, cfg.N)))
            try:
                eq = exp.equilibrium(cost, b)
                rows.append((cost, float(b), float(np.linalg.norm(eq.mu_star - exp.mu_bar)), asym, "ok"))
            except MarketError as exc:
                rows.append((cost, float(b), float("nan"), asym, type(exc).__name__))
    return ["cost", "b", "bias_norm", "asymptotic_bias_norm", "status"], rows, []


def cmd_simulate(exp: _Experiment):
    rows = []
    for (cost, b), runs in exp.simulate().items():
        mu_star = exp.equilibrium(cost, b).mu_star
        ts = runs[0][0]
        gaps = np.stack([r[1] for r in runs])
        perr = np.stack([np.linalg.norm(r[2] - mu_star, axis=1) for r in runs])
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(gaps > 0, np.log10(np.where(gaps > 0, gaps, 1.0)), np.nan)
        n = gaps.shape[0]
        half = 1.96 * lg.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(ts.size, np.nan)
        for j, t in enumerate(ts):
            rows.append((cost, float(b), int(t), float(gaps[:, j].mean()), float(perr[:, j].mean()), float(half[j])))
    return ["cost", "b", "t", "mean_gap", "mean_price_error", "ci95"], rows, []


def cmd_sigma(exp: _Experiment):
    cfg = exp.cfg
    dyn = DynamicsKind.parse(cfg.dynamics)
    nb = block_count(dyn, cfg.N, cfg.K)
    rows = []
    for (cost, b), runs in exp.simulate(record_every=1).items():
        mean_gap = dict(zip(runs[0][0].tolist(), np.mean([r[1] for r in runs], axis=0)))
        bounds = analysis.sigma_bounds(dyn, cost, exp.mu_bar, cfg.a, b)
        for t1, t2 in cfg.pairs:
            try:
                sig = analysis.empirical_sigma(mean_gap, t1, t2, nb)
            except NonPositiveGapError:
                sig = float("nan")
            rows.append((cost, dyn, float(b), t1, t2, sig, bounds.sigma_low, bounds.sigma_high))
    return ["cost", "dynamics", "b", "t1", "t2", "sigma_hat", "sigma_low", "sigma_high"], rows, []


def cmd_decompose(exp: _Experiment):
    cfg = exp.cfg
    mu_true = cfg.truth().mu_true
    rows = []
    for (cost, b), runs in exp.simulate(record_every=1).items():
        mu_star = exp.equilibrium(cost, b).mu_star
        for t in cfg.snapshot_times:
            parts = [analysis.error_decomposition(mu_true, exp.mu_bar, mu_star, r[2][t]) for r in runs]
            mean = [float(np.mean([getattr(p, f) for p in parts])) for f in ("sampling", "bias", "convergence", "total")]
            rows.append((cost, float(b), int(t), *mean))
    return ["cost", "b", "t", "sampling", "bias", "convergence", "total"], rows, []


COMMANDS = {
    "clearing": cmd_clearing,
    "bias-sweep": cmd_bias_sweep,
    "simulate": cmd_simulate,
    "sigma": cmd_sigma,
    "decompose": cmd_decompose,
}


def render_csv(command: str, cfg: ExperimentConfig, header, rows, meta) -> str:
    buf = io.StringIO()
    buf.write(f"# cfmarket {__version__}\n")
    buf.write(f"# command={command} config_hash={cfg.digest()}\n")
    seeds = cfg.sequence_seeds
    buf.write(f"# belief_seed={cfg.belief_seed} sequence_seeds={seeds[0]}..{seeds[-1]}\n")
    for line in meta:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def run_command(command: str, cfg: ExperimentConfig, threads: int = 1) -> str:
    exp = _Experiment(cfg, threads)
    header, rows, meta = COMMANDS[command](exp)
    return render_csv(command, cfg, header, rows, meta)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfmarket", description="Cost-function prediction market experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--out", help="output CSV path (default: config output, else stdout)")
        sp.add_argument("--seed", type=int, help="override belief_seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for simulation cells")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_overrides(belief_seed=args.seed)
        text = run_command(args.command, cfg, max(1, args.threads))
    except (ConfigError, MarketError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.output
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
