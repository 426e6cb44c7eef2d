"""Experiment configuration: a flat ``key = value`` file with one section.

Example::

    [experiment]
    K = 5
    N = 10
    risk_aversions = 1
    mode = single_peaked
    nu = 0.02
    sigma = 5
    belief_seed = 0
    costs = LMSR, IND
    b_grid = 0.05, 0.1, 0.2
    dynamics = ASD
    trades = 600
    n_sequences = 20
    sequence_seed_base = 0

Lists are comma separated; ``t_pairs`` is written ``100:200, 200:400``.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from cfmarket.cost import CostKind
from cfmarket.dynamics import DynamicsKind
from cfmarket.market import GroundTruth, Population, ground_truth, sample_beliefs

SECTION = "experiment"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 5
    N: int = 10
    risk_aversions: tuple[float, ...] = (1.0,)
    mode: str = "single_peaked"
    nu: float = 0.02
    theta: tuple[float, ...] | None = None
    sigma: float | None = None
    belief_seed: int = 0
    costs: tuple[CostKind, ...] = (CostKind.LMSR, CostKind.IND)
    b_grid: tuple[float, ...] = (0.05, 0.1, 0.2)
    dynamics: DynamicsKind = DynamicsKind.ASD
    trades: int = 600
    n_sequences: int = 20
    sequence_seed_base: int = 0
    delta: float = 0.05
    t_pairs: tuple[tuple[int, int], ...] = ()
    snapshots: tuple[int, ...] = ()
    record_every: int = 1
    output: str | None = None
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        # normalize so configs built in code hash like parsed ones
        norm = {
            "risk_aversions": tuple(float(a) for a in np.atleast_1d(self.risk_aversions)),
            "costs": tuple(CostKind.parse(c) for c in self.costs),
            "b_grid": tuple(float(b) for b in self.b_grid),
            "dynamics": DynamicsKind.parse(self.dynamics),
            "theta": None if self.theta is None else tuple(float(x) for x in self.theta),
            "t_pairs": tuple((int(t1), int(t2)) for t1, t2 in self.t_pairs),
            "snapshots": tuple(int(t) for t in self.snapshots),
            "sigma": None if self.sigma is None else float(self.sigma),
            "nu": float(self.nu),
            "delta": float(self.delta),
        }
        for k, v in norm.items():
            object.__setattr__(self, k, v)
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise ConfigError(_where(self.source, name) + msg)

        if self.K < 2:
            bad("K", "need at least two securities")
        if self.N < 1:
            bad("N", "need at least one trader")
        if len(self.risk_aversions) not in (1, self.N):
            bad("risk_aversions", f"give one value or N={self.N} values")
        if any(a <= 0 for a in self.risk_aversions):
            bad("risk_aversions", "must be positive")
        if self.mode not in ("uniform", "single_peaked", "explicit"):
            bad("mode", f"unknown mode {self.mode!r}")
        if self.mode == "single_peaked" and not (0 < self.nu and self.nu * (self.K - 1) < 1):
            bad("nu", f"need 0 < nu*(K-1) < 1, got nu={self.nu}")
        if self.mode == "explicit" and (self.theta is None or len(self.theta) != self.K):
            bad("theta", f"explicit mode needs K={self.K} values")
        if self.sigma is not None and self.sigma < 0:
            bad("sigma", "must be nonnegative")
        if not self.b_grid:
            bad("b_grid", "must not be empty")
        if any(b <= 0 for b in self.b_grid):
            bad("b_grid", "liquidities must be positive")
        if not self.costs:
            bad("costs", "must not be empty")
        if self.trades < 0:
            bad("trades", "must be nonnegative")
        if self.n_sequences < 1:
            bad("n_sequences", "must be positive")
        if not 0 < self.delta < 1:
            bad("delta", "must lie in (0, 1)")
        if self.record_every < 1:
            bad("record_every", "must be positive")
        for t1, t2 in self.t_pairs:
            if not 0 <= t1 < t2 <= self.trades:
                bad("t_pairs", f"need 0 <= t1 < t2 <= trades, got {t1}:{t2}")
        if any(not 0 <= t <= self.trades for t in self.snapshots):
            bad("snapshots", "snapshots must lie in [0, trades]")

    @property
    def a(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.risk_aversions, dtype=float), (self.N,)).copy()

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return self.t_pairs or ((self.trades // 2, self.trades),)

    @property
    def snapshot_times(self) -> tuple[int, ...]:
        return self.snapshots or (self.trades,)

    @property
    def sequence_seeds(self) -> list[int]:
        return [self.sequence_seed_base + j for j in range(self.n_sequences)]

    def truth(self) -> GroundTruth:
        if self.mode == "explicit":
            return GroundTruth(np.asarray(self.theta, dtype=float), 0.0 if self.sigma is None else self.sigma)
        return ground_truth(self.mode, self.K, self.nu, self.sigma)

    def population(self) -> Population:
        return sample_beliefs(self.truth(), self.N, self.belief_seed, self.a)

    def digest(self) -> str:
        items = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self) if f.name not in ("source", "output")]
        return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _where(source, name) -> str:
    if source is None:
        return f"field '{name}': "
    line = _find_line(source, name)
    return f"{source}:{line}: field '{name}': " if line else f"{source}: field '{name}': "


def _find_line(path, name):
    try:
        text = Path(path).read_text()
    except OSError:
        return None
    pat = re.compile(rf"^\s*{re.escape(name)}\s*[=:]", re.IGNORECASE)
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


def _floats(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _pairs(s):
    out = []
    for item in s.split(","):
        if item.strip():
            t1, t2 = item.split(":")
            out.append((int(t1), int(t2)))
    return tuple(out)


def _optional_float(s):
    return None if s.strip().lower() in ("", "none", "default") else float(s)


_PARSERS = {
    "K": int,
    "N": int,
    "risk_aversions": _floats,
    "mode": lambda s: s.strip().lower(),
    "nu": float,
    "theta": _floats,
    "sigma": _optional_float,
    "belief_seed": int,
    "costs": lambda s: tuple(CostKind.parse(x) for x in s.split(",") if x.strip()),
    "b_grid": _floats,
    "dynamics": DynamicsKind.parse,
    "trades": int,
    "n_sequences": int,
    "sequence_seed_base": int,
    "delta": float,
    "t_pairs": _pairs,
    "snapshots": _ints,
    "record_every": int,
    "output": str,
}
_CANONICAL = {k.lower(): k for k in _PARSERS}


def load_config(path) -> ExperimentConfig:
    path = str(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not parser.has_section(SECTION):
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    kwargs = {}
    for key, raw in parser.items(SECTION):
        name = _CANONICAL.get(key.lower())
        if name is None:
            raise ConfigError(_where(path, key) + "unknown field")
        try:
            kwargs[name] = _PARSERS[name](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(_where(path, name) + f"cannot parse {raw!r} ({exc})") from None
    return ExperimentConfig(source=path, **kwargs)
