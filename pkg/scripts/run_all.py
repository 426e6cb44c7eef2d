"""Run every CLI command on every config in configs/ and collect the CSVs.

    python scripts/run_all.py --out results --threads 4
"""

import argparse
import time
from pathlib import Path

from cfmarket.cli import COMMANDS, run_command
from cfmarket.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--configs", default=str(ROOT / "configs"))
    p.add_argument("--out", default=str(ROOT / "results"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--commands", nargs="*", default=list(COMMANDS))
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in sorted(Path(args.configs).glob("*.ini")):
        cfg = load_config(path)
        for cmd in args.commands:
            t0 = time.perf_counter()
            text = run_command(cmd, cfg, args.threads)
            dest = out / f"{path.stem}_{cmd}.csv"
            dest.write_text(text)
            print(f"{dest.name:32s} {time.perf_counter() - t0:7.1f}s")


if __name__ == "__main__":
    main()
