"""Run one lifecycle per paradigm on the default scenario and write the outputs.

    python scripts/run_default.py --seed 0 --out runs/default
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from selfevolve.config import RunConfig
from selfevolve.harness.cli import write_run
from selfevolve.harness.experiment import PARADIGMS, prepare


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/default")
    args = parser.parse_args()
    print(f"seed: {args.seed}\nout: {args.out}")
    for mode in PARADIGMS + ("auto",):
        cfg = RunConfig(seed=args.seed)
        cfg = replace(cfg, evolution=replace(cfg.evolution, mode=mode))
        summary = write_run(Path(args.out) / mode, prepare(cfg).run(), "csv")
        keep = ("episodes", "promotions", "rejections", "syntheses", "seed_test_fitness", "final_test_fitness", "cells")
        print(mode, json.dumps({k: summary[k] for k in keep}, sort_keys=True))


if __name__ == "__main__":
    main()
