"""Seven-criteria comparison of CL, RL and GA over seed groups.

    python scripts/compare_paradigms.py --groups 10 --out runs/compare

Each group runs all three paradigms on three consecutive seeds; the script
writes one criteria JSON/CSV per group plus a tally of per-dimension winners.
"""

import argparse
import collections
import json
from pathlib import Path

from selfevolve.config import RunConfig
from selfevolve.harness.experiment import compare_paradigms, criteria_rows
from selfevolve.harness.report import CRITERIA_COLUMNS, emit_report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--groups", type=int, default=10)
    parser.add_argument("--seeds-per-group", type=int, default=3)
    parser.add_argument("--out", default="runs/compare")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"groups: {args.groups}\nout: {out}")
    tally = collections.defaultdict(collections.Counter)
    k = args.seeds_per_group
    for g in range(args.groups):
        seeds = list(range(g * k, (g + 1) * k))
        report, _ = compare_paradigms(RunConfig(), seeds)
        (out / f"group{g:02d}.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        emit_report(criteria_rows(report), out / f"group{g:02d}.csv", "csv", CRITERIA_COLUMNS)
        for dim in report["dimensions"]:
            tally[dim["dimension"]][dim["winner"]] += 1
        print(f"group {g}: seeds {seeds} done")
    for dim, counts in tally.items():
        print(f"{dim:<24} " + ", ".join(f"{w}: {n}" for w, n in counts.most_common()))
    (out / "winners.json").write_text(json.dumps({d: dict(c) for d, c in tally.items()}, sort_keys=True, indent=1) + "\n")


if __name__ == "__main__":
    main()
