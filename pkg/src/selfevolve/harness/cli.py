"""Command line entry point: ``selfevolve <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..config import MODES, load_config
from ..errors import SelfEvolveError
from ..taskenv import export_taskcraft, generate_tasks, ingest_taskcraft, load_taskset, save_taskset
from .checkpoint import checkpoint_load, checkpoint_save
from .experiment import collect, compare_paradigms, criteria_rows, prepare
from .report import CRITERIA_COLUMNS, FORMATS, TELEMETRY_COLUMNS, emit_report


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")


def _load(args) -> "RunConfig":  # noqa: F821
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _provenance(**items) -> None:
    for key, value in items.items():
        print(f"{key}: {value}")
    sys.stdout.flush()


def write_run(out: Path, lc, fmt: str) -> dict:
    """Write events, summary, metric series and telemetry for a finished lifecycle."""
    out.mkdir(parents=True, exist_ok=True)
    result = collect(lc)
    (out / "events.jsonl").write_text(result.runlog.to_jsonl(), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(result.summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    emit_report(list(result.series.values()), out / f"series.{fmt}", fmt)
    emit_report(result.telemetry, out / f"telemetry.{fmt}", fmt, TELEMETRY_COLUMNS)
    return result.summary


def cmd_gen_tasks(args) -> int:
    cfg = _load(args)
    _provenance(seed=cfg.seed, out=args.out)
    taskset = generate_tasks(cfg.tasks, cfg.seed)
    if args.format == "taskcraft":
        export_taskcraft(taskset, args.out)
    else:
        save_taskset(taskset, args.out)
    print(f"tasks: {len(taskset.tasks)} splits: " + " ".join(f"{k}={len(v)}" for k, v in taskset.splits.items()))
    return 0


def cmd_ingest(args) -> int:
    _provenance(seed=args.seed, input=args.input, out=args.out)
    taskset = ingest_taskcraft(args.input, n_features=args.n_features, max_difficulty=args.max_difficulty, seed=args.seed)
    save_taskset(taskset, args.out)
    print(f"tasks: {len(taskset.tasks)} tiers: {taskset.tiers}")
    return 0


def _run_lifecycle(args, lc, out: Path) -> int:
    if args.checkpoint_at is not None:
        lc.run(until=args.checkpoint_at)
        out.mkdir(parents=True, exist_ok=True)
        path = checkpoint_save(lc, out / "checkpoint.json")
        print(f"checkpoint: {path}")
    lc.run()
    summary = write_run(out, lc, args.format)
    print(json.dumps({k: summary[k] for k in ("status", "episodes", "promotions", "rejections", "final_test_fitness")}, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.mode:
        cfg = replace(cfg, evolution=replace(cfg.evolution, mode=args.mode))
    out = Path(args.out)
    _provenance(seed=cfg.seed, mode=cfg.evolution.mode, config=args.config, tasks=args.tasks, out=out)
    taskset = load_taskset(args.tasks) if args.tasks else None
    return _run_lifecycle(args, prepare(cfg, taskset), out)


def cmd_resume(args) -> int:
    out = Path(args.out)
    lc = checkpoint_load(args.checkpoint)
    _provenance(seed=lc.config.seed, checkpoint=args.checkpoint, position=lc.state.position, out=out)
    args.checkpoint_at = None
    return _run_lifecycle(args, lc, out)


def cmd_compare(args) -> int:
    cfg = _load(args)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    out = Path(args.out)
    _provenance(seeds=seeds, config=args.config, out=out)
    taskset = load_taskset(args.tasks) if args.tasks else None
    report, _ = compare_paradigms(cfg, seeds, taskset)
    out.mkdir(parents=True, exist_ok=True)
    (out / "criteria.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    emit_report(criteria_rows(report), out / f"criteria.{args.format}", args.format, CRITERIA_COLUMNS)
    for dim in report["dimensions"]:
        print(f"{dim['dimension']:<24} winner={dim['winner']}")
    return 0


def cmd_report(args) -> int:
    """Convert a criteria.json or summary.json into CSV/JSONL rows."""
    data = json.loads(Path(args.input).read_text(encoding="utf-8"))
    _provenance(input=args.input, out=args.out)
    if "dimensions" in data:
        emit_report(criteria_rows(data), args.out, args.format, CRITERIA_COLUMNS)
    else:
        rows = [{"key": k, "value": json.dumps(v) if isinstance(v, (list, dict)) else v} for k, v in sorted(data.items())]
        emit_report(rows, args.out, args.format, ("key", "value"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfevolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tasks", help="generate a synthetic hierarchical task set")
    _config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("taskset", "taskcraft"), default="taskset")
    p.set_defaults(func=cmd_gen_tasks)

    p = sub.add_parser("ingest", help="ingest TaskCraft-format JSONL into a task set")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--n-features", type=int, default=16)
    p.add_argument("--max-difficulty", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run one lifecycle")
    _config_args(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--tasks", help="task set JSON (default: generate from config)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--checkpoint-at", type=int, help="also write out/checkpoint.json at this stream position")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a run from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("compare", help="compare CL, RL and GA over several seeds")
    _config_args(p)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tasks")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="convert a summary or criteria JSON to CSV/JSONL")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SelfEvolveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
