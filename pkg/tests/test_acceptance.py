"""End-to-end acceptance criteria; each test prints a PASS/FAIL line with its evidence."""

import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from selfevolve.config import RunConfig
from selfevolve.harness.checkpoint import checkpoint_load, checkpoint_save
from selfevolve.harness.experiment import compare_paradigms, prepare
from selfevolve.taskenv import bucketize, export_taskcraft, ingest_taskcraft, stratified_split

from test_genetic import run_sphere

HERE = Path(__file__).parent
UNIT_MODULES = [
    "test_taskenv.py",
    "test_agentcore.py",
    "test_router.py",
    "test_toolforge.py",
    "test_curriculum.py",
    "test_reward_learning.py",
    "test_genetic.py",
    "test_fitness.py",
    "test_lifecycle.py",
]


def verdict(number, title, ok, detail):
    print(f"ACCEPTANCE {number} ({title}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_1_operator_unit_suite():
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(HERE / m) for m in UNIT_MODULES]],
        capture_output=True,
        text=True,
        cwd=HERE.parent,
    )
    elapsed = time.perf_counter() - start
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-300:]
    verdict(1, "operator unit suite", proc.returncode == 0 and elapsed < 60, f"{tail}; wall time {elapsed:.1f}s (limit 60s)")


def test_2_promotion_soundness_and_monotone_lineage():
    start = time.perf_counter()
    records = bad_gate = bad_monotone = promotions = 0
    registry_shift_drops = consecutive = 0
    for seed in range(10):
        log = prepare(RunConfig(seed=seed)).run().runlog()
        last = {}
        for e in log.of_kind("promotion"):
            records += 1
            bad_gate += (e["decision"] == "promoted") != (e["delta_perf"] >= e["epsilon_verify"])
            if e["decision"] != "promoted":
                continue
            promotions += 1
            # same registry on both sides of the comparison: the gate's guarantee
            bad_monotone += e["candidate_fitness"] < e["incumbent_fitness"]
            root = e["lineage_root"]
            if root in last:
                consecutive += 1
                registry_shift_drops += e["incumbent_fitness"] < last[root] - 1e-12
            last[root] = e["candidate_fitness"]
    elapsed = time.perf_counter() - start
    ok = bad_gate == 0 and bad_monotone == 0 and promotions > 0 and elapsed < 300
    verdict(
        2,
        "promotion soundness & monotone lineage",
        ok,
        f"{records} records, {bad_gate} gate violations, {promotions} promotions, {bad_monotone} fitness decreases at promotion; "
        f"informational: {registry_shift_drops}/{consecutive} consecutive promotions where newly deployed tools lowered the incumbent's "
        f"fitness before its successor was verified; {elapsed:.1f}s (limit 300s)",
    )


def test_3_constraint_enforcement():
    cfg = RunConfig(seed=0).with_overrides(["forge.budget=3.0"])
    log = prepare(cfg).run().runlog()
    spent = [e["spent"] for e in log.events if "spent" in e]
    synth = log.of_kind("synthesis")
    demanded = sum(e["cost"] for e in synth)
    refusals = sum(e["outcome"] == "budget_refusal" for e in synth)
    budget_ok = demanded > cfg.forge.budget and max(spent) <= cfg.forge.budget and refusals >= 1

    halted = 0
    worst = 0
    for seed in range(100):
        lc = prepare(RunConfig(seed=seed).with_overrides(["substrate.unsafe_rate=0.5", "thresholds.delta_safe=0.05"])).run()
        traces = lc.state.safety.total_count
        if lc.state.status == "halted_safety" and traces <= 20:
            halted += 1
        worst = max(worst, traces)
    verdict(
        3,
        "constraint enforcement",
        budget_ok and halted == 100,
        f"budget {cfg.forge.budget}: demanded {demanded:.2f}, max spent {max(spent):.2f} over {len(spent)} logged steps, "
        f"{refusals} budget refusals; safety: {halted}/100 seeds halted within 20 traces (slowest {worst} traces)",
    )


def test_4_determinism_and_resume(tmp_path):
    identical = all(
        prepare(RunConfig(seed=s)).run().runlog().to_jsonl() == prepare(RunConfig(seed=s)).run().runlog().to_jsonl() for s in (0, 1)
    )
    cfg = RunConfig(seed=11)
    full = prepare(cfg).run().runlog()
    points = sorted(np.random.default_rng(2024).choice(np.arange(1, cfg.stream_length), size=5, replace=False).tolist())
    matches = 0
    for k in points:
        lc = prepare(cfg).run(until=k)
        checkpoint_save(lc, tmp_path / f"ck{k}.json")
        resumed = checkpoint_load(tmp_path / f"ck{k}.json").run().runlog()
        matches += resumed.to_jsonl() == full.to_jsonl() and resumed.summary_json() == full.summary_json()
    verdict(4, "determinism & resume", identical and matches == 5, f"repeat runs byte-identical: {identical}; resume points {points}: {matches}/5 identical")


def test_5_evolution_efficacy():
    base = RunConfig()
    eps = base.thresholds.epsilon_verify
    improved = {m: 0 for m in ("cl", "rl", "ga")}
    seed_counts = {m: 0 for m in improved}
    diversity_wins = cell_wins = 0
    lines = []
    for group in range(10):
        seeds = [3 * group, 3 * group + 1, 3 * group + 2]
        report, results = compare_paradigms(base, seeds)
        for mode, runs in results.items():
            for r in runs:
                seed_counts[mode] += 1
                improved[mode] += r.summary["final_test_fitness"] - r.summary["seed_test_fitness"] >= eps
        dims = {d["dimension"]: d["scores"] for d in report["dimensions"]}
        div = {m: s["mean"] for m, s in dims["diversity"].items()}
        cells = {m: s["mean"] for m, s in dims["exploration"].items()}
        diversity_wins += div["ga"] > max(div["cl"], div["rl"])
        cell_wins += cells["ga"] > max(cells["cl"], cells["rl"])
        lines.append(f"g{group}: diversity " + "/".join(f"{div[m]:.2f}" for m in ("cl", "rl", "ga")) + ", cells " + "/".join(f"{cells[m]:.0f}" for m in ("cl", "rl", "ga")))
    # per mode the bar is 8 of 10 seeds; every group contributes three seeds, so require 80% of all seeds
    ok = all(improved[m] >= 0.8 * seed_counts[m] for m in improved) and diversity_wins >= 8 and cell_wins >= 8
    verdict(
        5,
        "end-to-end evolution efficacy",
        ok,
        "test-split gain >= eps_verify: " + ", ".join(f"{m.upper()} {improved[m]}/{seed_counts[m]}" for m in improved)
        + f"; GA strictly most diverse in {diversity_wins}/10 groups, most cells in {cell_wins}/10 groups (cl/rl/ga) [" + "; ".join(lines) + "]",
    )


def test_6_ga_sphere():
    closed = monotone = 0
    fractions = []
    for seed in range(10):
        bests = run_sphere(seed)
        frac = (bests[-1] - bests[0]) / (0.0 - bests[0])
        fractions.append(frac)
        closed += frac >= 0.9
        monotone += all(b >= a for a, b in zip(bests, bests[1:]))
    verdict(6, "GA sanity on the sphere", closed >= 8 and monotone == 10, f"gap closed >= 90% in {closed}/10 seeds (fractions {', '.join(f'{f:.3f}' for f in fractions)}); monotone best in {monotone}/10")


def test_7_data_pipeline(tmp_path):
    fixture = HERE / "fixtures" / "taskcraft_20.jsonl"
    ts = ingest_taskcraft(fixture)
    buckets = bucketize(ts.tasks)
    split = stratified_split(ts, (0.6, 0.2, 0.2), seed=0)
    n_all = len(split.tasks)
    strat_ok = True
    for s in ("train", "val", "test"):
        n_s = len(split.splits[s])
        for tier, ids in buckets.items():
            share = len(split.bucket_tasks(tier, s)) / n_s
            strat_ok &= abs(share - len(ids) / n_all) <= 1.0 / n_s
    export_taskcraft(ts, tmp_path / "a.jsonl")
    again = ingest_taskcraft(tmp_path / "a.jsonl")
    export_taskcraft(again, tmp_path / "b.jsonl")
    stable = again == ts and (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    ok = n_all == 20 and strat_ok and stable
    sizes = {s: len(v) for s, v in split.splits.items()}
    verdict(7, "data pipeline", ok, f"{n_all} records, buckets {json.dumps({k: len(v) for k, v in buckets.items()})}, split sizes {sizes}, stratified {strat_ok}, round trip byte-stable {stable}")
