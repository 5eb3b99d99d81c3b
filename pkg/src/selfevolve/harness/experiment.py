"""Single runs and the three-paradigm comparison."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..agentcore import Agent, TaskBatchView, batch_logits, batch_view, sigmoid
from ..config import RunConfig
from ..errors import ConfigError
from ..evolution.fitness import fitness_vector
from ..lifecycle import Lifecycle, RunLog, seed_agent
from ..rng import substream
from ..router import affinity, eligible
from ..taskenv import TaskSet, generate_tasks
from ..toolforge import builtin_registry
from .report import MetricSeries

PARADIGMS = ("cl", "rl", "ga")


def make_stream(taskset: TaskSet, length: int, seed: int) -> list[str]:
    """Train-split task ids, reshuffled on every pass, truncated to ``length``."""
    train = [t.id for t in taskset.split("train")]
    if not train:
        raise ConfigError("train split is empty", "tasks.split_ratios")
    stream: list[str] = []
    for epoch in itertools.count():
        if len(stream) >= length:
            break
        order = substream(seed, "stream", epoch).permutation(len(train))
        stream.extend(train[i] for i in order)
    return stream[:length]


def prepare(config: RunConfig, taskset: TaskSet | None = None) -> Lifecycle:
    """Fresh lifecycle for ``config``: generated tasks (unless given), builtin tools, one zero-parameter agent."""
    config.validate()
    if taskset is None:
        taskset = generate_tasks(config.tasks, config.seed)
    n_features = taskset.tasks[0].dim
    registry = builtin_registry(config.forge, n_features, substream(config.seed, "builtin"))
    stream = make_stream(taskset, config.stream_length, config.seed)
    return Lifecycle.start(config, taskset, stream, registry, [seed_agent(n_features)])


def success_probabilities(theta: np.ndarray, view: TaskBatchView, config: RunConfig) -> np.ndarray:
    """Closed-form probability that an attempt succeeds (solved, executed and safe)."""
    sub = config.substrate
    solved = sigmoid(batch_logits(theta, view, sub.difficulty_penalty)) * view.coverage
    hazard = np.where(view.coverage < 1.0, 1.0 - (1.0 - sub.unsafe_rate) * (1.0 - sub.hazard_rate), sub.unsafe_rate)
    return solved * view.exec_prob * (1.0 - hazard)


def _routed_thetas(agents: list[Agent], view: TaskBatchView) -> np.ndarray:
    """Per-task parameter vector of the agent that argmax routing would pick."""
    scores = np.array([[affinity(a, t) for a in agents] for t in view.tasks]).reshape(len(view), len(agents))
    pick = scores.argmax(axis=1) if len(view) else np.zeros(0, dtype=int)
    return np.array([agents[i].params.vector() for i in pick]).reshape(len(view), -1)


def roster_success(agents: list[Agent], view: TaskBatchView, config: RunConfig) -> np.ndarray:
    if len(agents) == 1:
        return success_probabilities(agents[0].params.vector(), view, config)
    thetas = _routed_thetas(agents, view)
    return np.array([success_probabilities(th, _one(view, i), config)[0] for i, th in enumerate(thetas)])


def roster_fitness(agents: list[Agent], view: TaskBatchView, config: RunConfig) -> float:
    if len(view) == 0:
        return float("nan")
    if len(agents) == 1:
        return fitness_vector(agents[0].params.vector(), view, config.substrate)
    thetas = _routed_thetas(agents, view)
    return float(np.mean([fitness_vector(th, _one(view, i), config.substrate) for i, th in enumerate(thetas)]))


def _one(view: TaskBatchView, i: int) -> TaskBatchView:
    from ..evolution.reward_learning import take

    return take(view, [i])


def _stderr(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


@dataclass
class ExperimentResult:
    runlog: RunLog
    series: dict[str, MetricSeries]
    telemetry: list[dict]
    summary: dict
    final_params: list[np.ndarray] = field(default_factory=list)


def collect(lc: Lifecycle) -> ExperimentResult:
    """Metric series and summary numbers for a finished (or halted) lifecycle."""
    cfg, st = lc.config, lc.state
    active = lc.active_agents()
    seed = seed_agent(lc.taskset.tasks[0].dim)
    test = lc.view("test")
    val = lc.view("val")

    success = roster_success(active, test, cfg)
    tiers = lc.taskset.tiers
    by_tier = []
    for tier in tiers:
        mask = test.difficulty == tier
        if mask.any():
            by_tier.append((tier, float(success[mask].mean()), _stderr(success[mask])))
    top = max(tiers) if tiers else 0
    top_mask = test.difficulty == top

    w = cfg.metrics.tool_use_window
    calls = np.asarray(st.tool_calls, dtype=float)
    tool_points = [
        (float(min(end, len(calls))), float(calls[end - w : end].mean()), _stderr(calls[end - w : end]))
        for end in range(w, len(calls) + w, w)
        if len(calls[end - w : end])
    ]

    per_gen: dict[int, list[float]] = {}
    for _root, gen, fit in st.generations:
        per_gen.setdefault(int(gen), []).append(float(fit))
    gen_points = [(g, float(np.mean(v)), _stderr(v)) for g, v in sorted(per_gen.items())]

    series = {
        "success_by_tier": MetricSeries("success_by_tier", "difficulty", by_tier),
        "tool_use": MetricSeries("tool_use", "tasks_seen", tool_points),
        "generation_fitness": MetricSeries("generation_fitness", "generation", gen_points),
    }

    val_perf = [row["val_perf"] for row in st.telemetry]
    runlog = lc.runlog()
    summary = dict(runlog.summary)
    summary.update(
        {
            "mode": cfg.evolution.mode,
            "seed_val_fitness": roster_fitness([seed], val, cfg),
            "seed_test_fitness": roster_fitness([seed], test, cfg),
            "final_val_fitness": roster_fitness(active, val, cfg),
            "final_test_fitness": roster_fitness(active, test, cfg),
            "top_tier": top,
            "top_tier_success": float(success[top_mask].mean()) if top_mask.any() else float("nan"),
            "first_promotion_episode": st.first_promotion_episode,
            "cells": len(st.cells),
            "val_perf_std": float(np.std(val_perf)) if len(val_perf) > 1 else 0.0,
            "successes": st.successes,
            "tool_cost_per_success": st.success_tool_cost / st.successes if st.successes else float("nan"),
            "final_params": [[float(x) for x in a.params.vector()] for a in active],
        }
    )
    return ExperimentResult(
        runlog=runlog,
        series=series,
        telemetry=list(st.telemetry),
        summary=summary,
        final_params=[a.params.vector() for a in active],
    )


def run_experiment(config: RunConfig, taskset: TaskSet | None = None) -> ExperimentResult:
    return collect(prepare(config, taskset).run())


# -- comparison ------------------------------------------------------------------

# (key, description, direction): direction +1 means higher is better.
CRITERIA = (
    ("learning_speed", "evolution episodes until the first promotion; runs without one count as episodes + 1", -1),
    ("generalization", "final active-agent fitness on the held-out test split", +1),
    ("high_difficulty_mastery", "final closed-form success rate on test tasks of the top tier", +1),
    ("exploration", "distinct parameter-grid cells (side metrics.grid_cell) visited by training", +1),
    ("stability", "1 / standard deviation of validation fitness across training telemetry", +1),
    ("diversity", "mean pairwise Euclidean distance between final parameters across seeds", +1),
    ("tool_efficiency", "mean tool cost per successful attempt", -1),
)


def _criterion_values(key: str, results: list[ExperimentResult]) -> list[float]:
    out = []
    for r in results:
        s = r.summary
        if key == "learning_speed":
            first = s["first_promotion_episode"]
            out.append(float(first if first is not None else s["episodes"] + 1))
        elif key == "generalization":
            out.append(s["final_test_fitness"])
        elif key == "high_difficulty_mastery":
            out.append(s["top_tier_success"])
        elif key == "exploration":
            out.append(float(s["cells"]))
        elif key == "stability":
            sd = s["val_perf_std"]
            out.append(1.0 / sd if sd > 0 else float("inf"))
        elif key == "tool_efficiency":
            out.append(s["tool_cost_per_success"])
    return out


def diversity_score(params: list[np.ndarray]) -> float:
    if len(params) < 2:
        return 0.0
    return float(np.mean([np.linalg.norm(a - b) for a, b in itertools.combinations(params, 2)]))


def _winner(means: dict[str, float], direction: int) -> str:
    finite = {k: v for k, v in means.items() if not math.isnan(v)}
    if not finite:
        return "none"
    best = max(direction * v for v in finite.values())
    tied = sorted(k for k, v in finite.items() if direction * v == best)
    return tied[0] if len(tied) == 1 else "tie:" + "+".join(tied)


def criteria_from_results(results: dict[str, list[ExperimentResult]]) -> dict:
    dimensions = []
    for key, description, direction in CRITERIA:
        scores = {}
        for mode, runs in results.items():
            if key == "diversity":
                values = [diversity_score([r.final_params[0] for r in runs if r.final_params])]
            else:
                values = _criterion_values(key, runs)
            values = np.asarray(values, dtype=float)
            finite = values[np.isfinite(values)]
            mean = float(finite.mean()) if len(finite) else (float(values[0]) if len(values) and np.isinf(values).all() else float("nan"))
            scores[mode] = {"mean": mean, "stderr": _stderr(finite) if key != "diversity" else 0.0, "n": int(len(finite)) if key != "diversity" else len(runs)}
        dimensions.append(
            {
                "dimension": key,
                "definition": description,
                "better": "higher" if direction > 0 else "lower",
                "scores": scores,
                "winner": _winner({m: s["mean"] for m, s in scores.items()}, direction),
            }
        )
    return {"version": 1, "paradigms": list(results), "dimensions": dimensions}


def compare_paradigms(config: RunConfig, seeds, taskset: TaskSet | None = None) -> tuple[dict, dict[str, list[ExperimentResult]]]:
    """Run every fixed paradigm on every seed; return the seven-criteria report and the raw results."""
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ConfigError("need at least 3 seeds", "seeds")
    results: dict[str, list[ExperimentResult]] = {}
    for mode in PARADIGMS:
        runs = []
        for seed in seeds:
            cfg = replace(config, seed=int(seed), evolution=replace(config.evolution, mode=mode))
            runs.append(run_experiment(cfg, taskset))
        results[mode] = runs
    report = criteria_from_results(results)
    report["seeds"] = seeds
    return report, results


def criteria_rows(report: dict) -> list[dict]:
    rows = []
    for dim in report["dimensions"]:
        for mode, s in dim["scores"].items():
            rows.append(
                {
                    "dimension": dim["dimension"],
                    "paradigm": mode,
                    "mean": s["mean"],
                    "stderr": s["stderr"],
                    "n": s["n"],
                    "better": dim["better"],
                    "winner": dim["winner"],
                }
            )
    return rows
