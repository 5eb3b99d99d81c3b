"""Teacher-role curriculum: a cost-aware UCB bandit over difficulty buckets.

Each bucket (difficulty tier) is an arm.  The score of arm ``b`` is

    (mean_gain(b) + c * sqrt(ln(total_pulls + 1) / (pulls(b) + 1))) / cost(b)

where ``mean_gain`` is an exponential moving average of the validation gain
observed after training on that bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..agentcore import Agent, AgentStatus, Substrate, TaskBatchView, batch_view, env_reward, simulate_batch
from ..errors import ConfigError, ContractViolation
from ..rng import substream
from ..taskenv import TaskSet
from ..toolforge import ToolRegistry
from .fitness import TrainResult, fitness_vector
from .reward_learning import pg_update, take


@dataclass
class ArmStats:
    pulls: int = 0
    mean_gain: float = 0.0
    cost: float = 1.0

    def __post_init__(self):
        if self.pulls < 0 or not self.cost > 0:
            raise ContractViolation("arm needs pulls >= 0 and cost > 0")
        if not math.isfinite(self.mean_gain):
            raise ContractViolation("mean_gain must be finite")


@dataclass
class CurriculumState:
    arms: dict[int, ArmStats]
    exploration_coefficient: float = 0.1
    decay: float = 0.9
    total_pulls: int = 0

    def to_dict(self) -> dict:
        return {
            "arms": {str(k): [a.pulls, a.mean_gain, a.cost] for k, a in sorted(self.arms.items())},
            "exploration_coefficient": self.exploration_coefficient,
            "decay": self.decay,
            "total_pulls": self.total_pulls,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurriculumState":
        return cls(
            arms={int(k): ArmStats(int(v[0]), float(v[1]), float(v[2])) for k, v in d["arms"].items()},
            exploration_coefficient=d["exploration_coefficient"],
            decay=d["decay"],
            total_pulls=d["total_pulls"],
        )


@dataclass
class CLConfig:
    steps: int = 200
    batch_size: int = 32
    eta: float = 0.05
    gamma: float = 1e-3
    exploration_coefficient: float = 0.1
    decay: float = 0.9
    eval_every: int = 5

    def validate(self, prefix: str = "cl") -> None:
        if self.steps < 0:
            raise ConfigError("must be >= 0", f"{prefix}.steps")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", f"{prefix}.batch_size")
        if not self.eta > 0:
            raise ConfigError("must be > 0", f"{prefix}.eta")
        if self.gamma < 0:
            raise ConfigError("must be >= 0", f"{prefix}.gamma")
        if self.exploration_coefficient < 0:
            raise ConfigError("must be >= 0", f"{prefix}.exploration_coefficient")
        if not 0 <= self.decay < 1:
            raise ConfigError("must be in [0, 1)", f"{prefix}.decay")
        if self.eval_every < 1:
            raise ConfigError("must be >= 1", f"{prefix}.eval_every")


def init_curriculum(taskset: TaskSet, config: CLConfig, split: str = "train") -> CurriculumState:
    """One arm per non-empty bucket; arm cost is the bucket's mean composition depth."""
    arms = {}
    for tier in taskset.tiers:
        tasks = taskset.bucket_tasks(tier, split)
        if tasks:
            arms[tier] = ArmStats(cost=float(np.mean([t.composition_depth for t in tasks])))
    return CurriculumState(arms=arms, exploration_coefficient=config.exploration_coefficient, decay=config.decay)


def arm_score(state: CurriculumState, bucket: int) -> float:
    arm = state.arms[bucket]
    bonus = state.exploration_coefficient * math.sqrt(math.log(state.total_pulls + 1) / (arm.pulls + 1))
    return (arm.mean_gain + bonus) / arm.cost


def select_bucket(state: CurriculumState, rng=None, mask: Iterable[int] = ()) -> int:
    """Deterministic; ``rng`` is accepted for interface symmetry."""
    masked = set(mask)
    arms = sorted(b for b in state.arms if b not in masked)
    if not arms:
        raise ConfigError("curriculum has no selectable arms", "cl")
    for b in arms:
        if state.arms[b].pulls == 0:
            return b
    scores = [arm_score(state, b) for b in arms]
    best = max(scores)
    return next(b for b, s in zip(arms, scores) if s == best)


def update_bucket_stats(state: CurriculumState, bucket: int, observed_gain: float) -> CurriculumState:
    if bucket not in state.arms:
        raise ContractViolation(f"unknown bucket {bucket!r}")
    arm = state.arms[bucket]
    if arm.pulls == 0:
        mean = float(observed_gain)
    else:
        mean = state.decay * arm.mean_gain + (1.0 - state.decay) * float(observed_gain)
    arms = dict(state.arms)
    arms[bucket] = replace(arm, pulls=arm.pulls + 1, mean_gain=mean)
    return replace(state, arms=arms, total_pulls=state.total_pulls + 1)


def cl_train(
    clone: Agent,
    state: CurriculumState,
    taskset: TaskSet,
    tools: ToolRegistry,
    steps: int,
    seed: int,
    *,
    substrate: Substrate,
    config: CLConfig,
    validation: TaskBatchView | None = None,
    target: float | None = None,
) -> TrainResult:
    """Bandit-scheduled on-policy training of a clone.

    Each step: pick a bucket, run one policy-gradient update on a batch from
    that bucket with the environment reward, and feed the resulting
    validation gain back to the bandit.  Stops early once validation fitness
    reaches ``target``.
    """
    if clone.status != AgentStatus.CLONE_IN_TRAINING:
        raise ContractViolation(f"agent {clone.id} is not a clone in training")
    val_view = validation if validation is not None else batch_view(taskset.split("val"), tools)
    theta = clone.params.vector()
    val = fitness_vector(theta, val_view, substrate)
    result = TrainResult(params=clone.params, steps_run=0, val_before=val, val_after=val, state=state)
    if steps <= 0:
        return result
    views = {}
    for tier in state.arms:
        tasks = taskset.bucket_tasks(tier, "train")
        if tasks:
            views[tier] = batch_view(tasks, tools)
    masked = [b for b in state.arms if b not in views]
    for step in range(steps):
        bucket = select_bucket(state, mask=masked)
        rng = substream(seed, "cl", clone.id, step)
        view = take(views[bucket], rng.integers(len(views[bucket]), size=config.batch_size))
        traces = simulate_batch(theta, view, substrate, rng)
        rewards = np.array([env_reward(t, substrate.lambda_cost) for t in traces])
        theta = pg_update(theta, view, traces, rewards, config.eta, config.gamma, substrate.difficulty_penalty)
        new_val = fitness_vector(theta, val_view, substrate)
        state = update_bucket_stats(state, bucket, new_val - val)
        val = new_val
        result.visited.append(theta.copy())
        result.steps_run = step + 1
        done = target is not None and val >= target
        if (step + 1) % config.eval_every == 0 or done or step == steps - 1:
            tool_use = float(np.mean([t.tool_used is not None for t in traces]))
            result.telemetry.append({"step": step + 1, "mode": "CL", "arm": bucket, "val_perf": val, "mean_tool_use": tool_use})
        if done:
            break
    result.params = type(clone.params).from_vector(theta)
    result.val_after = val
    result.state = state
    return result
