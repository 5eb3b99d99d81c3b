"""Validation fitness: mean closed-form expected reward over a task split."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..agentcore import AgentParams, Substrate, TaskBatchView, batch_expected_rewards, batch_view
from ..errors import ConfigError
from ..taskenv import Task, TaskSet
from ..toolforge import ToolRegistry


def as_view(tasks: TaskBatchView | TaskSet | Sequence[Task], registry: ToolRegistry, split: str = "val") -> TaskBatchView:
    if isinstance(tasks, TaskBatchView):
        return tasks
    if isinstance(tasks, TaskSet):
        tasks = tasks.split(split)
    return batch_view(tasks, registry)


def fitness_vector(theta: np.ndarray, view: TaskBatchView, substrate: Substrate) -> float:
    if len(view) == 0:
        raise ConfigError("validation split is empty", "tasks.split_ratios")
    return float(np.mean(batch_expected_rewards(np.asarray(theta, dtype=float), view, substrate)))


def fitness(
    agent_params: AgentParams,
    validation: TaskBatchView | TaskSet | Sequence[Task],
    tools: ToolRegistry,
    rng=None,
    substrate: Substrate | None = None,
) -> float:
    """Deterministic; ``rng`` is accepted for interface symmetry and never drawn from."""
    view = as_view(validation, tools)
    return fitness_vector(agent_params.vector(), view, substrate or Substrate())


@dataclass
class TrainResult:
    params: AgentParams
    steps_run: int
    val_before: float
    val_after: float
    telemetry: list[dict] = field(default_factory=list)
    visited: list[np.ndarray] = field(default_factory=list)
    state: object = None
