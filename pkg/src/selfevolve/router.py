"""Base routing policy: which active agent handles a task."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .agentcore import Agent, AgentStatus, logit
from .errors import ConfigError, RoutingError
from .taskenv import Task


@dataclass
class RoutingPolicy:
    mode: str = "argmax"
    temperature: float = 1.0

    def validate(self, prefix: str = "routing") -> None:
        if self.mode not in ("argmax", "softmax"):
            raise ConfigError(f"unknown mode {self.mode!r}", f"{prefix}.mode")
        if self.mode == "softmax" and not self.temperature > 0:
            raise ConfigError("must be > 0 for softmax routing", f"{prefix}.temperature")


def affinity(agent: Agent, task: Task) -> float:
    """Pre-sigmoid competence score ``w . x + b``."""
    return logit(agent, task, 0.0)


def routing_probabilities(scores: Sequence[float], temperature: float) -> np.ndarray:
    z = np.asarray(scores, dtype=float) / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def eligible(agents: Sequence[Agent]) -> list[Agent]:
    return sorted((a for a in agents if a.status == AgentStatus.ACTIVE), key=lambda a: a.id)


def route(task: Task, agents: Sequence[Agent], policy: RoutingPolicy, rng: np.random.Generator | None = None) -> Agent:
    pool = eligible(agents)
    if not pool:
        raise RoutingError("no active agent available to route to")
    if len(pool) == 1:
        return pool[0]
    scores = [affinity(a, task) for a in pool]
    if policy.mode == "argmax":
        best = max(scores)
        return next(a for a, s in zip(pool, scores) if s == best)
    if rng is None:
        raise RoutingError("softmax routing needs an rng")
    probs = routing_probabilities(scores, policy.temperature)
    return pool[int(rng.choice(len(pool), p=probs))]
