"""GA-based evolution over flat agent parameter vectors.

Variation is Gaussian mutation ``theta + N(0, v I)`` and convex crossover
``lam * p1 + (1 - lam) * p2``; selection is elitism plus tournaments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..agentcore import Agent, AgentParams, AgentStatus, Substrate, TaskBatchView
from ..errors import ConfigError, ContractViolation
from ..rng import substream
from .fitness import TrainResult, fitness_vector


@dataclass
class GAConfig:
    size: int = 16
    mutation_variance: float = 0.05
    crossover_lambda: float = 0.5
    elite_count: int = 2
    tournament_size: int = 3
    generations: int = 30

    def validate(self, prefix: str = "ga") -> None:
        if self.size < 2:
            raise ConfigError("must be >= 2", f"{prefix}.size")
        if not 0 <= self.elite_count < self.size:
            raise ConfigError("need 0 <= elite_count < size", f"{prefix}.elite_count")
        if self.mutation_variance < 0:
            raise ConfigError("must be >= 0", f"{prefix}.mutation_variance")
        if not 0 <= self.crossover_lambda <= 1:
            raise ConfigError("must be in [0, 1]", f"{prefix}.crossover_lambda")
        if self.tournament_size < 1:
            raise ConfigError("must be >= 1", f"{prefix}.tournament_size")
        if self.generations < 0:
            raise ConfigError("must be >= 0", f"{prefix}.generations")


@dataclass
class Population:
    members: list[tuple[AgentParams, float]]
    generation: int = 0
    config: GAConfig = field(default_factory=GAConfig)

    def __post_init__(self):
        if len(self.members) < 2:
            raise ContractViolation("population needs at least two members")

    def best(self) -> tuple[AgentParams, float]:
        # first of the maxima keeps selection deterministic
        return max(self.members, key=lambda m: m[1])


def mutate(params: AgentParams, v: float, rng: np.random.Generator) -> AgentParams:
    if v < 0:
        raise ConfigError("mutation variance must be >= 0", "ga.mutation_variance")
    theta = params.vector()
    if v == 0:
        return AgentParams.from_vector(theta)
    return AgentParams.from_vector(theta + rng.normal(0.0, math.sqrt(v), size=theta.shape))


def crossover(p1: AgentParams, p2: AgentParams, lambda_x: float) -> AgentParams:
    if not 0.0 <= lambda_x <= 1.0:
        raise ConfigError(f"crossover lambda {lambda_x} outside [0, 1]", "ga.crossover_lambda")
    if p1.dim != p2.dim:
        raise ContractViolation(f"parent dimensions differ: {p1.dim} vs {p2.dim}")
    return AgentParams.from_vector(lambda_x * p1.vector() + (1.0 - lambda_x) * p2.vector())


def _tournament(members, k: int, rng: np.random.Generator) -> AgentParams:
    picks = rng.integers(len(members), size=k)
    winner = min(picks, key=lambda i: (-members[i][1], i))
    return members[winner][0]


def evolve_generation(pop: Population, fitness_fn: Callable[[AgentParams], float], rng: np.random.Generator) -> Population:
    """Elites carry over unchanged; the rest are tournament-bred, crossed over and mutated."""
    cfg = pop.config
    if any(f is None or not math.isfinite(f) for _, f in pop.members):
        raise ContractViolation("every member needs an evaluated, finite fitness")
    order = sorted(range(len(pop.members)), key=lambda i: (-pop.members[i][1], i))
    ranked = [pop.members[i] for i in order]
    nxt = list(ranked[: cfg.elite_count])
    while len(nxt) < len(pop.members):
        p1 = _tournament(ranked, cfg.tournament_size, rng)
        p2 = _tournament(ranked, cfg.tournament_size, rng)
        child = mutate(crossover(p1, p2, float(rng.uniform())), cfg.mutation_variance, rng)
        nxt.append((child, float(fitness_fn(child))))
    return Population(members=nxt, generation=pop.generation + 1, config=cfg)


def initial_population(seed_params: AgentParams, config: GAConfig, fitness_fn, rng: np.random.Generator) -> Population:
    members = [(seed_params, float(fitness_fn(seed_params)))]
    for _ in range(config.size - 1):
        child = mutate(seed_params, config.mutation_variance, rng)
        members.append((child, float(fitness_fn(child))))
    return Population(members=members, generation=0, config=config)


def ga_train(
    clone: Agent,
    validation: TaskBatchView,
    seed: int,
    *,
    substrate: Substrate,
    config: GAConfig,
    target: float | None = None,
) -> TrainResult:
    """Evolve a population seeded from the clone; the best member becomes the clone's parameters."""
    if clone.status != AgentStatus.CLONE_IN_TRAINING:
        raise ContractViolation(f"agent {clone.id} is not a clone in training")

    def fit(p: AgentParams) -> float:
        return fitness_vector(p.vector(), validation, substrate)

    val0 = fit(clone.params)
    result = TrainResult(params=clone.params, steps_run=0, val_before=val0, val_after=val0)
    if config.generations <= 0:
        return result
    rng = substream(seed, "ga", clone.id)
    pop = initial_population(clone.params, config, fit, rng)
    result.visited.extend(m.vector() for m, _ in pop.members)
    for g in range(config.generations):
        pop = evolve_generation(pop, fit, rng)
        result.visited.extend(m.vector() for m, _ in pop.members[config.elite_count :])
        best_params, best_fit = pop.best()
        result.steps_run = g + 1
        result.telemetry.append({"step": g + 1, "mode": "GA", "arm": pop.generation, "val_perf": best_fit, "mean_tool_use": float(np.mean([t is not None for t in validation.tool_ids]))})
        if target is not None and best_fit >= target:
            break
    best_params, best_fit = pop.best()
    result.params = best_params
    result.val_after = best_fit
    result.state = pop.generation
    return result
