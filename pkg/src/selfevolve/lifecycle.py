"""The escalation loop: route, attempt, synthesize tools, evolve, promote.

One ``Lifecycle`` instance is a single state machine over a task stream.
All randomness comes from keyed substreams (see ``rng``), so the complete
state is ``LifecycleState`` plus the stream position; checkpoints need no
generator state.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .agentcore import (
    Agent,
    AgentParams,
    AgentStatus,
    TaskBatchView,
    Trace,
    attempt,
    batch_view,
    trace_reward,
)
from .config import RunConfig
from .errors import ConfigError, ContractViolation
from .evolution import EvolutionMode
from .evolution.curriculum import CurriculumState, cl_train, init_curriculum
from .evolution.fitness import TrainResult, fitness_vector
from .evolution.genetic import ga_train
from .evolution.reward_learning import rl_train
from .rng import substream
from .router import affinity, eligible, route
from .taskenv import TaskSet
from .toolforge import BudgetRefusal, ToolRegistry, capability_gap, deploy, select_tool, synthesize, validate

LOG_VERSION = 1


# -- monitors -------------------------------------------------------------------


@dataclass
class FailureMonitor:
    window: int = 20
    epsilon_fail: float = 0.3
    recent_rewards: dict[str, deque] = field(default_factory=dict)

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("must be >= 1", "thresholds.window")
        self.recent_rewards = {k: deque(v, maxlen=self.window) for k, v in self.recent_rewards.items()}

    def reset(self, agent_id: str) -> None:
        self.recent_rewards.pop(agent_id, None)

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "epsilon_fail": self.epsilon_fail,
            "recent_rewards": {k: list(v) for k, v in sorted(self.recent_rewards.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FailureMonitor":
        return cls(d["window"], d["epsilon_fail"], {k: deque(v) for k, v in d["recent_rewards"].items()})


def record_and_detect(monitor: FailureMonitor, agent_id: str, reward: float) -> bool:
    """True iff the agent's window is full and its mean reward is below ``epsilon_fail``."""
    queue = monitor.recent_rewards.setdefault(agent_id, deque(maxlen=monitor.window))
    queue.append(float(reward))
    return len(queue) == monitor.window and sum(queue) / len(queue) < monitor.epsilon_fail


class SafetyStatus(str, enum.Enum):
    OK = "ok"
    VIOLATION = "violation"


@dataclass
class SafetyMonitor:
    delta_safe: float = 0.05
    unsafe_count: int = 0
    total_count: int = 0
    z: float = 1.6448536269514722  # one-sided 95%

    def __post_init__(self):
        if not 0 <= self.unsafe_count <= self.total_count:
            raise ContractViolation("need 0 <= unsafe_count <= total_count")

    def to_dict(self) -> dict:
        return {"delta_safe": self.delta_safe, "unsafe_count": self.unsafe_count, "total_count": self.total_count, "z": self.z}

    @classmethod
    def from_dict(cls, d: dict) -> "SafetyMonitor":
        return cls(**d)


def wilson_upper(k: int, n: int, z: float = 1.6448536269514722) -> float:
    """Upper Wilson score bound on a binomial rate."""
    if n == 0:
        return 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = p + z * z / (2 * n)
    spread = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return min(1.0, (centre + spread) / denom)


def check_safety(monitor: SafetyMonitor, trace: Trace) -> SafetyStatus:
    """Count the trace; flag a violation once an unsafe trace has been seen and
    the Wilson upper bound on the unsafe rate exceeds ``delta_safe``."""
    monitor.total_count += 1
    monitor.unsafe_count += int(trace.unsafe)
    if monitor.unsafe_count and wilson_upper(monitor.unsafe_count, monitor.total_count, monitor.z) > monitor.delta_safe:
        return SafetyStatus.VIOLATION
    return SafetyStatus.OK


# -- mode selection, cloning, promotion --------------------------------------------


def select_mode(policy, tier: int, rejections: int = 0) -> EvolutionMode:
    """Fixed mode, or the rule table (CL below the tier threshold, RL at/above, GA after repeated rejections)."""
    if policy.mode != "auto":
        return EvolutionMode(policy.mode.upper())
    if rejections >= policy.ga_after_rejections:
        return EvolutionMode.GA
    return EvolutionMode.RL if tier >= policy.tier_threshold else EvolutionMode.CL


def clone_agent(agent: Agent, clone_id: str | None = None) -> Agent:
    if agent.status != AgentStatus.ACTIVE:
        raise ContractViolation(f"cannot clone {agent.status.value} agent {agent.id}")
    return Agent(
        id=clone_id or f"{agent.id}~g{agent.generation + 1}",
        params=AgentParams(agent.params.weights.copy(), agent.params.bias),
        tool_registry_id=agent.tool_registry_id,
        generation=agent.generation + 1,
        lineage=agent.id,
        status=AgentStatus.CLONE_IN_TRAINING,
        root=agent.root,
    )


def evaluate_delta(candidate: Agent, incumbent: Agent, validation, tools: ToolRegistry, substrate) -> float:
    view = validation if isinstance(validation, TaskBatchView) else batch_view(
        validation.split("val") if isinstance(validation, TaskSet) else validation, tools
    )
    if len(view) == 0:
        raise ConfigError("validation split is empty", "tasks.split_ratios")
    return fitness_vector(candidate.params.vector(), view, substrate) - fitness_vector(incumbent.params.vector(), view, substrate)


@dataclass
class PromotionRecord:
    original_id: str
    clone_id: str
    delta_perf: float
    epsilon_verify: float
    decision: str
    val_size: int
    timestamp: int

    def __post_init__(self):
        if (self.decision == "promoted") != (self.delta_perf >= self.epsilon_verify):
            raise ContractViolation("promotion decision disagrees with the verification margin")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def promote_or_reject(
    delta: float,
    epsilon_verify: float,
    candidate: Agent,
    incumbent: Agent,
    roster: dict[str, Agent],
    timestamp: int = 0,
    val_size: int = 0,
) -> PromotionRecord:
    """Swap statuses in ``roster``: promoted clones replace the incumbent, rejected clones retire."""
    if candidate.status != AgentStatus.CLONE_IN_TRAINING:
        raise ContractViolation(f"{candidate.id} is not a clone in training")
    promoted = delta >= epsilon_verify
    if promoted:
        updates = {
            candidate.id: replace(candidate, status=AgentStatus.ACTIVE),
            incumbent.id: replace(incumbent, status=AgentStatus.RETIRED),
        }
    else:
        updates = {candidate.id: replace(candidate, status=AgentStatus.RETIRED)}
    roster.update(updates)
    return PromotionRecord(
        original_id=incumbent.id,
        clone_id=candidate.id,
        delta_perf=float(delta),
        epsilon_verify=float(epsilon_verify),
        decision="promoted" if promoted else "rejected",
        val_size=val_size,
        timestamp=timestamp,
    )


# -- the loop ---------------------------------------------------------------------


@dataclass
class LineageState:
    rejections: int = 0
    plateaued: bool = False
    curriculum: CurriculumState | None = None

    def to_dict(self) -> dict:
        return {
            "rejections": self.rejections,
            "plateaued": self.plateaued,
            "curriculum": None if self.curriculum is None else self.curriculum.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LineageState":
        cur = d.get("curriculum")
        return cls(d["rejections"], d["plateaued"], None if cur is None else CurriculumState.from_dict(cur))


@dataclass
class LifecycleState:
    position: int
    roster: dict[str, Agent]
    registry: ToolRegistry
    failure: FailureMonitor
    safety: SafetyMonitor
    lineages: dict[str, LineageState] = field(default_factory=dict)
    next_agent: int = 1
    episodes: int = 0
    events: list[dict] = field(default_factory=list)
    telemetry: list[dict] = field(default_factory=list)
    tool_calls: list[int] = field(default_factory=list)
    successes: int = 0
    success_tool_cost: float = 0.0
    cells: set = field(default_factory=set)
    generations: list[list] = field(default_factory=list)
    first_promotion_episode: int | None = None
    status: str = "running"

    def to_dict(self) -> dict:
        return {
            "position": self.position,
            "roster": [a.to_dict() for a in self.roster.values()],
            "registry": self.registry.to_dict(),
            "failure": self.failure.to_dict(),
            "safety": self.safety.to_dict(),
            "lineages": {k: v.to_dict() for k, v in sorted(self.lineages.items())},
            "next_agent": self.next_agent,
            "episodes": self.episodes,
            "events": self.events,
            "telemetry": self.telemetry,
            "tool_calls": self.tool_calls,
            "successes": self.successes,
            "success_tool_cost": self.success_tool_cost,
            "cells": sorted(list(c) for c in self.cells),
            "generations": self.generations,
            "first_promotion_episode": self.first_promotion_episode,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LifecycleState":
        return cls(
            position=d["position"],
            roster={a["id"]: Agent.from_dict(a) for a in d["roster"]},
            registry=ToolRegistry.from_dict(d["registry"]),
            failure=FailureMonitor.from_dict(d["failure"]),
            safety=SafetyMonitor.from_dict(d["safety"]),
            lineages={k: LineageState.from_dict(v) for k, v in d["lineages"].items()},
            next_agent=d["next_agent"],
            episodes=d["episodes"],
            events=list(d["events"]),
            telemetry=list(d["telemetry"]),
            tool_calls=list(d["tool_calls"]),
            successes=d["successes"],
            success_tool_cost=d["success_tool_cost"],
            cells={tuple(c) for c in d["cells"]},
            generations=[list(g) for g in d["generations"]],
            first_promotion_episode=d["first_promotion_episode"],
            status=d["status"],
        )


@dataclass
class RunLog:
    events: list[dict]
    summary: dict

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=1) + "\n"

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]


def seed_agent(n_features: int, agent_id: str = "a0000") -> Agent:
    return Agent(id=agent_id, params=AgentParams.zeros(n_features), generation=0, status=AgentStatus.ACTIVE)


class Lifecycle:
    """Runs the escalation loop over ``stream`` (task ids into ``taskset``)."""

    def __init__(self, config: RunConfig, taskset: TaskSet, stream: Sequence[str], state: LifecycleState):
        self.config = config
        self.taskset = taskset
        self.stream = list(stream)
        self.state = state
        self._views: dict[tuple[str, int], TaskBatchView] = {}

    @classmethod
    def start(cls, config: RunConfig, taskset: TaskSet, stream: Sequence[str], registry: ToolRegistry, roster: Sequence[Agent]) -> "Lifecycle":
        if not roster:
            raise ContractViolation("roster must not be empty")
        th = config.thresholds
        state = LifecycleState(
            position=0,
            roster={a.id: a for a in roster},
            registry=registry,
            failure=FailureMonitor(th.window, th.epsilon_fail),
            safety=SafetyMonitor(th.delta_safe),
            next_agent=len(roster),
        )
        for a in roster:
            state.lineages.setdefault(a.root, LineageState())
        lc = cls(config, taskset, stream, state)
        val = lc.view("val")
        for a in sorted(roster, key=lambda a: a.id):
            if len(val):
                state.generations.append([a.root, a.generation, lc._fit(a, val)])
        lc._log("header", version=LOG_VERSION, seed=config.seed, stream_length=len(lc.stream), roster=sorted(state.roster))
        return lc

    # -- helpers

    def view(self, split: str) -> TaskBatchView:
        key = (split, len(self.state.registry))
        if key not in self._views:
            self._views[key] = batch_view(self.taskset.split(split), self.state.registry)
        return self._views[key]

    def _fit(self, agent: Agent, view: TaskBatchView) -> float:
        return fitness_vector(agent.params.vector(), view, self.config.substrate)

    def _log(self, kind: str, **payload) -> None:
        event = {"kind": kind, "step": self.state.position}
        event.update(payload)
        self.state.events.append(_jsonable(event))

    @property
    def done(self) -> bool:
        return self.state.status != "running" or self.state.position >= len(self.stream)

    # -- one task

    def step(self) -> None:
        st, cfg = self.state, self.config
        t = st.position
        task = self.taskset.get(self.stream[t])
        agent = route(task, list(st.roster.values()), cfg.routing, substream(cfg.seed, "route", t))
        scores = {a.id: affinity(a, task) for a in eligible(list(st.roster.values()))}
        self._log("route", task=task.id, scores=scores, agent=agent.id)

        trace = self._attempt(agent, task, t, 0)
        if trace is None:
            return
        calls = int(trace.tool_used is not None)
        if not trace.success:
            gap = capability_gap(agent, task, st.registry)
            if gap.sum() > cfg.forge.gap_tolerance:
                if self._forge(task, gap, t):
                    retry = self._attempt(agent, task, t, 1)
                    if retry is None:
                        return
                    trace = retry
                    calls += int(trace.tool_used is not None)
        st.tool_calls.append(calls)
        tool = select_tool(task, st.registry) if trace.tool_used else None
        reward = trace_reward(trace, tool, cfg.substrate.lambda_cost)
        if trace.success:
            st.successes += 1
            st.success_tool_cost += trace.cost_incurred
        triggered = record_and_detect(st.failure, agent.id, reward)
        if triggered:
            self._log("failure_trigger", agent=agent.id, window_mean=float(np.mean(st.failure.recent_rewards[agent.id])))
            self._maybe_evolve(agent, task)
        st.position += 1
        if st.position >= len(self.stream) and st.status == "running":
            st.status = "completed"

    def _attempt(self, agent: Agent, task, t: int, index: int) -> Trace | None:
        st, cfg = self.state, self.config
        trace = attempt(agent, task, st.registry, substream(cfg.seed, "attempt", agent.id, task.id, t, index), cfg.substrate)
        self._log(
            "attempt",
            agent=agent.id,
            task=task.id,
            index=index,
            tool=trace.tool_used,
            success=trace.success,
            unsafe=trace.unsafe,
            raw=trace.raw_task_reward,
            spent=st.registry.spent,
        )
        if check_safety(st.safety, trace) == SafetyStatus.VIOLATION:
            self._log(
                "safety_violation",
                flagged=True,
                unsafe=st.safety.unsafe_count,
                total=st.safety.total_count,
                upper=wilson_upper(st.safety.unsafe_count, st.safety.total_count, st.safety.z),
                delta_safe=st.safety.delta_safe,
            )
            st.status = "halted_safety"
            return None
        return trace

    def _forge(self, task, gap: np.ndarray, t: int) -> bool:
        st, cfg = self.state, self.config
        proposal = synthesize(task, gap, cfg.forge, st.registry, substream(cfg.seed, "forge", t), step=t)
        if isinstance(proposal, BudgetRefusal):
            self._log("synthesis", task=task.id, gap=gap, outcome="budget_refusal", cost=proposal.requested, spent=st.registry.spent, budget=st.registry.budget)
            return False
        ok = validate(proposal, [task], cfg.forge.validation_trials, substream(cfg.seed, "validate", t), cfg.forge.min_exec_rate)
        self._log(
            "synthesis",
            task=task.id,
            gap=gap,
            tool=proposal.id,
            cost=proposal.cost,
            exec_prob=proposal.exec_prob,
            outcome="accepted" if ok else "failed_validation",
            spent=st.registry.spent,
            budget=st.registry.budget,
        )
        if not ok:
            return False
        st.registry = deploy(st.registry, proposal)
        self._log("deploy", tool=proposal.id, spent=st.registry.spent, budget=st.registry.budget, n_tools=len(st.registry))
        return True

    # -- evolution episode

    def _maybe_evolve(self, agent: Agent, task) -> None:
        st, cfg = self.state, self.config
        lineage = st.lineages.setdefault(agent.root, LineageState())
        budget = cfg.evolution.max_episodes
        if lineage.plateaued or (budget >= 0 and st.episodes >= budget):
            st.failure.reset(agent.id)
            return
        val = self.view("val")
        if len(val) == 0:
            raise ConfigError("validation split is empty", "tasks.split_ratios")
        mode = select_mode(cfg.evolution, task.difficulty, lineage.rejections)
        clone = clone_agent(agent, f"a{st.next_agent:04d}")
        st.next_agent += 1
        st.roster[clone.id] = clone
        st.episodes += 1
        episode = st.episodes
        self._log("clone", original=agent.id, clone=clone.id, generation=clone.generation, mode=mode.value, episode=episode)

        incumbent_fit = self._fit(agent, val)
        target = incumbent_fit + cfg.thresholds.epsilon_verify
        result = self._train(mode, clone, lineage, val, target)
        candidate = replace(clone, params=result.params)
        st.roster[clone.id] = candidate

        cell = cfg.metrics.grid_cell
        for theta in result.visited:
            st.cells.add(tuple(int(c) for c in np.floor(np.asarray(theta) / cell)))
        for row in result.telemetry:
            st.telemetry.append({"episode": episode, **row})

        delta = evaluate_delta(candidate, agent, val, st.registry, cfg.substrate)
        record = promote_or_reject(delta, cfg.thresholds.epsilon_verify, candidate, agent, st.roster, st.position, len(val))
        candidate_fit = incumbent_fit + delta
        self._log(
            "promotion",
            **record.to_dict(),
            mode=mode.value,
            episode=episode,
            incumbent_fitness=incumbent_fit,
            candidate_fitness=candidate_fit,
            train_steps=result.steps_run,
            lineage_root=agent.root,
        )
        st.failure.reset(agent.id)
        if record.decision == "promoted":
            lineage.rejections = 0
            st.generations.append([agent.root, candidate.generation, candidate_fit])
            if st.first_promotion_episode is None:
                st.first_promotion_episode = episode
        else:
            lineage.rejections += 1
            if lineage.rejections >= cfg.evolution.max_rejections:
                lineage.plateaued = True
                self._log("plateau", lineage_root=agent.root, rejections=lineage.rejections)

    def _train(self, mode: EvolutionMode, clone: Agent, lineage: LineageState, val: TaskBatchView, target: float) -> TrainResult:
        cfg = self.config
        if mode == EvolutionMode.CL:
            if lineage.curriculum is None:
                lineage.curriculum = init_curriculum(self.taskset, cfg.cl)
            result = cl_train(
                clone, lineage.curriculum, self.taskset, self.state.registry, cfg.cl.steps, cfg.seed,
                substrate=cfg.substrate, config=cfg.cl, validation=val, target=target,
            )
            lineage.curriculum = result.state
            return result
        if mode == EvolutionMode.RL:
            return rl_train(
                clone, self.view("train"), val, cfg.rl.steps, cfg.seed,
                substrate=cfg.substrate, config=cfg.rl, target=target,
            )
        return ga_train(clone, val, cfg.seed, substrate=cfg.substrate, config=cfg.ga, target=target)

    # -- driving

    def run(self, until: int | None = None) -> "Lifecycle":
        stop = len(self.stream) if until is None else min(until, len(self.stream))
        while not self.done and self.state.position < stop:
            self.step()
        return self

    def active_agents(self) -> list[Agent]:
        return eligible(list(self.state.roster.values()))

    def runlog(self) -> RunLog:
        st = self.state
        promotions = [e for e in st.events if e["kind"] == "promotion"]
        summary = {
            "version": LOG_VERSION,
            "seed": self.config.seed,
            "status": st.status,
            "position": st.position,
            "episodes": st.episodes,
            "promotions": sum(e["decision"] == "promoted" for e in promotions),
            "rejections": sum(e["decision"] == "rejected" for e in promotions),
            "syntheses": sum(1 for e in st.events if e["kind"] == "deploy"),
            "budget_refusals": sum(1 for e in st.events if e["kind"] == "synthesis" and e["outcome"] == "budget_refusal"),
            "spent": st.registry.spent,
            "budget": st.registry.budget,
            "active_agents": [a.id for a in self.active_agents()],
            "unsafe": st.safety.unsafe_count,
            "traces": st.safety.total_count,
        }
        return RunLog(events=list(st.events), summary=_jsonable(summary))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def run_lifecycle(config: RunConfig, taskset: TaskSet, stream: Sequence[str], registry: ToolRegistry, roster: Sequence[Agent]) -> RunLog:
    return Lifecycle.start(config, taskset, stream, registry, roster).run().runlog()
