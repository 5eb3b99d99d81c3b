"""Parametric agents, simulated attempts and the reward calculus.

An agent's competence on a task is ``sigmoid(w . x + b - beta * difficulty)``
scaled by the coverage of the tool it picks.  An attempt draws, in order:

1. ``u_solve``  - the reasoning solves the task iff ``u_solve < success_prob``
2. ``u_exec``   - the tool executes iff ``u_exec < exec_prob`` (tool-free: always)
3. ``u_unsafe`` - unsafe iff ``u_unsafe < hazard`` (see ``Substrate``)
4. partial credit binomial, only when ``partial_credit`` is on and unsolved

``raw_task_reward`` is the task-level reward of the reasoning (1 when solved);
execution reliability enters the trace reward as the ``P_exec`` factor, so the
closed form ``E[raw] * P_exec - lambda * cost`` is exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .taskenv import StepRecord, Task
from .toolforge import Tool, ToolRegistry, coverage, select_tool

AGENT_VERSION = 1


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass
class Substrate:
    """Simulated competence and hazard model."""

    difficulty_penalty: float = 0.6
    lambda_cost: float = 0.01
    hazard_rate: float = 0.0
    unsafe_rate: float = 0.0
    partial_credit: bool = False

    def validate(self, prefix: str = "substrate") -> None:
        if self.difficulty_penalty < 0:
            raise ConfigError("must be >= 0", f"{prefix}.difficulty_penalty")
        if self.lambda_cost < 0:
            raise ConfigError("must be >= 0", f"{prefix}.lambda_cost")
        for name in ("hazard_rate", "unsafe_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError("must be in [0, 1]", f"{prefix}.{name}")


@dataclass(eq=False)
class AgentParams:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float)
        self.bias = float(self.bias)
        if self.weights.ndim != 1:
            raise ContractViolation("weights must be a vector")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ContractViolation("agent parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "AgentParams":
        return cls(np.zeros(dim), 0.0)

    def vector(self) -> np.ndarray:
        """Flat ``[weights..., bias]`` view used by the optimizers."""
        return np.append(self.weights, self.bias)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "AgentParams":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1].copy(), float(vec[-1]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentParams):
            return NotImplemented
        return self.bias == other.bias and np.array_equal(self.weights, other.weights)

    def to_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentParams":
        return cls(np.array(d["weights"], dtype=float), d["bias"])


class AgentStatus(str, enum.Enum):
    ACTIVE = "active"
    CLONE_IN_TRAINING = "clone_in_training"
    RETIRED = "retired"


@dataclass
class Agent:
    id: str
    params: AgentParams
    tool_registry_id: str = "main"
    generation: int = 0
    lineage: str | None = None
    status: AgentStatus = AgentStatus.ACTIVE
    root: str = ""

    def __post_init__(self):
        self.status = AgentStatus(self.status)
        if self.generation < 0:
            raise ContractViolation("generation must be >= 0")
        if not self.root:
            self.root = self.id

    def to_dict(self) -> dict:
        return {
            "version": AGENT_VERSION,
            "id": self.id,
            "params": self.params.to_dict(),
            "tool_registry_id": self.tool_registry_id,
            "generation": self.generation,
            "lineage": self.lineage,
            "status": self.status.value,
            "root": self.root,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Agent":
        return cls(
            id=d["id"],
            params=AgentParams.from_dict(d["params"]),
            tool_registry_id=d["tool_registry_id"],
            generation=int(d["generation"]),
            lineage=d["lineage"],
            status=AgentStatus(d["status"]),
            root=d.get("root", ""),
        )


@dataclass(frozen=True)
class Trace:
    task_id: str
    steps: tuple[StepRecord, ...]
    tool_used: str | None
    success: bool
    raw_task_reward: float
    exec_ok: bool
    cost_incurred: float
    unsafe: bool
    # carried for reward-model featurization and the score-function gradient
    solved: bool = False
    coverage: float = 0.0
    difficulty: int = 1
    exec_prob: float = 1.0

    def __post_init__(self):
        if self.success and not self.exec_ok:
            raise ContractViolation(f"trace {self.task_id}: success without execution")
        if self.unsafe and self.success:
            raise ContractViolation(f"trace {self.task_id}: unsafe trace marked successful")
        if self.cost_incurred < 0:
            raise ContractViolation(f"trace {self.task_id}: negative cost")


def _params(agent_or_params) -> AgentParams:
    return agent_or_params.params if isinstance(agent_or_params, Agent) else agent_or_params


def _check_dims(params: AgentParams, task: Task) -> None:
    if params.dim != task.dim:
        raise ContractViolation(f"agent dimension {params.dim} != task dimension {task.dim}")


def logit(agent, task: Task, beta: float = 0.0) -> float:
    p = _params(agent)
    _check_dims(p, task)
    return float(np.dot(p.weights, task.features) + p.bias - beta * task.difficulty)


def success_prob(agent, task: Task, tool: Tool | None = None, beta: float = 0.0) -> float:
    """``sigmoid(w . x + b - beta * difficulty) * coverage(tool, task)``."""
    z = logit(agent, task, beta)
    cov = coverage(None if tool is None else tool.caps, task.required_caps)
    return float(sigmoid(z)) * cov


def tool_terms(tool: Tool | None) -> tuple[float, float]:
    """``(P_exec, C_cost)``; tool-free attempts execute surely and cost nothing."""
    if tool is None:
        return 1.0, 0.0
    return tool.exec_prob, tool.cost


def _expected_raw(sp: float, cov: float, depth: int, partial_credit: bool) -> float:
    if not partial_credit:
        return sp
    return sp + (1.0 - sp) * (depth - 1) * cov / depth


def _trace_steps(task: Task, tool: Tool | None) -> tuple[StepRecord, ...]:
    steps = [StepRecord("reasoning", payload=f"plan:{task.id}")]
    if tool is not None:
        steps.append(StepRecord("tool_call", tool_id=tool.id, payload=f"call:{tool.id}"))
        steps.append(StepRecord("observation", payload=f"obs:{tool.id}"))
    return tuple(steps)


def attempt(agent, task: Task, tools: ToolRegistry, rng: np.random.Generator, substrate: Substrate | None = None) -> Trace:
    substrate = substrate or Substrate()
    agent_obj = agent if isinstance(agent, Agent) else None
    if agent_obj is not None and agent_obj.status == AgentStatus.RETIRED:
        raise ContractViolation(f"retired agent {agent_obj.id} cannot attempt tasks")
    tool = select_tool(task, tools)
    cov = coverage(None if tool is None else tool.caps, task.required_caps)
    sp = float(sigmoid(logit(agent, task, substrate.difficulty_penalty))) * cov
    p_exec, cost = tool_terms(tool)
    u = rng.random(3)
    solved = bool(u[0] < sp)
    exec_ok = bool(u[1] < p_exec)
    hazard = substrate.unsafe_rate
    if cov < 1.0:
        hazard = 1.0 - (1.0 - hazard) * (1.0 - substrate.hazard_rate)
    unsafe = bool(u[2] < hazard)
    raw = 1.0 if solved else 0.0
    if substrate.partial_credit and not solved:
        depth = task.composition_depth
        raw = float(rng.binomial(depth - 1, cov)) / depth if depth > 1 else 0.0
    return Trace(
        task_id=task.id,
        steps=_trace_steps(task, tool),
        tool_used=None if tool is None else tool.id,
        success=solved and exec_ok and not unsafe,
        raw_task_reward=raw,
        exec_ok=exec_ok,
        cost_incurred=cost,
        unsafe=unsafe,
        solved=solved,
        coverage=cov,
        difficulty=task.difficulty,
        exec_prob=p_exec,
    )


def trace_reward(trace: Trace, tool: Tool | None, lambda_cost: float) -> float:
    """Tool-conditioned reward ``r_task * P_exec - lambda_cost * C_cost``."""
    p_exec, cost = tool_terms(tool)
    return trace.raw_task_reward * p_exec - lambda_cost * cost


def expected_reward(
    agent,
    task: Task,
    tools: ToolRegistry,
    n_samples: int,
    rng: np.random.Generator | None = None,
    substrate: Substrate | None = None,
) -> float:
    """Monte Carlo mean of the trace reward, or the exact value when ``n_samples == 0``."""
    substrate = substrate or Substrate()
    if n_samples < 0:
        raise ContractViolation("n_samples must be >= 0")
    tool = select_tool(task, tools)
    p_exec, cost = tool_terms(tool)
    if n_samples == 0:
        cov = coverage(None if tool is None else tool.caps, task.required_caps)
        sp = float(sigmoid(logit(agent, task, substrate.difficulty_penalty))) * cov
        return _expected_raw(sp, cov, task.composition_depth, substrate.partial_credit) * p_exec - substrate.lambda_cost * cost
    if rng is None:
        raise ContractViolation("Monte Carlo estimation needs an rng")
    total = 0.0
    for _ in range(n_samples):
        total += trace_reward(attempt(agent, task, tools, rng, substrate), tool, substrate.lambda_cost)
    return total / n_samples


# -- vectorized views used by the optimizers ---------------------------------


@dataclass(frozen=True)
class TaskBatchView:
    """Agent-independent per-task arrays for a task list under one registry."""

    tasks: tuple[Task, ...]
    X: np.ndarray
    difficulty: np.ndarray
    depth: np.ndarray
    coverage: np.ndarray
    exec_prob: np.ndarray
    cost: np.ndarray
    tool_ids: tuple[str | None, ...]
    n_tools: int = field(default=0)

    def __len__(self) -> int:
        return len(self.tasks)


def batch_view(tasks: Sequence[Task], registry: ToolRegistry) -> TaskBatchView:
    tasks = tuple(tasks)
    tools = [select_tool(t, registry) for t in tasks]
    F = tasks[0].dim if tasks else 0
    return TaskBatchView(
        tasks=tasks,
        X=np.array([t.features for t in tasks], dtype=float).reshape(len(tasks), F),
        difficulty=np.array([t.difficulty for t in tasks], dtype=float),
        depth=np.array([t.composition_depth for t in tasks], dtype=float),
        coverage=np.array([coverage(None if tl is None else tl.caps, t.required_caps) for t, tl in zip(tasks, tools)]),
        exec_prob=np.array([tool_terms(tl)[0] for tl in tools]),
        cost=np.array([tool_terms(tl)[1] for tl in tools]),
        tool_ids=tuple(None if tl is None else tl.id for tl in tools),
        n_tools=len(registry),
    )


def batch_logits(theta: np.ndarray, view: TaskBatchView, beta: float) -> np.ndarray:
    return view.X @ theta[:-1] + theta[-1] - beta * view.difficulty


def batch_expected_rewards(theta: np.ndarray, view: TaskBatchView, substrate: Substrate) -> np.ndarray:
    sp = sigmoid(batch_logits(theta, view, substrate.difficulty_penalty)) * view.coverage
    raw = sp
    if substrate.partial_credit:
        raw = sp + (1.0 - sp) * (view.depth - 1) * view.coverage / view.depth
    return raw * view.exec_prob - substrate.lambda_cost * view.cost


def simulate_batch(
    theta: np.ndarray,
    view: TaskBatchView,
    substrate: Substrate,
    rng: np.random.Generator,
) -> list[Trace]:
    """Vectorized ``attempt`` over a batch; draws a (n, 3) uniform block, then partial-credit binomials."""
    n = len(view)
    sp = sigmoid(batch_logits(theta, view, substrate.difficulty_penalty)) * view.coverage
    u = rng.random((n, 3))
    solved = u[:, 0] < sp
    exec_ok = u[:, 1] < view.exec_prob
    hazard = np.where(
        view.coverage < 1.0,
        1.0 - (1.0 - substrate.unsafe_rate) * (1.0 - substrate.hazard_rate),
        substrate.unsafe_rate,
    )
    unsafe = u[:, 2] < hazard
    raw = solved.astype(float)
    if substrate.partial_credit:
        k = rng.binomial(np.maximum(view.depth - 1, 0).astype(int), view.coverage)
        raw = np.where(solved, 1.0, k / view.depth)
    traces = []
    for i, task in enumerate(view.tasks):
        tid = view.tool_ids[i]
        steps = (StepRecord("reasoning", payload=f"plan:{task.id}"),)
        if tid is not None:
            steps += (StepRecord("tool_call", tool_id=tid, payload=f"call:{tid}"), StepRecord("observation", payload=f"obs:{tid}"))
        traces.append(
            Trace(
                task_id=task.id,
                steps=steps,
                tool_used=tid,
                success=bool(solved[i] and exec_ok[i] and not unsafe[i]),
                raw_task_reward=float(raw[i]),
                exec_ok=bool(exec_ok[i]),
                cost_incurred=float(view.cost[i]),
                unsafe=bool(unsafe[i]),
                solved=bool(solved[i]),
                coverage=float(view.coverage[i]),
                difficulty=task.difficulty,
                exec_prob=float(view.exec_prob[i]),
            )
        )
    return traces


def env_reward(trace: Trace, lambda_cost: float) -> float:
    """Trace reward using the exec probability and cost recorded on the trace."""
    return trace.raw_task_reward * trace.exec_prob - lambda_cost * trace.cost_incurred


def with_params(agent: Agent, params: AgentParams) -> Agent:
    return replace(agent, params=params)
