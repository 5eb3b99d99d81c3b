"""Simulated code-generation role: tool synthesis, validation and deployment.

Tools are capability vectors with an execution probability and a cost.
Registries are immutable values; ``deploy`` returns a new registry so a
refused or rejected synthesis can never leave partial state behind.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, DuplicationError
from .taskenv import Task

REGISTRY_VERSION = 1


@dataclass(frozen=True)
class Tool:
    id: str
    caps: tuple[float, ...]
    exec_prob: float
    cost: float
    provenance: str = "synthesized"
    created_at: int = 0

    def __post_init__(self):
        if not 0.0 <= self.exec_prob <= 1.0:
            raise ContractViolation(f"tool {self.id}: exec_prob {self.exec_prob} outside [0, 1]")
        if self.cost < 0:
            raise ContractViolation(f"tool {self.id}: negative cost")
        if self.provenance not in ("builtin", "synthesized"):
            raise ContractViolation(f"tool {self.id}: unknown provenance {self.provenance!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "caps": list(self.caps),
            "exec_prob": self.exec_prob,
            "cost": self.cost,
            "provenance": self.provenance,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tool":
        return cls(
            id=d["id"],
            caps=tuple(float(x) for x in d["caps"]),
            exec_prob=float(d["exec_prob"]),
            cost=float(d["cost"]),
            provenance=d["provenance"],
            created_at=int(d["created_at"]),
        )


@dataclass(frozen=True)
class ToolRegistry:
    tools: tuple[Tool, ...] = ()
    spent: float = 0.0
    budget: float = 0.0
    id: str = "main"
    _caps: np.ndarray = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.spent > self.budget:
            raise ContractViolation(f"registry {self.id}: spent {self.spent} exceeds budget {self.budget}")
        ids = [t.id for t in self.tools]
        if len(set(ids)) != len(ids):
            raise DuplicationError(f"registry {self.id}: duplicate tool ids")
        caps = np.array([t.caps for t in self.tools], dtype=float) if self.tools else None
        object.__setattr__(self, "_caps", caps)

    def __len__(self) -> int:
        return len(self.tools)

    @property
    def caps_matrix(self) -> np.ndarray | None:
        return self._caps

    def to_dict(self) -> dict:
        return {
            "version": REGISTRY_VERSION,
            "id": self.id,
            "budget": self.budget,
            "spent": self.spent,
            "tools": [t.to_dict() for t in self.tools],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolRegistry":
        return cls(
            tools=tuple(Tool.from_dict(t) for t in d["tools"]),
            spent=float(d["spent"]),
            budget=float(d["budget"]),
            id=d["id"],
        )


@dataclass(frozen=True)
class BudgetRefusal:
    """Returned by ``synthesize`` when the proposed tool would breach the budget."""

    requested: float
    spent: float
    budget: float

    def __bool__(self) -> bool:
        return False


@dataclass
class ForgeConfig:
    """Knobs for the simulated code-generation role."""

    kappa: float = 1.0
    noise_sd: float = 0.05
    reliability_alpha: float = 8.0
    reliability_beta: float = 2.0
    min_exec_rate: float = 0.6
    validation_trials: int = 20
    budget: float = 40.0
    gap_tolerance: float = 1.0
    n_builtin: int = 4
    builtin_cap_max: float = 0.5
    builtin_exec_prob: float = 0.9

    def validate(self, prefix: str = "forge") -> None:
        if self.kappa < 0:
            raise ConfigError("must be >= 0", f"{prefix}.kappa")
        if self.noise_sd < 0:
            raise ConfigError("must be >= 0", f"{prefix}.noise_sd")
        if self.reliability_alpha <= 0 or self.reliability_beta <= 0:
            raise ConfigError("Beta parameters must be > 0", f"{prefix}.reliability_alpha")
        if not 0 <= self.min_exec_rate <= 1:
            raise ConfigError("must be in [0, 1]", f"{prefix}.min_exec_rate")
        if self.validation_trials < 1:
            raise ConfigError("must be >= 1", f"{prefix}.validation_trials")
        if self.budget < 0:
            raise ConfigError("must be >= 0", f"{prefix}.budget")
        if self.gap_tolerance < 0:
            raise ConfigError("must be >= 0", f"{prefix}.gap_tolerance")
        if self.n_builtin < 0:
            raise ConfigError("must be >= 0", f"{prefix}.n_builtin")
        if not 0 <= self.builtin_cap_max <= 1:
            raise ConfigError("must be in [0, 1]", f"{prefix}.builtin_cap_max")
        if not 0 <= self.builtin_exec_prob <= 1:
            raise ConfigError("must be in [0, 1]", f"{prefix}.builtin_exec_prob")


def coverage(caps: Sequence[float] | np.ndarray | None, required: Sequence[float] | np.ndarray) -> float:
    """Fraction of the demanded capability mass a tool supplies (1 for zero demand)."""
    req = np.asarray(required, dtype=float)
    total = float(req.sum())
    if total <= 0:
        return 1.0
    if caps is None:
        return 0.0
    return float(np.minimum(np.asarray(caps, dtype=float), req).sum() / total)


def select_tool(task: Task, registry: ToolRegistry) -> Tool | None:
    """Best-covering tool; ties by lowest cost then id.  None when no tool helps."""
    req = np.asarray(task.required_caps)
    if not registry.tools or req.sum() <= 0:
        return None
    # ranking by shortfall equals ranking by coverage, but a tiny uncovered demand
    # does not vanish into the coverage ratio's rounding
    shortfall = np.maximum(0.0, req - registry.caps_matrix).sum(axis=1)
    best = shortfall.min()
    candidates = [t for t, s in zip(registry.tools, shortfall) if s == best]
    tool = min(candidates, key=lambda t: (t.cost, t.id))
    return tool if np.minimum(tool.caps, req).sum() > 0 else None


def capability_gap(agent, task: Task, registry: ToolRegistry) -> np.ndarray:
    """Elementwise shortfall of the best available tool against the task's demand.

    ``agent`` is accepted for interface symmetry; tool choice does not depend on it.
    """
    req = np.asarray(task.required_caps, dtype=float)
    tool = select_tool(task, registry)
    if tool is None:
        return req.copy()
    return np.maximum(0.0, req - np.asarray(tool.caps))


def synthesize(
    task: Task,
    gap: Sequence[float] | np.ndarray,
    forge_config: ForgeConfig,
    registry: ToolRegistry,
    rng: np.random.Generator,
    step: int = 0,
) -> Tool | BudgetRefusal:
    """Propose a tool that extends the best existing coverage by ``gap``.

    Draw order: ``F`` Gaussian cap-noise draws (skipped when ``noise_sd`` is 0),
    then one Beta draw for ``exec_prob``.
    """
    if forge_config.kappa < 0:
        raise ConfigError("must be >= 0", "forge.kappa")
    gap = np.asarray(gap, dtype=float)
    if not np.any(gap > 0):
        raise ContractViolation("synthesis requested for a zero capability gap")
    req = np.asarray(task.required_caps, dtype=float)
    base = select_tool(task, registry)
    covered = np.minimum(np.asarray(base.caps), req) if base is not None else np.zeros_like(req)
    caps = covered + gap
    # covered + (req - covered) can round just below req; snap so the gap closes exactly
    caps = np.where(np.abs(caps - req) <= 1e-12, np.maximum(caps, req), caps)
    if forge_config.noise_sd > 0:
        caps = caps + rng.normal(0.0, forge_config.noise_sd, size=caps.shape)
    caps = np.clip(caps, 0.0, 1.0)
    exec_prob = float(rng.beta(forge_config.reliability_alpha, forge_config.reliability_beta))
    cost = float(forge_config.kappa * caps.sum())
    if registry.spent + cost > registry.budget:
        return BudgetRefusal(requested=cost, spent=registry.spent, budget=registry.budget)
    n_synth = sum(1 for t in registry.tools if t.provenance == "synthesized")
    return Tool(
        id=f"syn{n_synth:04d}",
        caps=tuple(float(x) for x in caps),
        exec_prob=exec_prob,
        cost=cost,
        provenance="synthesized",
        created_at=step,
    )


def validate(
    tool: Tool,
    probe_tasks: Sequence[Task],
    n_trials: int,
    rng: np.random.Generator,
    min_exec_rate: float = 0.6,
) -> bool:
    """Execution check: accept iff the empirical success rate over ``n_trials`` runs reaches ``min_exec_rate``."""
    if n_trials < 1:
        raise ContractViolation("n_trials must be >= 1")
    successes = int((rng.random(n_trials) < tool.exec_prob).sum())
    return successes / n_trials >= min_exec_rate


def deploy(registry: ToolRegistry, tool: Tool) -> ToolRegistry:
    if any(t.id == tool.id for t in registry.tools):
        raise DuplicationError(f"tool id {tool.id!r} already deployed")
    spent = registry.spent + tool.cost
    if spent > registry.budget:
        raise ContractViolation(f"deploying {tool.id} would spend {spent} > budget {registry.budget}")
    return replace(registry, tools=registry.tools + (tool,), spent=spent)


def builtin_registry(forge_config: ForgeConfig, n_features: int, rng: np.random.Generator) -> ToolRegistry:
    """Starting registry of generic tools; builtins carry no generation cost."""
    tools = tuple(
        Tool(
            id=f"builtin{i:02d}",
            caps=tuple(float(x) for x in rng.uniform(0.0, forge_config.builtin_cap_max, size=n_features)),
            exec_prob=forge_config.builtin_exec_prob,
            cost=0.0,
            provenance="builtin",
            created_at=0,
        )
        for i in range(forge_config.n_builtin)
    )
    return ToolRegistry(tools=tools, spent=0.0, budget=forge_config.budget)
