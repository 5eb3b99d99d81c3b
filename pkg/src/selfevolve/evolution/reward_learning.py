"""Reward-based evolution: a Bradley-Terry trace reward model and REINFORCE.

The stochastic choice the policy controls is whether the reasoning solves
the task, ``solved ~ Bernoulli(sigmoid(z) * coverage)`` with
``z = w . x + b - beta * difficulty``.  The update minimizes

    L(theta) = -mean_i A_i * log P_theta(solved_i) + gamma / 2 * |theta|^2

with advantages ``A_i = R_i - mean(R)``; its gradient is the usual
likelihood-ratio estimate of ``-grad E[R]`` plus L2 shrinkage.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..agentcore import (
    Agent,
    AgentParams,
    AgentStatus,
    Substrate,
    TaskBatchView,
    Trace,
    env_reward,
    sigmoid,
    simulate_batch,
)
from ..errors import ConfigError, ContractViolation
from ..rng import substream
from ..taskenv import Task
from .fitness import TrainResult, fitness_vector

FEATURE_NAMES = ("coverage", "success", "cost", "n_steps", "difficulty")


def take(view: TaskBatchView, idx) -> TaskBatchView:
    idx = np.asarray(idx, dtype=int)
    return replace(
        view,
        tasks=tuple(view.tasks[i] for i in idx),
        X=view.X[idx],
        difficulty=view.difficulty[idx],
        depth=view.depth[idx],
        coverage=view.coverage[idx],
        exec_prob=view.exec_prob[idx],
        cost=view.cost[idx],
        tool_ids=tuple(view.tool_ids[i] for i in idx),
    )


# -- reward model ---------------------------------------------------------------


@dataclass(eq=False)
class RewardModel:
    phi_weights: np.ndarray
    phi_bias: float = 0.0

    def __post_init__(self):
        self.phi_weights = np.array(self.phi_weights, dtype=float)
        if not (np.all(np.isfinite(self.phi_weights)) and np.isfinite(self.phi_bias)):
            raise ContractViolation("reward model parameters must be finite")

    @classmethod
    def zero(cls) -> "RewardModel":
        return cls(np.zeros(len(FEATURE_NAMES)), 0.0)

    def to_dict(self) -> dict:
        return {"phi_weights": [float(x) for x in self.phi_weights], "phi_bias": float(self.phi_bias)}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardModel":
        return cls(np.array(d["phi_weights"], dtype=float), d["phi_bias"])


@dataclass
class RewardFitConfig:
    iterations: int = 200
    learning_rate: float = 0.5
    l2: float = 1e-3

    def validate(self, prefix: str = "rl.reward_fit") -> None:
        if self.iterations < 1:
            raise ConfigError("must be >= 1", f"{prefix}.iterations")
        if not self.learning_rate > 0:
            raise ConfigError("must be > 0", f"{prefix}.learning_rate")
        if self.l2 < 0:
            raise ConfigError("must be >= 0", f"{prefix}.l2")


def trace_features(trace: Trace) -> np.ndarray:
    return np.array(
        [trace.coverage, float(trace.success), trace.cost_incurred, float(len(trace.steps)), float(trace.difficulty)]
    )


def score_trace(model: RewardModel, trace: Trace) -> float:
    return float(model.phi_weights @ trace_features(trace) + model.phi_bias)


def fit_reward_model(
    pairs: Sequence[tuple[Trace, Trace]],
    fit_config: RewardFitConfig | None = None,
    init: RewardModel | None = None,
) -> RewardModel:
    """Maximize the Bradley-Terry log-likelihood that each first trace outranks the second.

    Runs on per-feature rescaled differences so one learning rate suits
    features of different magnitude; the bias cancels in every pairwise
    difference and is left at zero.
    """
    cfg = fit_config or RewardFitConfig()
    if not pairs:
        raise ConfigError("need at least one preference pair", "rl.reward_fit")
    D = np.array([trace_features(p) - trace_features(n) for p, n in pairs])
    scale = np.abs(D).max(axis=0)
    scale[scale == 0] = 1.0
    Ds = D / scale
    phi = np.zeros(D.shape[1]) if init is None else init.phi_weights * scale
    for _ in range(cfg.iterations):
        margin = Ds @ phi
        grad = Ds.T @ sigmoid(-margin) / len(Ds) - cfg.l2 * phi
        phi = phi + cfg.learning_rate * grad
    return RewardModel(phi / scale, 0.0)


def preference_pairs(traces: Sequence[Trace], lambda_cost: float) -> list[tuple[Trace, Trace]]:
    """Adjacent traces with different environment reward, ordered better-first."""
    pairs = []
    for a, b in zip(traces[:-1], traces[1:]):
        ra, rb = env_reward(a, lambda_cost), env_reward(b, lambda_cost)
        if ra > rb:
            pairs.append((a, b))
        elif rb > ra:
            pairs.append((b, a))
    return pairs


# -- policy gradient ----------------------------------------------------------


@dataclass
class PolicyBatch:
    """Design matrix ``[x, 1]``, difficulty offsets, coverage and outcomes of a batch."""

    X1: np.ndarray
    offset: np.ndarray
    coverage: np.ndarray
    solved: np.ndarray

    @classmethod
    def from_arrays(cls, X, difficulty, coverage, solved, beta: float) -> "PolicyBatch":
        X = np.asarray(X, dtype=float)
        return cls(
            X1=np.hstack([X, np.ones((X.shape[0], 1))]),
            offset=beta * np.asarray(difficulty, dtype=float),
            coverage=np.asarray(coverage, dtype=float),
            solved=np.asarray(solved, dtype=bool),
        )


def log_likelihood(theta: np.ndarray, batch: PolicyBatch) -> np.ndarray:
    z = batch.X1 @ theta - batch.offset
    with np.errstate(divide="ignore"):
        log_solved = np.log(batch.coverage) + np.log(sigmoid(z))
        log_failed = np.log((1.0 - batch.coverage) + batch.coverage * sigmoid(-z))
    return np.where(batch.solved, log_solved, log_failed)


def score_coefficients(theta: np.ndarray, batch: PolicyBatch) -> np.ndarray:
    """d log P(outcome) / dz per row."""
    z = batch.X1 @ theta - batch.offset
    s, sbar = sigmoid(z), sigmoid(-z)
    cov = batch.coverage
    failed = -cov * s * sbar / ((1.0 - cov) + cov * sbar)
    return np.where(batch.solved, sbar, failed)


def surrogate_loss(theta: np.ndarray, batch: PolicyBatch, advantages: np.ndarray, gamma: float) -> float:
    return float(-np.mean(advantages * log_likelihood(theta, batch)) + 0.5 * gamma * theta @ theta)


def surrogate_grad(theta: np.ndarray, batch: PolicyBatch, advantages: np.ndarray, gamma: float) -> np.ndarray:
    coef = np.asarray(advantages) * score_coefficients(theta, batch)
    return -(batch.X1.T @ coef) / len(coef) + gamma * theta


def pg_update(
    theta: np.ndarray,
    view: TaskBatchView,
    traces: Sequence[Trace],
    rewards: np.ndarray,
    eta: float,
    gamma: float,
    beta: float,
) -> np.ndarray:
    batch = PolicyBatch.from_arrays(view.X, view.difficulty, view.coverage, [t.solved for t in traces], beta)
    advantages = rewards - rewards.mean()
    return theta - eta * surrogate_grad(theta, batch, advantages, gamma)


def policy_gradient_step(
    params: AgentParams,
    traces: Sequence[tuple[Trace, Task]],
    reward_fn: Callable[[Trace], float],
    eta: float,
    gamma: float,
    beta: float = 0.0,
) -> AgentParams:
    """One REINFORCE step with a batch-mean baseline; ``params`` is left untouched."""
    if not traces:
        raise ContractViolation("policy gradient needs a non-empty batch")
    if eta < 0:
        raise ConfigError("must be >= 0", "eta")
    X = np.array([task.features for _, task in traces], dtype=float)
    batch = PolicyBatch.from_arrays(
        X,
        [task.difficulty for _, task in traces],
        [tr.coverage for tr, _ in traces],
        [tr.solved for tr, _ in traces],
        beta,
    )
    rewards = np.array([reward_fn(tr) for tr, _ in traces], dtype=float)
    theta = params.vector()
    return AgentParams.from_vector(theta - eta * surrogate_grad(theta, batch, rewards - rewards.mean(), gamma))


@dataclass
class RLConfig:
    steps: int = 200
    batch_size: int = 32
    eta: float = 0.05
    gamma: float = 1e-3
    refit_every: int = 10
    buffer_size: int = 256
    eval_every: int = 5
    reward_fit: RewardFitConfig = field(default_factory=RewardFitConfig)

    def validate(self, prefix: str = "rl") -> None:
        if self.steps < 0:
            raise ConfigError("must be >= 0", f"{prefix}.steps")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", f"{prefix}.batch_size")
        if not self.eta > 0:
            raise ConfigError("must be > 0", f"{prefix}.eta")
        if self.gamma < 0:
            raise ConfigError("must be >= 0", f"{prefix}.gamma")
        for name in ("refit_every", "buffer_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", f"{prefix}.{name}")
        self.reward_fit.validate(f"{prefix}.reward_fit")


def rl_train(
    clone: Agent,
    train: TaskBatchView,
    validation: TaskBatchView,
    steps: int,
    seed: int,
    *,
    substrate: Substrate,
    config: RLConfig,
    target: float | None = None,
) -> TrainResult:
    """On-policy REINFORCE against a periodically refitted preference reward model."""
    if clone.status != AgentStatus.CLONE_IN_TRAINING:
        raise ContractViolation(f"agent {clone.id} is not a clone in training")
    theta = clone.params.vector()
    val = fitness_vector(theta, validation, substrate)
    result = TrainResult(params=clone.params, steps_run=0, val_before=val, val_after=val)
    if steps <= 0 or len(train) == 0:
        return result
    model = RewardModel.zero()
    buffer: deque[Trace] = deque(maxlen=config.buffer_size)
    for step in range(steps):
        rng = substream(seed, "rl", clone.id, step)
        view = take(train, rng.integers(len(train), size=config.batch_size))
        traces = simulate_batch(theta, view, substrate, rng)
        buffer.extend(traces)
        if step % config.refit_every == 0:
            pairs = preference_pairs(list(buffer), substrate.lambda_cost)
            if pairs:
                model = fit_reward_model(pairs, config.reward_fit, init=model)
        rewards = np.array([score_trace(model, t) for t in traces])
        theta = pg_update(theta, view, traces, rewards, config.eta, config.gamma, substrate.difficulty_penalty)
        result.visited.append(theta.copy())
        result.steps_run = step + 1
        last = step == steps - 1
        if (step + 1) % config.eval_every == 0 or last:
            val = fitness_vector(theta, validation, substrate)
            tool_use = float(np.mean([t.tool_used is not None for t in traces]))
            result.telemetry.append({"step": step + 1, "mode": "RL", "arm": "", "val_perf": val, "mean_tool_use": tool_use})
            if target is not None and val >= target:
                break
    result.params = AgentParams.from_vector(theta)
    result.val_after = fitness_vector(theta, validation, substrate)
    result.state = model
    return result
