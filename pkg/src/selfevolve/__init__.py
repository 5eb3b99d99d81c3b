"""Deterministic simulation of a self-evolving agent lifecycle.

Agents route over a task stream, synthesize tools when they lack
capabilities, and on sustained failure spawn a clone that is trained by
curriculum learning, reward learning or a genetic algorithm; the clone
replaces its original only if it verifiably improves on held-out tasks.
"""

from .agentcore import Agent, AgentParams, AgentStatus, Substrate, Trace, attempt, expected_reward, success_prob
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ContractViolation,
    DuplicationError,
    ParseError,
    RoutingError,
    SchemaError,
    SelfEvolveError,
    UnsupportedVersionError,
)
from .evolution import EvolutionMode
from .lifecycle import Lifecycle, PromotionRecord, RunLog, run_lifecycle
from .taskenv import Task, TaskSet, generate_tasks, ingest_taskcraft
from .toolforge import Tool, ToolRegistry

__version__ = "0.1.0"
