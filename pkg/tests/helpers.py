"""Small constructors shared by the test modules."""

import numpy as np

from selfevolve.agentcore import Agent, AgentParams, AgentStatus
from selfevolve.taskenv import Task
from selfevolve.toolforge import Tool, ToolRegistry


def make_task(features, caps=None, difficulty=1, depth=None, task_id="t0"):
    features = tuple(float(x) for x in features)
    caps = tuple(float(x) for x in (caps if caps is not None else [0.0] * len(features)))
    return Task(
        id=task_id,
        features=features,
        difficulty=difficulty,
        required_caps=caps,
        composition_depth=depth if depth is not None else difficulty,
        gold_output="ok",
    )


def make_agent(weights, bias=0.0, agent_id="a0", status=AgentStatus.ACTIVE, generation=0):
    return Agent(id=agent_id, params=AgentParams(np.array(weights, dtype=float), bias), status=status, generation=generation)


def make_tool(caps, exec_prob=1.0, cost=0.0, tool_id="tool0"):
    return Tool(id=tool_id, caps=tuple(float(x) for x in caps), exec_prob=exec_prob, cost=cost)


def make_registry(*tools, budget=100.0):
    return ToolRegistry(tools=tuple(tools), spent=float(sum(t.cost for t in tools)), budget=budget)
