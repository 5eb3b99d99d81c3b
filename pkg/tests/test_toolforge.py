import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from selfevolve.errors import ConfigError, ContractViolation, DuplicationError
from selfevolve.rng import substream
from selfevolve.toolforge import (
    BudgetRefusal,
    ForgeConfig,
    ToolRegistry,
    capability_gap,
    deploy,
    select_tool,
    synthesize,
    validate,
)

from helpers import make_agent, make_registry, make_task, make_tool

AGENT = make_agent([0.0, 0.0])


# -- capability_gap -------------------------------------------------------------------


def test_gap_zero_when_covered():
    task = make_task([0.0, 0.0], caps=[0.5, 0.9])
    assert np.array_equal(capability_gap(AGENT, task, make_registry(make_tool([0.6, 0.9]))), [0.0, 0.0])


def test_gap_full_for_empty_registry():
    task = make_task([0.0, 0.0], caps=[0.5, 0.9])
    assert np.array_equal(capability_gap(AGENT, task, ToolRegistry()), [0.5, 0.9])


def test_gap_elementwise():
    task = make_task([0.0, 0.0], caps=[0.5, 0.9])
    gap = capability_gap(AGENT, task, make_registry(make_tool([0.5, 0.4])))
    assert gap == pytest.approx([0.0, 0.5], abs=1e-15)


def test_tool_selection_tie_break():
    task = make_task([0.0, 0.0], caps=[0.5, 0.5])
    tools = make_registry(make_tool([1, 1], cost=2.0, tool_id="b"), make_tool([1, 1], cost=1.0, tool_id="c"), make_tool([1, 1], cost=1.0, tool_id="a"))
    assert select_tool(task, tools).id == "a"


# -- synthesize -------------------------------------------------------------------------


def test_synthesize_refuses_without_budget():
    task = make_task([0.0, 0.0], caps=[0.5, 0.5])
    out = synthesize(task, [0.5, 0.5], ForgeConfig(), ToolRegistry(budget=0.0), substream(0, "f"))
    assert isinstance(out, BudgetRefusal)
    assert not out


def test_synthesize_is_deterministic():
    task = make_task([0.0, 0.0, 0.0], caps=[0.5, 0.2, 0.7])
    reg = ToolRegistry(budget=10.0)
    assert synthesize(task, [0.5, 0.2, 0.7], ForgeConfig(), reg, substream(2, "f")) == synthesize(task, [0.5, 0.2, 0.7], ForgeConfig(), reg, substream(2, "f"))


def test_synthesize_cost_formula():
    task = make_task([0.0, 0.0], caps=[0.5, 0.5])
    tool = synthesize(task, [0.5, 0.5], ForgeConfig(kappa=1.0, noise_sd=0.0), ToolRegistry(budget=10.0), substream(0, "f"))
    assert tool.cost == 1.0


def test_synthesize_errors():
    task = make_task([0.0, 0.0], caps=[0.5, 0.5])
    with pytest.raises(ContractViolation):
        synthesize(task, [0.0, 0.0], ForgeConfig(), ToolRegistry(budget=10.0), substream(0, "f"))
    with pytest.raises(ConfigError):
        synthesize(task, [0.5, 0.5], ForgeConfig(kappa=-1.0), ToolRegistry(budget=10.0), substream(0, "f"))


@settings(max_examples=50, deadline=None)
@given(
    req=st.lists(st.floats(0, 1), min_size=3, max_size=3),
    base=st.lists(st.floats(0, 1), min_size=3, max_size=3),
    seed=st.integers(0, 1000),
)
@example(req=[1.0, 4.846642839451189e-223, 0.0], base=[1.0, 0.0, 0.0], seed=0)  # gap below the coverage ratio's resolution
def test_gap_soundness_after_deploy(req, base, seed):
    task = make_task([0.0] * 3, caps=req)
    registry = make_registry(make_tool(base, cost=0.0, tool_id="base"), budget=10.0)
    gap = capability_gap(AGENT, task, registry)
    if not np.any(gap > 0):
        return
    tool = synthesize(task, gap, ForgeConfig(noise_sd=0.0), registry, substream(seed, "f"))
    after = deploy(registry, tool)
    assert np.array_equal(capability_gap(AGENT, task, after), np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(budget=st.floats(0, 6), seed=st.integers(0, 10_000), n=st.integers(1, 12))
def test_budget_never_exceeded(budget, seed, n):
    g = np.random.default_rng(seed)
    registry = ToolRegistry(budget=budget)
    for i in range(n):
        task = make_task([0.0] * 4, caps=g.uniform(0, 1, 4), task_id=f"t{i}")
        gap = capability_gap(AGENT, task, registry)
        if not np.any(gap > 0):
            continue
        before = registry
        out = synthesize(task, gap, ForgeConfig(), registry, substream(seed, i), step=i)
        if isinstance(out, BudgetRefusal):
            assert registry == before and registry.tools is before.tools
            continue
        registry = deploy(registry, out)
        assert registry.tools[: len(before.tools)] == before.tools
        assert registry.spent <= registry.budget


# -- validate -----------------------------------------------------------------------------


def test_validate_perfect_and_dead_tools():
    probe = [make_task([0.0], caps=[1.0])]
    for s in range(50):
        assert validate(make_tool([1.0], exec_prob=1.0), probe, 20, substream(s, "v"), min_exec_rate=1.0)
        assert not validate(make_tool([1.0], exec_prob=0.0), probe, 20, substream(s, "v"), min_exec_rate=0.01)


def test_validate_rejection_rate_below_binomial_tail():
    n, p, threshold = 100, 0.9, 0.5
    # P(rate < 0.5) = P(X <= 49) for X ~ Binomial(100, 0.9)
    tail = sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(50))
    assert tail < 1e-6
    tool = make_tool([1.0], exec_prob=p)
    rejections = sum(not validate(tool, [], n, substream(s, "tail"), min_exec_rate=threshold) for s in range(1000))
    assert rejections / 1000 <= tail


# -- deploy ----------------------------------------------------------------------------------


def test_deploy_first_tool():
    reg = deploy(ToolRegistry(budget=5.0), make_tool([1.0], cost=1.5))
    assert len(reg) == 1 and reg.spent == 1.5


def test_deploy_costs_add():
    reg = deploy(deploy(ToolRegistry(budget=5.0), make_tool([1.0], cost=1.0, tool_id="x")), make_tool([1.0], cost=2.5, tool_id="y"))
    assert reg.spent == 3.5


def test_deploy_up_to_budget():
    reg = deploy(ToolRegistry(budget=2.0), make_tool([1.0], cost=2.0))
    assert reg.spent == reg.budget


def test_deploy_errors():
    reg = deploy(ToolRegistry(budget=2.0), make_tool([1.0], cost=1.0))
    with pytest.raises(DuplicationError):
        deploy(reg, make_tool([1.0], cost=0.5))
    with pytest.raises(ContractViolation):
        deploy(reg, make_tool([1.0], cost=1.5, tool_id="other"))


def test_registry_round_trip():
    reg = deploy(ToolRegistry(budget=4.0), make_tool([0.1, 0.2], exec_prob=0.75, cost=1.25))
    assert ToolRegistry.from_dict(reg.to_dict()) == reg
