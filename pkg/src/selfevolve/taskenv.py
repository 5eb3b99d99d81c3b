"""Tasks, difficulty buckets and stratified splits.

Tasks come either from a seeded synthetic generator or from TaskCraft-style
JSONL records.  Difficulty tiers double as curriculum buckets.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, DuplicationError, ParseError, SchemaError, UnsupportedVersionError
from .rng import substream

STEP_KINDS = ("reasoning", "tool_call", "observation")
SPLIT_NAMES = ("train", "val", "test")
TASKSET_VERSION = 1
REQUIRED_FIELDS = ("task_description", "difficulty", "trajectory", "tool_calls", "final_output")


@dataclass(frozen=True)
class StepRecord:
    kind: str
    tool_id: str | None = None
    payload: str = ""

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ContractViolation(f"unknown step kind {self.kind!r}")
        if (self.kind == "tool_call") != (self.tool_id is not None):
            raise ContractViolation("tool_id must be set exactly for tool_call steps")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "payload": self.payload}
        if self.tool_id is not None:
            d["tool_id"] = self.tool_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(kind=d["kind"], tool_id=d.get("tool_id"), payload=str(d.get("payload", "")))


@dataclass(frozen=True)
class Task:
    id: str
    features: tuple[float, ...]
    difficulty: int
    required_caps: tuple[float, ...]
    composition_depth: int
    gold_output: str
    gold_trace: tuple[StepRecord, ...] = ()
    description: str = ""
    tool_calls: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.features) != len(self.required_caps):
            raise ContractViolation(f"task {self.id}: features and required_caps differ in dimension")
        if self.difficulty < 1 or self.composition_depth < 1:
            raise ContractViolation(f"task {self.id}: difficulty and composition_depth must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.features)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "features": list(self.features),
            "difficulty": self.difficulty,
            "required_caps": list(self.required_caps),
            "composition_depth": self.composition_depth,
            "gold_output": self.gold_output,
            "gold_trace": [s.to_dict() for s in self.gold_trace],
            "description": self.description,
            "tool_calls": list(self.tool_calls),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        return cls(
            id=d["id"],
            features=tuple(float(x) for x in d["features"]),
            difficulty=int(d["difficulty"]),
            required_caps=tuple(float(x) for x in d["required_caps"]),
            composition_depth=int(d["composition_depth"]),
            gold_output=d["gold_output"],
            gold_trace=tuple(StepRecord.from_dict(s) for s in d.get("gold_trace", [])),
            description=d.get("description", ""),
            tool_calls=tuple(d.get("tool_calls", [])),
        )


@dataclass
class TaskSet:
    tasks: tuple[Task, ...]
    buckets: dict[int, list[str]]
    splits: dict[str, list[str]]
    _index: dict[str, Task] = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        self.tasks = tuple(self.tasks)
        index = {}
        for t in self.tasks:
            if t.id in index:
                raise DuplicationError(f"duplicate task id {t.id!r}")
            index[t.id] = t
        self._index = index

    def __len__(self) -> int:
        return len(self.tasks)

    def get(self, task_id: str) -> Task:
        return self._index[task_id]

    def split(self, name: str) -> list[Task]:
        return [self._index[i] for i in self.splits.get(name, [])]

    def bucket_tasks(self, tier: int, split: str | None = None) -> list[Task]:
        ids = self.buckets.get(tier, [])
        if split is not None:
            members = set(self.splits.get(split, []))
            ids = [i for i in ids if i in members]
        return [self._index[i] for i in ids]

    @property
    def tiers(self) -> list[int]:
        return sorted(self.buckets)

    def to_dict(self) -> dict:
        return {
            "version": TASKSET_VERSION,
            "tasks": [t.to_dict() for t in self.tasks],
            "buckets": {str(k): list(v) for k, v in sorted(self.buckets.items())},
            "splits": {k: list(self.splits.get(k, [])) for k in SPLIT_NAMES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSet":
        if d.get("version") != TASKSET_VERSION:
            raise UnsupportedVersionError(f"taskset version {d.get('version')!r} is not supported")
        return cls(
            tasks=tuple(Task.from_dict(t) for t in d["tasks"]),
            buckets={int(k): list(v) for k, v in d["buckets"].items()},
            splits={k: list(v) for k, v in d["splits"].items()},
        )


def save_taskset(taskset: TaskSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(taskset.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_taskset(path: str | Path) -> TaskSet:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"corrupted taskset file: {exc}") from exc
    return TaskSet.from_dict(data)


@dataclass
class GeneratorConfig:
    """Synthetic task generator settings.

    Tier ``d`` tasks demand roughly ``active_fraction * F * d / max_difficulty``
    capabilities, each in ``[demand_low, demand_high]``; features are the
    demand vector plus Gaussian noise.
    """

    n_features: int = 16
    max_difficulty: int = 5
    count_per_tier: int = 100
    active_fraction: float = 0.6
    demand_low: float = 0.3
    demand_high: float = 1.0
    feature_noise: float = 0.3
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self, prefix: str = "tasks") -> None:
        if self.n_features <= 0:
            raise ConfigError("must be > 0", f"{prefix}.n_features")
        if self.max_difficulty <= 0:
            raise ConfigError("must be > 0", f"{prefix}.max_difficulty")
        if self.count_per_tier <= 0:
            raise ConfigError("must be > 0", f"{prefix}.count_per_tier")
        if not 0 < self.active_fraction <= 1:
            raise ConfigError("must be in (0, 1]", f"{prefix}.active_fraction")
        if not 0 <= self.demand_low <= self.demand_high <= 1:
            raise ConfigError("need 0 <= demand_low <= demand_high <= 1", f"{prefix}.demand_low")
        if self.feature_noise < 0:
            raise ConfigError("must be >= 0", f"{prefix}.feature_noise")
        _check_ratios(self.split_ratios, f"{prefix}.split_ratios")


def difficulty_from_depth(depth: int, max_difficulty: int) -> int:
    return max(1, min(int(depth), max_difficulty))


def _gold_trace(depth: int, dims: Sequence[int], rng: np.random.Generator) -> tuple[StepRecord, ...]:
    steps = []
    for i in range(depth):
        kind = STEP_KINDS[i % 3]
        tool = f"cap{int(dims[i % len(dims)]):02d}" if kind == "tool_call" and len(dims) else None
        if kind == "tool_call" and tool is None:
            kind = "reasoning"
        steps.append(StepRecord(kind=kind, tool_id=tool, payload=f"s{i}-{int(rng.integers(1 << 16)):04x}"))
    return tuple(steps)


def generate_tasks(gen_config: GeneratorConfig, seed: int) -> TaskSet:
    gen_config.validate()
    F, D = gen_config.n_features, gen_config.max_difficulty
    tasks = []
    for tier in range(1, D + 1):
        n_active = max(1, min(F, math.ceil(gen_config.active_fraction * F * tier / D)))
        for i in range(gen_config.count_per_tier):
            rng = substream(seed, "task", tier, i)
            dims = np.sort(rng.choice(F, size=n_active, replace=False))
            caps = np.zeros(F)
            caps[dims] = rng.uniform(gen_config.demand_low, gen_config.demand_high, size=n_active)
            feats = caps + rng.normal(0.0, gen_config.feature_noise, size=F)
            depth = tier
            tasks.append(
                Task(
                    id=f"t{tier}-{i:04d}",
                    features=tuple(float(x) for x in feats),
                    difficulty=difficulty_from_depth(depth, D),
                    required_caps=tuple(float(x) for x in caps),
                    composition_depth=depth,
                    gold_output=f"out-{int(rng.integers(1 << 32)):08x}",
                    gold_trace=_gold_trace(depth, dims, rng),
                    description=f"synthetic tier-{tier} task over capabilities {' '.join(f'cap{int(d):02d}' for d in dims)}",
                    tool_calls=tuple(f"cap{int(d):02d}" for d in dims),
                )
            )
    base = TaskSet(tasks=tuple(tasks), buckets=bucketize(tasks), splits={"train": [t.id for t in tasks], "val": [], "test": []})
    return stratified_split(base, gen_config.split_ratios, seed)


def bucketize(tasks: Iterable[Task]) -> dict[int, list[str]]:
    buckets: dict[int, list[str]] = {}
    for t in tasks:
        buckets.setdefault(t.difficulty, []).append(t.id)
    return dict(sorted(buckets.items()))


def _check_ratios(ratios: Sequence[float], key: str = "split_ratios") -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError("need three non-negative ratios", key)
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)!r}", key)


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    # largest remainder; ties go to the earlier split
    exact = [r * n for r in ratios]
    counts = [math.floor(x + 1e-9) for x in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _max_flow_fill(base: list[list[int]], slack: list[list[int]], row_need: list[int], col_need: list[int]) -> bool:
    """Add up to ``slack`` to each cell of ``base`` so row and column sums gain
    exactly ``row_need`` / ``col_need``.  Augmenting paths (BFS, fixed order)
    keep the result deterministic.  Returns False when infeasible."""
    R, C = len(row_need), len(col_need)
    flow = [[0] * C for _ in range(R)]
    row_used, col_used = [0] * R, [0] * C
    while True:
        # BFS from the source over rows with unmet demand
        prev: dict = {("r", r): None for r in range(R) if row_used[r] < row_need[r]}
        queue = list(prev)
        sink = None
        while queue and sink is None:
            node = queue.pop(0)
            side, i = node
            if side == "r":
                for j in range(C):
                    if flow[i][j] < slack[i][j] and ("c", j) not in prev:
                        prev[("c", j)] = node
                        if col_used[j] < col_need[j]:
                            sink = ("c", j)
                            break
                        queue.append(("c", j))
            else:
                for r in range(R):
                    if flow[r][i] > 0 and ("r", r) not in prev:
                        prev[("r", r)] = node
                        queue.append(("r", r))
        if sink is None:
            break
        node = sink
        while prev[node] is not None:
            p = prev[node]
            if p[0] == "r":
                flow[p[1]][node[1]] += 1
            else:
                flow[node[1]][p[1]] -= 1
            node = p
        row_used[node[1]] += 1
        col_used[sink[1]] += 1
    if row_used != row_need or col_used != col_need:
        return False
    for i in range(R):
        for j in range(C):
            base[i][j] += flow[i][j]
    return True


def _split_counts(tier_sizes: Sequence[int], ratios: Sequence[float]) -> list[list[int]]:
    """Tier-by-split task counts with every row summing to its tier size.

    Split sizes are the largest-remainder rounding of the ratios.  Each cell
    stays within one task of both ``ratio * tier_size`` and the proportional
    share ``split_size * tier_size / total``; when both cannot hold together
    only the proportional tolerance is kept, which is always attainable.
    """
    n = sum(tier_sizes)
    sizes = _allocate(n, ratios)
    if n == 0:
        return [[0] * len(ratios) for _ in tier_sizes]
    eps = 1e-9
    share = [[n_s * n_t / n for n_s in sizes] for n_t in tier_sizes]
    exact = [[r * n_t for r in ratios] for n_t in tier_sizes]
    def bounds(tight: bool, banded: bool) -> list[list[tuple[int, int]]]:
        rows = []
        for erow, xrow, n_t in zip(exact, share, tier_sizes):
            row = []
            for e, x in zip(erow, xrow):
                lo, hi = (math.floor(x + eps), math.ceil(x - eps)) if tight else (math.ceil(x - 1 - eps), math.floor(x + 1 + eps))
                if banded:
                    lo, hi = max(lo, math.ceil(e - 1 - eps)), min(hi, math.floor(e + 1 + eps))
                row.append((max(lo, 0), min(hi, n_t)))
            rows.append(row)
        return rows

    # nearest roundings first so exact shares stay exact
    candidates = [bounds(True, True), bounds(False, True), bounds(True, False)]
    for bounds in candidates:
        if any(lo > hi for row in bounds for lo, hi in row):
            continue
        base = [[lo for lo, _ in row] for row in bounds]
        slack = [[hi - lo for lo, hi in row] for row in bounds]
        row_need = [n_t - sum(row) for n_t, row in zip(tier_sizes, base)]
        col_need = [n_s - sum(col) for n_s, col in zip(sizes, zip(*base))]
        if min(row_need + col_need) >= 0 and _max_flow_fill(base, slack, row_need, col_need):
            return base
    raise ContractViolation("no stratified allocation found")  # unreachable: proportional rounding always exists


def stratified_split(tasks: TaskSet, ratios: Sequence[float], seed: int) -> TaskSet:
    """Per-tier shuffle, then a jointly rounded tier-by-split allocation into train/val/test."""
    _check_ratios(ratios)
    splits: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    tiers = sorted(tasks.buckets)
    counts = _split_counts([len(tasks.buckets[t]) for t in tiers], ratios)
    for tier, row in zip(tiers, counts):
        ids = list(tasks.buckets[tier])
        rng = substream(seed, "split", tier)
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        start = 0
        for name, count in zip(SPLIT_NAMES, row):
            splits[name].extend(shuffled[start : start + count])
            start += count
    return TaskSet(tasks=tasks.tasks, buckets={k: list(v) for k, v in tasks.buckets.items()}, splits=splits)


# -- TaskCraft-format JSONL ---------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9_]+")


def _token_slot(token: str, dim: int, seed: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest(), "little")
    return h % dim, (1.0 if (h >> 32) & 1 else -1.0)


def embed_text(text: str, dim: int, seed: int = 0) -> tuple[float, ...]:
    """Signed hashed bag-of-tokens projection, L2-normalized."""
    vec = np.zeros(dim)
    for tok in _TOKEN.findall(text.lower()):
        slot, sign = _token_slot(tok, dim, seed)
        vec[slot] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return tuple(float(x) for x in vec)


def embed_tool_demand(tool_calls: Sequence[str], dim: int, seed: int = 0) -> tuple[float, ...]:
    """Each tool name lands on one capability slot; demand is 1 - 2^-count."""
    counts = np.zeros(dim)
    for name in tool_calls:
        slot, _ = _token_slot(f"tool:{name}", dim, seed)
        counts[slot] += 1
    return tuple(float(x) for x in 1.0 - 0.5**counts)


def _tool_name(call) -> str:
    if isinstance(call, str):
        return call
    if isinstance(call, dict):
        for key in ("name", "tool", "tool_id"):
            if key in call:
                return str(call[key])
    raise SchemaError(f"cannot read tool name from {call!r}")


def _step(raw, lineno: int) -> StepRecord:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise SchemaError("trajectory step needs a 'kind'", lineno)
    tool = raw.get("tool_id", raw.get("tool"))
    payload = raw.get("payload", raw.get("content", ""))
    try:
        return StepRecord(kind=raw["kind"], tool_id=None if tool is None else str(tool), payload=str(payload))
    except ContractViolation as exc:
        raise SchemaError(str(exc), lineno) from exc


def parse_record(record: dict, lineno: int, n_features: int, max_difficulty: int | None, seed: int) -> Task:
    if not isinstance(record, dict):
        raise SchemaError("record must be a JSON object", lineno)
    missing = [f for f in REQUIRED_FIELDS if f not in record]
    if missing:
        raise SchemaError(f"missing required field(s): {', '.join(missing)}", lineno)
    difficulty = record["difficulty"]
    if isinstance(difficulty, bool) or not isinstance(difficulty, int) or difficulty < 1:
        raise SchemaError(f"difficulty must be an integer >= 1, got {difficulty!r}", lineno)
    if max_difficulty is not None and difficulty > max_difficulty:
        raise SchemaError(f"difficulty {difficulty} exceeds max {max_difficulty}", lineno)
    if not isinstance(record["trajectory"], list) or not isinstance(record["tool_calls"], list):
        raise SchemaError("trajectory and tool_calls must be lists", lineno)
    steps = tuple(_step(s, lineno) for s in record["trajectory"])
    tools = tuple(_tool_name(c) for c in record["tool_calls"])
    desc = str(record["task_description"])
    return Task(
        id=str(record.get("id", f"tc-{lineno:05d}")),
        features=embed_text(desc, n_features, seed),
        difficulty=difficulty,
        required_caps=embed_tool_demand(tools, n_features, seed),
        composition_depth=max(1, len(steps)),
        gold_output=str(record["final_output"]),
        gold_trace=steps,
        description=desc,
        tool_calls=tools,
    )


def ingest_taskcraft(path: str | Path, n_features: int = 16, max_difficulty: int | None = None, seed: int = 0) -> TaskSet:
    """Read TaskCraft-style JSONL; every task lands in the train split."""
    if n_features <= 0:
        raise ConfigError("must be > 0", "n_features")
    tasks: list[Task] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON: {exc.msg}", lineno) from exc
            task = parse_record(record, lineno, n_features, max_difficulty, seed)
            if task.id in seen:
                raise DuplicationError(f"line {lineno}: duplicate task id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
    return TaskSet(tasks=tuple(tasks), buckets=bucketize(tasks), splits={"train": [t.id for t in tasks], "val": [], "test": []})


def export_taskcraft(taskset: TaskSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in taskset.tasks:
            record = {
                "id": t.id,
                "task_description": t.description,
                "difficulty": t.difficulty,
                "trajectory": [s.to_dict() for s in t.gold_trace],
                "tool_calls": list(t.tool_calls),
                "final_output": t.gold_output,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
