"""Run configuration: one dataclass tree with documented defaults.

``RunConfig.from_dict`` accepts partial mappings (missing keys keep their
defaults) and rejects unknown keys; ``validate`` reports the offending key
path for out-of-range values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Iterable

import yaml

from .agentcore import Substrate
from .errors import ConfigError
from .evolution.curriculum import CLConfig
from .evolution.genetic import GAConfig
from .evolution.reward_learning import RLConfig
from .router import RoutingPolicy
from .taskenv import GeneratorConfig
from .toolforge import ForgeConfig

MODES = ("cl", "rl", "ga", "auto")


@dataclass
class Thresholds:
    epsilon_fail: float = 0.3
    epsilon_verify: float = 0.02
    delta_safe: float = 0.05
    window: int = 20

    def validate(self, prefix: str = "thresholds") -> None:
        if self.window < 1:
            raise ConfigError("must be >= 1", f"{prefix}.window")
        if not 0 <= self.delta_safe <= 1:
            raise ConfigError("must be in [0, 1]", f"{prefix}.delta_safe")


@dataclass
class EvolutionConfig:
    """Mode selection and episode budget.

    ``mode`` is ``cl``/``rl``/``ga`` for a fixed paradigm or ``auto`` for the
    rule table: CL below ``tier_threshold``, RL at or above it, GA once a
    lineage has ``ga_after_rejections`` consecutive rejections.  A lineage is
    plateaued after ``max_rejections`` consecutive rejections.
    ``max_episodes < 0`` means unlimited.
    """

    mode: str = "auto"
    tier_threshold: int = 4
    ga_after_rejections: int = 2
    max_rejections: int = 3
    max_episodes: int = -1

    def validate(self, prefix: str = "evolution") -> None:
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}", f"{prefix}.mode")
        if self.tier_threshold < 1:
            raise ConfigError("must be >= 1", f"{prefix}.tier_threshold")
        if self.ga_after_rejections < 0:
            raise ConfigError("must be >= 0", f"{prefix}.ga_after_rejections")
        if self.max_rejections < 1:
            raise ConfigError("must be >= 1", f"{prefix}.max_rejections")


@dataclass
class MetricsConfig:
    tool_use_window: int = 50
    grid_cell: float = 0.5

    def validate(self, prefix: str = "metrics") -> None:
        if self.tool_use_window < 1:
            raise ConfigError("must be >= 1", f"{prefix}.tool_use_window")
        if not self.grid_cell > 0:
            raise ConfigError("must be > 0", f"{prefix}.grid_cell")


@dataclass
class RunConfig:
    seed: int = 0
    stream_length: int = 500
    tasks: GeneratorConfig = field(default_factory=GeneratorConfig)
    substrate: Substrate = field(default_factory=Substrate)
    forge: ForgeConfig = field(default_factory=ForgeConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    cl: CLConfig = field(default_factory=CLConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    ga: GAConfig = field(default_factory=GAConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> "RunConfig":
        if self.stream_length < 0:
            raise ConfigError("must be >= 0", "stream_length")
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "validate"):
                value.validate(f.name)
        return self

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        return _build(cls, data or {}, "")

    def with_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        data = self.to_dict()
        for item in overrides:
            apply_override(data, item)
        return RunConfig.from_dict(data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", prefix.rstrip(".") or "<root>")
    names = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in names:
            raise ConfigError("unknown key", path)
        default = names[key].default_factory() if names[key].default_factory is not dataclasses.MISSING else names[key].default
        sub_cls = type(default) if dataclasses.is_dataclass(default) else None
        if sub_cls is not None:
            kwargs[key] = _build(sub_cls, value, path + ".")
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = _coerce(value, default, path)
    return cls(**kwargs)


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", path)
    return value


def apply_override(data: dict, item: str) -> None:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a nested dict in place."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError("unknown key", ".".join(parts[: i + 1]))
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError("unknown key", key.strip())
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path: str | None, overrides: Iterable[str] = ()) -> RunConfig:
    data: dict = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    cfg = RunConfig.from_dict(data)
    return cfg.with_overrides(overrides).validate()
