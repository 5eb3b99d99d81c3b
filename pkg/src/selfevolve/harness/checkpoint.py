"""Versioned JSON checkpoints of a lifecycle mid-stream.

All randomness is drawn from substreams keyed by the stream position, so
the serialized state plus the position reproduces the remaining run.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from ..config import RunConfig
from ..errors import ParseError, UnsupportedVersionError
from ..lifecycle import Lifecycle, LifecycleState
from ..taskenv import TaskSet

CHECKPOINT_VERSION = 1


def checkpoint_dict(lc: Lifecycle) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "config": lc.config.to_dict(),
        "taskset": lc.taskset.to_dict(),
        "stream": list(lc.stream),
        "state": lc.state.to_dict(),
    }


def checkpoint_save(lc: Lifecycle, path: str | Path) -> Path:
    """Write atomically: a temporary file in the target directory is renamed into place."""
    path = Path(path)
    text = json.dumps(checkpoint_dict(lc), sort_keys=True, separators=(",", ":"))
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def lifecycle_from_dict(data: dict) -> Lifecycle:
    if not isinstance(data, dict) or "version" not in data:
        raise ParseError("not a checkpoint object")
    if data["version"] != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"checkpoint version {data['version']!r} is not supported (expected {CHECKPOINT_VERSION})")
    try:
        config = RunConfig.from_dict(data["config"]).validate()
        taskset = TaskSet.from_dict(data["taskset"])
        state = LifecycleState.from_dict(data["state"])
        stream = list(data["stream"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed checkpoint: {exc!r}") from exc
    return Lifecycle(config, taskset, stream, state)


def checkpoint_load(path: str | Path) -> Lifecycle:
    """Read a checkpoint; nothing is built unless the whole file parses and validates."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid checkpoint JSON: {exc.msg}", exc.lineno) from exc
    return lifecycle_from_dict(data)
