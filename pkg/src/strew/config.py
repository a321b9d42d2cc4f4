"""Single JSON config file plus ``STREW_*`` environment overrides.

Keys nest by section, e.g. ``{"judge": {"endpoint": ...}, "toy": {"grpo": {"kl_coefficient": 0.5}}}``.
The matching environment variables are ``STREW_JUDGE_ENDPOINT`` and
``STREW_TOY_GRPO_KL_COEFFICIENT``; environment values win over the file.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .clue import ClueConfig
from .judge import JudgeConfig
from .toy import ToyConfig

ENV_PREFIX = "STREW_"


@dataclass
class Config:
    judge_backend: str = "oracle"
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    clue: ClueConfig = field(default_factory=ClueConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)


def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, (tuple, list)):
        return type(current)(json.loads(raw))
    if current is None:
        try:
            return json.loads(raw)
        except ValueError:
            return raw
    return raw


def _apply(obj, values: dict, path: str):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in names:
            raise KeyError(f"unknown config key {path}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise TypeError(f"{path}{key} must be an object")
            _apply(current, value, f"{path}{key}.")
        elif isinstance(current, tuple) and isinstance(value, list):
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def _apply_env(obj, env: dict, prefix: str):
    for f in dataclasses.fields(obj):
        current = getattr(obj, f.name)
        name = f"{prefix}{f.name.upper()}"
        if dataclasses.is_dataclass(current):
            _apply_env(current, env, name + "_")
        elif name in env:
            setattr(obj, f.name, _coerce(env[name], current))


def load_config(path: Optional[str] = None, env: Optional[dict] = None) -> Config:
    cfg = Config()
    if path:
        with open(path, encoding="utf-8") as fh:
            _apply(cfg, json.load(fh), "")
    _apply_env(cfg, os.environ if env is None else env, ENV_PREFIX)
    # re-run validation on nested configs after overrides
    cfg.toy.grpo.__post_init__()
    return cfg


def make_judge(cfg: Config):
    from .judge import oracle_judge, remote_judge

    if cfg.judge_backend == "oracle":
        return oracle_judge()
    if cfg.judge_backend == "remote":
        return remote_judge(cfg.judge)
    raise ValueError(f"judge_backend must be 'oracle' or 'remote', got {cfg.judge_backend!r}")
