"""Run configuration: flat ``section.key = value`` text with defaults for every key.

Precedence, lowest to highest: built-in defaults, config file,
``CANALRL_LOG_DIR`` (log directory only), command-line overrides.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional

from .env import CanalAnatomy
from .expert import ExpertPolicyParams
from .reward import RewardConfig
from .sac import SacHyperparams

LOG_DIR_ENV = "CANALRL_LOG_DIR"


@dataclass(frozen=True)
class TrainSettings:
    episodes: int = 1000
    buffer_capacity: int = 1_000_000
    demo_episodes: int = 50
    eval_episodes: int = 50


@dataclass(frozen=True)
class Paths:
    checkpoint_dir: str = "checkpoints"
    log_dir: str = "logs"


@dataclass(frozen=True)
class RunConfig:
    anatomy: CanalAnatomy = field(default_factory=CanalAnatomy)
    reward: RewardConfig = field(default_factory=RewardConfig)
    sac: SacHyperparams = field(default_factory=SacHyperparams)
    expert: ExpertPolicyParams = field(default_factory=ExpertPolicyParams)
    train: TrainSettings = field(default_factory=TrainSettings)
    paths: Paths = field(default_factory=Paths)
    seed: int = 0

    def items(self) -> dict:
        """Every key in canonical ``section.key`` form."""
        out = {}
        for sec in _SECTIONS:
            obj = getattr(self, sec)
            for f in _fields(obj):
                out[f"{sec}.{f.name}"] = _to_text(getattr(obj, f.name))
        out["seed"] = str(self.seed)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items().items())

    def config_hash(self) -> str:
        """Hash of everything except filesystem paths."""
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.items().items()) if not k.startswith("paths."))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_SECTIONS = ("anatomy", "reward", "sac", "expert", "train", "paths")
# aliases accepted for the training keys that belong to other sections
_ALIASES = {
    "sac.episodes": "train.episodes",
    "sac.buffer_capacity": "train.buffer_capacity",
    "sac.episode_cap_s": "anatomy.episode_cap_s",
    "sac.seed": "seed",
}


def _fields(obj):
    return [f for f in fields(obj) if f.init and f.name != "radius_profile"]


def _to_text(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(default, text: str):
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in text.split(",") if p.strip())
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def apply_overrides(cfg: RunConfig, values: Mapping[str, str]) -> RunConfig:
    sections = {sec: {} for sec in _SECTIONS}
    seed = cfg.seed
    for key, value in values.items():
        key = _ALIASES.get(key, key)
        if key == "seed":
            seed = int(value)
            continue
        sec, _, name = key.partition(".")
        if sec not in sections:
            raise KeyError(f"unknown config key {key!r}")
        obj = getattr(cfg, sec)
        names = {f.name: f for f in _fields(obj)}
        if name not in names:
            raise KeyError(f"unknown config key {key!r}")
        sections[sec][name] = _coerce(getattr(obj, name), value)
    changes = {sec: replace(getattr(cfg, sec), **kv) for sec, kv in sections.items() if kv}
    return replace(cfg, seed=seed, **changes)


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text(), str(path)))
    env = os.environ if environ is None else environ
    if env.get(LOG_DIR_ENV):
        cfg = replace(cfg, paths=replace(cfg.paths, log_dir=env[LOG_DIR_ENV]))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(cfg.to_text())
