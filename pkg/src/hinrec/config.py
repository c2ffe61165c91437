"""Flat run configuration shared by every command.

Values resolve in three layers: built-in defaults, then a ``key = value``
config file, then CLI flags. Unknown keys are rejected. The config hash
covers the science-relevant tunables (not seed/paths/jobs), so a report
can refuse to aggregate runs produced under different settings.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .util import stable_hash


class ConfigError(ValueError):
    pass


# Keys that identify a run but do not change its science.
_HASH_EXCLUDED = {"seed", "out", "jobs", "dataset"}


@dataclass(frozen=True)
class RunConfig:
    # run identity / plumbing
    seed: int = 0
    out: str = "runs"
    jobs: int = 1
    dataset: str = ""

    # meta-path machinery
    density_threshold: float = 0.5
    fanout: int = 20
    max_path_len: int = 8
    self_loops: bool = True

    # search
    strategy: str = "rms"
    max_steps: int = 4
    iter_limit: int = 0
    time_limit: float = 0.0
    greedy_candidates: int = 4

    # DQN agent
    dqn_episodes: int = 60
    gamma: float = 0.9
    dqn_lr: float = 0.001
    dqn_batch: int = 32
    dqn_min_buffer: int = 200
    dqn_buffer: int = 10000
    target_sync: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.5

    # recommender
    embed_dim: int = 64
    att_hidden: int = 32
    heads: int = 1
    dropout: float = 0.1
    rec_lr: float = 0.01
    rec_batch: int = 1024
    rec_epochs: int = 30
    patience: int = 3
    score_act: str = "leaky_relu"
    agg_act: str = "elu"
    fuse_act: str = "tanh"
    mf_epochs: int = 30
    mf_lr: float = 0.05

    # probe / evaluation
    probe_epochs: int = 1
    probe_batch: int = 4096
    eval_ks: tuple[int, ...] = (1, 3, 10, 20)
    n_negatives: int = 499
    leak_guard: bool = True

    def config_hash(self) -> str:
        payload = {
            f.name: getattr(self, f.name) for f in fields(self) if f.name not in _HASH_EXCLUDED
        }
        return stable_hash(payload)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, overrides: dict) -> "RunConfig":
        coerced = {k: _coerce(self, k, v) for k, v in overrides.items()}
        return replace(self, **coerced)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        cfg = cls()
        text = Path(path).read_text(encoding="utf-8")
        file_values: dict = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value, got {raw!r}")
            key, value = (p.strip() for p in line.split("=", 1))
            file_values[key] = value
        cfg = cfg.with_overrides(file_values)
        if overrides:
            cfg = cfg.with_overrides(overrides)
        return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(cfg: RunConfig, key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(cfg, key)
    if not isinstance(value, str):
        if isinstance(current, tuple) and isinstance(value, (list, tuple)):
            return tuple(int(v) for v in value)
        return type(current)(value) if not isinstance(value, type(current)) else value
    text = value.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(p) for p in text.replace(",", " ").split())
    return text
