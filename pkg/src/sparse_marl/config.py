"""Run configuration: one flat JSON object, strictly validated."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .agent import EpsilonSchedule
from .env import EnvConfig
from .errors import ConfigError

ABLATIONS = ("s2rl", "dense_only", "sparse_only")
MIXERS = ("vdn", "qmix")

_ENV_KEYS = tuple(f.name for f in dataclasses.fields(EnvConfig))


@dataclass
class RunConfig:
    # environment
    n_allies: int = 3
    n_enemies: int = 3
    n_distractors: int = 6
    arena_size: float = 16.0
    sight_range: float = 9.0
    ally_attack_range: float = 3.0
    ally_damage: float = 4.0
    enemy_attack_range: float = 2.0
    enemy_damage: float = 3.0
    unit_health: float = 20.0
    move_step: float = 1.0
    episode_limit: int = 60
    reward_damage: float = 0.05
    reward_kill: float = 0.5
    reward_win: float = 2.0
    # model
    mixer: str = "qmix"
    aux_mixer: str = "shared"
    embed_dim: int = 32
    hidden_dim: int = 64
    mixing_embed_dim: int = 32
    # objective and optimisation
    ablation: str = "s2rl"
    lam: float = 1.0
    gamma: float = 0.99
    optimizer: str = "rmsprop"
    lr: float = 5e-4
    smoothing: float = 0.99
    optim_eps: float = 1e-5
    grad_norm_clip: float = 10.0
    # data collection
    epsilon_start: float = 1.0
    epsilon_finish: float = 0.05
    epsilon_anneal_steps: int = 50_000
    batch_size: int = 32
    buffer_size: int = 5000
    target_update_interval: int = 200
    t_max: int = 200_000
    eval_interval: int = 100
    eval_episodes: int = 32
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "results"

    # ------------------------------------------------------------------
    @property
    def env(self) -> EnvConfig:
        return EnvConfig(**{k: getattr(self, k) for k in _ENV_KEYS})

    @property
    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_finish, self.epsilon_anneal_steps)

    @property
    def sparse_enabled(self) -> bool:
        return self.ablation != "dense_only"

    @property
    def act_head(self) -> str:
        return "sparse" if self.ablation == "sparse_only" else "dense"

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            out[key] = list(value) if isinstance(value, (list, tuple)) else value
        return out

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError({"<root>": "config must be a JSON object"})
        errors: dict[str, str] = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, value in raw.items():
            name = "lam" if key == "lambda" else key
            if name not in fields or key == "lam":
                errors[key] = "unknown key"
                continue
            try:
                values[name] = _coerce(name, fields[name], value)
            except (TypeError, ValueError) as exc:
                errors[key] = str(exc)
        cfg = cls(**values)
        if cfg.ablation == "dense_only":
            cfg.lam = 0.0
        errors.update({k: v for k, v in cfg._range_problems().items() if k not in errors})
        if errors:
            raise ConfigError(errors)
        return cfg

    def _range_problems(self) -> dict[str, str]:
        errs = dict(self.env.problems())
        if self.mixer not in MIXERS:
            errs["mixer"] = f"must be one of {MIXERS}"
        if self.aux_mixer not in ("shared", "separate"):
            errs["aux_mixer"] = "must be 'shared' or 'separate'"
        if self.ablation not in ABLATIONS:
            errs["ablation"] = f"must be one of {ABLATIONS}"
        if self.optimizer not in ("rmsprop", "adam"):
            errs["optimizer"] = "must be 'rmsprop' or 'adam'"
        if self.lam < 0:
            errs["lambda"] = "must be >= 0"
        if not 0 <= self.gamma < 1:
            errs["gamma"] = "must satisfy 0 <= gamma < 1"
        if not self.lr > 0:
            errs["lr"] = "must be > 0"
        if not 0 < self.smoothing < 1:
            errs["smoothing"] = "must satisfy 0 < smoothing < 1"
        if not self.optim_eps > 0:
            errs["optim_eps"] = "must be > 0"
        if self.grad_norm_clip <= 0:
            errs["grad_norm_clip"] = "must be > 0"
        for name in ("epsilon_start", "epsilon_finish"):
            if not 0 <= getattr(self, name) <= 1:
                errs[name] = "must be in [0, 1]"
        for name in ("embed_dim", "hidden_dim", "mixing_embed_dim", "batch_size", "buffer_size",
                     "target_update_interval", "eval_interval", "eval_episodes"):
            if getattr(self, name) < 1:
                errs[name] = "must be >= 1"
        for name in ("epsilon_anneal_steps", "t_max"):
            if getattr(self, name) < 0:
                errs[name] = "must be >= 0"
        if self.buffer_size < self.batch_size:
            errs["buffer_size"] = "must be >= batch_size"
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            errs["seeds"] = "must be a non-empty list of non-negative integers"
        elif len(set(self.seeds)) != len(self.seeds):
            errs["seeds"] = "must not repeat"
        if not self.out_dir:
            errs["out_dir"] = "must be a non-empty path"
        return errs


def _coerce(name, f, value):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError("expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise TypeError("expected an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError("expected a number")
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError("expected a string")
        return value
    if isinstance(default, list):
        if isinstance(value, int) and not isinstance(value, bool):
            return [value]
        if not isinstance(value, list):
            raise TypeError("expected a list")
        return list(value)
    return value


def load_config(path) -> RunConfig:
    """Read and validate a config file. Raises FileNotFoundError, ConfigError."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError({"<parse>": f"{exc.msg} at line {exc.lineno} column {exc.colno}"}) from exc
    return RunConfig.from_dict(raw)
