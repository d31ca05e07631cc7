"""INI-style configuration loading and the run manifest embedded in
every output artifact."""
from __future__ import annotations

import configparser
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field, fields

from .rl.train import TrainConfig
from .sim import SimConfig

SEED_ENV_VAR = "FAIRRTS_SEED"


class ConfigError(ValueError):
    pass


def _coerce(raw: str, target_type):
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


def _apply_section(section, cfg):
    known = {f.name for f in fields(cfg)}
    overrides = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown option {key!r}")
        current = getattr(cfg, key)
        try:
            overrides[key] = _coerce(raw, type(current))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return dataclasses.replace(cfg, **overrides)


def load_configs(path: str | None) -> tuple[SimConfig, TrainConfig]:
    """Read [sim] and [train] sections; missing file or sections keep
    defaults."""
    sim_cfg = SimConfig()
    train_cfg = TrainConfig()
    if path is None:
        return sim_cfg, train_cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if parser.has_section("sim"):
        sim_cfg = _apply_section(parser["sim"], sim_cfg)
    if parser.has_section("train"):
        train_cfg = _apply_section(parser["train"], train_cfg)
    sim_cfg.validate()
    return sim_cfg, train_cfg


def dump_defaults() -> str:
    """Default configuration in the file format load_configs reads."""
    parser = configparser.ConfigParser()
    parser["sim"] = {
        f.name: str(getattr(SimConfig(), f.name)) for f in fields(SimConfig)
    }
    parser["train"] = {
        f.name: str(getattr(TrainConfig(), f.name)) for f in fields(TrainConfig)
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def env_seed(default: int) -> int:
    """Seed from the environment override variable, else the default."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


@dataclass
class RunManifest:
    """Reproducibility record written verbatim into output artifacts."""

    subcommand: str
    spec: str = ""
    config_path: str = ""
    seed: int = 0
    output_dir: str = ""
    parameters: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))
