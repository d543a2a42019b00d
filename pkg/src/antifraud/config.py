"""Experiment configuration: one JSON document drives every CLI subcommand.

Unknown keys, wrong types and failed invariants are reported with the dotted
path of the offending entry.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .kg.worldgen import WorldGenConfig
from .service import SessionConfig
from .simulator import KnowledgeCurves, SimConfig
from .training import RewardConfig, TrainConfig

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ProfilesSpec:
    n: int = 906
    seed: int = 11
    split: tuple[int, int, int] = (706, 100, 100)  # train/dev/test

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("profiles.n must be >= 1")
        if sum(self.split) > self.n:
            raise ConfigError("profiles.split exceeds profiles.n")


@dataclass
class EvalSpec:
    repeats: int = 10
    seed: int = 5


@dataclass
class PathsSpec:
    world: str = "world.json"
    profiles: str = "profiles.json"
    out_dir: str = "runs"


@dataclass
class ServeSpec:
    host: str = "127.0.0.1"
    port: int = 8000
    idle_timeout_s: float = 1800.0
    max_sessions: int = 1024

    def session_config(self, train: TrainConfig) -> SessionConfig:
        return SessionConfig(
            max_system_turns=train.max_system_turns,
            max_worker_turns=train.max_worker_turns,
            idle_timeout_s=self.idle_timeout_s,
            max_sessions=self.max_sessions,
        )


@dataclass
class ExperimentConfig:
    world: WorldGenConfig = field(default_factory=WorldGenConfig)
    world_seed: int = 7
    profiles: ProfilesSpec = field(default_factory=ProfilesSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "full"
    train_seed: int = 1
    eval: EvalSpec = field(default_factory=EvalSpec)
    paths: PathsSpec = field(default_factory=PathsSpec)
    serve: ServeSpec = field(default_factory=ServeSpec)

    def split_indices(self) -> tuple[range, range, range]:
        a, b, c = self.profiles.split
        return range(0, a), range(a, a + b), range(a + b, a + b + c)


_SCALARS = {int, float, str, bool}


def _coerce(value: Any, target_type: Any, path: str) -> Any:
    if target_type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target_type in _SCALARS:
        if not isinstance(value, target_type) or (target_type is not bool and isinstance(value, bool)):
            raise ConfigError(f"{path}: expected {target_type.__name__}, got {type(value).__name__}")
        return value
    origin = getattr(target_type, "__origin__", None)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        args = target_type.__args__
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(v, t, f"{path}[{i}]") for i, (v, t) in enumerate(zip(value, args)))
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        _, vt = target_type.__args__
        return {k: _coerce(v, vt, f"{path}.{k}") for k, v in value.items()}
    # Optional[T] and similar unions: try each arm.
    if origin is not None or str(target_type).startswith("typing.Optional"):
        args = getattr(target_type, "__args__", ())
        if type(None) in args and value is None:
            return None
        for arm in args:
            if arm is type(None):
                continue
            try:
                return _coerce(value, arm, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: no matching type in {target_type}")
    return value


def _build_dataclass(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in data.items():
        child = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{child}: unknown key (valid: {', '.join(sorted(fields))})")
        f = fields[key]
        ftype = f.type if not isinstance(f.type, str) else _resolve_type(cls, f.name)
        if dataclasses.is_dataclass(ftype):
            kwargs[key] = _build_dataclass(ftype, raw, child)
        else:
            kwargs[key] = _coerce(raw, ftype, child)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}")


def _resolve_type(cls, name: str):
    import typing

    hints = typing.get_type_hints(cls)
    return hints[name]


def _special_sections(data: dict) -> dict:
    """Sections whose nested types need bespoke handling."""
    data = dict(data)
    sim = data.get("sim")
    if isinstance(sim, dict) and isinstance(sim.get("curves"), dict):
        cur = sim["curves"]
        for key in cur:
            if key not in ("genuine", "fake"):
                raise ConfigError(f"sim.curves.{key}: unknown key (valid: fake, genuine)")
        try:
            curves = KnowledgeCurves(
                genuine=tuple(cur.get("genuine", ())), fake=tuple(cur.get("fake", ()))
            )
        except ValueError as exc:
            raise ConfigError(f"sim.curves: {exc}")
        sim = dict(sim)
        sim["curves"] = curves
        data["sim"] = sim
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root: expected an object")
    data = dict(data)
    version = data.pop("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"format_version: unsupported value {version!r}")
    data = _special_sections(data)
    sim_curves = None
    if isinstance(data.get("sim"), dict) and isinstance(data["sim"].get("curves"), KnowledgeCurves):
        sim_curves = data["sim"]["curves"]
        data["sim"] = {k: v for k, v in data["sim"].items() if k != "curves"}
    cfg = _build_dataclass(ExperimentConfig, data, "")
    if sim_curves is not None:
        cfg.sim.curves = sim_curves
    if cfg.variant not in ("full", "hp", "mp"):
        raise ConfigError(f"variant: must be one of full, hp, mp (got {cfg.variant!r})")
    return cfg


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply `--set dotted.path=value` pairs; values parse as JSON, falling
    back to bare strings."""
    out = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part} is not an object")
        node[parts[-1]] = value
    return out


def load_config(path: str | Path, overrides: Optional[list[str]] = None) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})")
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def default_config_dict() -> dict:
    """The full default configuration as a plain JSON-ready document."""
    cfg = ExperimentConfig()
    doc = dataclasses.asdict(cfg)
    doc["sim"]["curves"] = {
        "genuine": list(cfg.sim.curves.genuine),
        "fake": list(cfg.sim.curves.fake),
    }
    return {"format_version": CONFIG_FORMAT_VERSION, **doc}
