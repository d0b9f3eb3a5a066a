"""JSON run configuration: strict keys, documented defaults, resolved echo."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .domains import DomainError, DomainPairSpec
from .flows import FlowError, FlowSpec
from .model import ModelError, SharingSpec
from .objectives import HybridObjectiveConfig, ObjectiveError
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


SECTIONS = {
    "data": DomainPairSpec,
    "architecture": FlowSpec,
    "sharing": SharingSpec,
    "objective": HybridObjectiveConfig,
    "train": TrainConfig,
}
CRITIC_DEFAULTS = {"hidden": 64, "n_hidden": 3}


@dataclass
class RunConfig:
    data: DomainPairSpec = field(default_factory=DomainPairSpec)
    architecture: dict = field(default_factory=dict)  # FlowSpec fields minus dim
    sharing: SharingSpec = field(default_factory=SharingSpec)
    objective: HybridObjectiveConfig = field(default_factory=HybridObjectiveConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    critic: dict = field(default_factory=lambda: dict(CRITIC_DEFAULTS))
    model_seed: int = 0

    @property
    def flow_spec(self) -> FlowSpec:
        return FlowSpec(dim=self.data.dim, **self.architecture)

    def resolved(self) -> dict:
        return {
            "data": self.data.to_dict(),
            "architecture": {k: v for k, v in self.flow_spec.to_dict().items() if k != "dim"},
            "sharing": self.sharing.to_dict(),
            "objective": self.objective.to_dict(),
            "train": self.train.to_dict(),
            "critic": dict(self.critic),
            "model_seed": self.model_seed,
        }


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _check_number(path, value, *, integer=False, allow_none=False):
    if value is None and allow_none:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")


def _section(name, cls, raw, exclude=()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a JSON object")
    allowed = _fields(cls) - set(exclude)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    defaults = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in raw.items():
        f = defaults[key]
        typ = str(f.type)
        if "float" in typ or "int" in typ:
            _check_number(f"{name}.{key}", value, integer=typ.startswith("int"),
                          allow_none="None" in typ)
        if typ == "bool" and not isinstance(value, bool):
            raise ConfigError(f"{name}.{key}", f"expected true/false, got {value!r}")
    # call the constructor field by field so errors can be pinned to a key
    for key, value in raw.items():
        if key.startswith("lambda") and value < 0:
            raise ConfigError(f"{name}.{key}", f"must be >= 0, got {value}")
    try:
        return cls(**raw)
    except (ValueError, TypeError, DomainError, FlowError, ModelError, ObjectiveError) as e:
        bad = next((k for k in raw if k in str(e)), None)
        raise ConfigError(f"{name}.{bad}" if bad else name, str(e)) from None


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    allowed = set(SECTIONS) | {"critic", "model_seed"}
    for key in doc:
        if key not in allowed:
            raise ConfigError(key, "unknown key")
    data = _section("data", DomainPairSpec, doc.get("data"))
    arch_raw = doc.get("architecture") or {}
    _section("architecture", FlowSpec, {"dim": data.dim, **arch_raw} if isinstance(arch_raw, dict) else arch_raw)
    if "dim" in arch_raw:
        raise ConfigError("architecture.dim", "set by data.dim; do not repeat it")
    critic = dict(CRITIC_DEFAULTS)
    craw = doc.get("critic") or {}
    for key, value in craw.items():
        if key not in CRITIC_DEFAULTS:
            raise ConfigError(f"critic.{key}", "unknown key")
        _check_number(f"critic.{key}", value, integer=True)
        if value < 1:
            raise ConfigError(f"critic.{key}", "must be >= 1")
        critic[key] = int(value)
    model_seed = doc.get("model_seed", 0)
    _check_number("model_seed", model_seed, integer=True)
    return RunConfig(
        data=data,
        architecture=dict(arch_raw),
        sharing=_section("sharing", SharingSpec, doc.get("sharing")),
        objective=_section("objective", HybridObjectiveConfig, doc.get("objective")),
        train=_section("train", TrainConfig, doc.get("train")),
        critic=critic,
        model_seed=int(model_seed),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return parse_config(doc)
