"""Engine configuration.

Config files are JSON. Keys may be nested (``{"stm": {"window_capacity": 5}}``)
or dotted (``{"stm.window_capacity": 5}``); both spellings load the same
value. Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

FEATURE_NAMES = (
    "recency",
    "repetition",
    "preference_marker",
    "recurrence_marker",
    "confirmation",
    "specificity",
)


@dataclass
class AuthConfig:
    credentials_file: str | None = None
    token_ttl_secs: float = 24 * 3600


@dataclass
class SessionConfig:
    idle_timeout_secs: float = 60 * 60


@dataclass
class StmConfig:
    window_capacity: int = 7


@dataclass
class RelevanceConfig:
    weights: dict[str, float] = field(default_factory=lambda: {n: 1.0 for n in FEATURE_NAMES})
    threshold: float = 0.5
    dup_threshold: float = 0.9
    update_threshold: float = 0.6
    lexicons_file: str | None = None
    recency_decay: float = 0.1


@dataclass
class LtmConfig:
    max_records_per_user: int = 10_000
    salt_file: str | None = None


@dataclass
class StoreConfig:
    data_dir: str = "cogmem-data"
    snapshot_every_n_entries: int = 1000
    fsync: bool = True


@dataclass
class KnowledgeConfig:
    facts_file: str | None = None
    dynamic_floor: float = 0.3


@dataclass
class RouterConfig:
    rules_file: str | None = None
    max_abs_value: int = 10**18
    max_exponent: int = 256


@dataclass
class AuditConfig:
    max_traces: int = 100_000


@dataclass
class Config:
    auth: AuthConfig = field(default_factory=AuthConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    stm: StmConfig = field(default_factory=StmConfig)
    relevance: RelevanceConfig = field(default_factory=RelevanceConfig)
    ltm: LtmConfig = field(default_factory=LtmConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    knowledge: KnowledgeConfig = field(default_factory=KnowledgeConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: Path | None = None) -> "Config":
        cfg = cls()
        for dotted, value in _flatten(raw).items():
            cfg.set(dotted, value)
        if base_dir is not None:
            cfg._resolve_paths(base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw, base_dir=path.parent)

    def set(self, dotted: str, value: Any) -> None:
        section_name, _, key = dotted.partition(".")
        section = getattr(self, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section: {section_name!r}")
        if section_name == "relevance" and key.startswith("weights."):
            feature = key.split(".", 1)[1]
            if feature not in FEATURE_NAMES:
                raise ConfigError(f"unknown relevance weight: {feature!r}")
            section.weights = {**section.weights, feature: float(value)}
            return
        if key not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(f"unknown config key: {dotted!r}")
        if key == "weights":
            unknown = set(value) - set(FEATURE_NAMES)
            if unknown:
                raise ConfigError(f"unknown relevance weights: {sorted(unknown)}")
            value = {**section.weights, **{k: float(v) for k, v in value.items()}}
        setattr(section, key, value)

    def replace(self, **dotted: Any) -> "Config":
        """Copy with overrides; use ``__`` in place of dots in keyword names."""
        cfg = dataclasses.replace(
            self, **{f.name: dataclasses.replace(getattr(self, f.name)) for f in dataclasses.fields(self)}
        )
        cfg.relevance.weights = dict(self.relevance.weights)
        for key, value in dotted.items():
            cfg.set(key.replace("__", "."), value)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if int(self.stm.window_capacity) < 1:
            raise ConfigError("stm.window_capacity must be a positive integer")
        if self.auth.token_ttl_secs <= 0:
            raise ConfigError("auth.token_ttl_secs must be positive")
        if self.session.idle_timeout_secs <= 0:
            raise ConfigError("session.idle_timeout_secs must be positive")
        if self.ltm.max_records_per_user < 1:
            raise ConfigError("ltm.max_records_per_user must be positive")
        if self.store.snapshot_every_n_entries < 1:
            raise ConfigError("store.snapshot_every_n_entries must be positive")
        if not 0.0 <= self.knowledge.dynamic_floor <= 1.0:
            raise ConfigError("knowledge.dynamic_floor must lie in [0, 1]")

    def _resolve_paths(self, base: Path) -> None:
        for section, key in (
            ("auth", "credentials_file"),
            ("relevance", "lexicons_file"),
            ("ltm", "salt_file"),
            ("store", "data_dir"),
            ("knowledge", "facts_file"),
            ("router", "rules_file"),
        ):
            obj = getattr(self, section)
            value = getattr(obj, key)
            if value and not Path(value).is_absolute():
                setattr(obj, key, str((base / value).resolve()))


def _flatten(raw: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in raw.items():
        dotted = f"{prefix}{key}"
        # weights stay a dict so partial overrides merge with the defaults
        if isinstance(value, dict) and dotted != "relevance.weights":
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat
