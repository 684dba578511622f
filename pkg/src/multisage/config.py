"""Flat ``key = value`` run configuration shared by the CLI subcommands.

Blank lines and ``#`` comments are ignored. Keys naming a :class:`WorldConfig`
field (``n_users = 100``) configure the synthetic generator; everything else
must be one of the :class:`Config` fields below. ``lambda`` is accepted as the
spelling of ``lam``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

from .ann import IndexConfig
from .retrieval import RetrievalConfig
from .synth import WorldConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Config:
    alpha: float = 1.0
    lam: float = 0.01
    e: int = 3
    budget: int = 400
    seed: int = 0
    window_days: int = 90
    split_day: int = 24
    max_neighbors: int = 16
    build_beam: int = 200
    query_beam: int = 100
    dedup_threshold: float = 0.99
    quality_floor: float = 0.0
    next_action_positions: int = 30
    world: dict = field(default_factory=dict)

    def __post_init__(self):
        checks = [
            ("alpha", self.alpha >= 0, "must be >= 0"),
            ("lambda", self.lam >= 0, "must be >= 0"),
            ("e", self.e >= 1, "must be >= 1"),
            ("budget", self.budget >= self.e, "must be >= e"),
            ("window_days", self.window_days >= 1, "must be >= 1"),
            ("split_day", self.split_day >= 1, "must be >= 1"),
            ("max_neighbors", self.max_neighbors >= 2, "must be >= 2"),
            ("build_beam", self.build_beam >= 1, "must be >= 1"),
            ("query_beam", self.query_beam >= 1, "must be >= 1"),
            ("dedup_threshold", 0 < self.dedup_threshold <= 1, "must lie in (0, 1]"),
            ("next_action_positions", self.next_action_positions >= 1, "must be >= 1"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, msg)
        try:
            world = self.world_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError("world", str(exc)) from None
        if self.split_day >= world.days:
            raise ConfigError("split_day", f"must be < days ({world.days})")

    def world_config(self) -> WorldConfig:
        return WorldConfig(**{"seed": self.seed, **self.world})

    def index_config(self) -> IndexConfig:
        return IndexConfig(self.max_neighbors, self.build_beam, self.query_beam, self.dedup_threshold,
                           self.quality_floor, self.seed)

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(self.e, self.budget)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs: dict[str, str]) -> "Config":
        """Apply raw string values, e.g. from a file or ``--set key=value`` flags."""
        own = {f.name: f for f in dataclasses.fields(self) if f.name != "world"}
        world_fields = {f.name: f for f in dataclasses.fields(WorldConfig)}
        changes, world = {}, dict(self.world)
        for key, raw in pairs.items():
            name = "lam" if key == "lambda" else key
            if name in own:
                changes[name] = _coerce(key, own[name].type, raw)
            elif name in world_fields:
                world[name] = _coerce(key, world_fields[name].type, raw)
            else:
                raise ConfigError(key, "unknown configuration key")
        return self.replace(**changes, world=world)


def _coerce(key: str, kind, raw: str):
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            lo, hi = (int(x) for x in raw.replace("(", "").replace(")", "").split(","))
            return (lo, hi)
        if kind in ("dt.date", "date"):
            return dt.date.fromisoformat(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> Config:
    pairs = parse_config_text(Path(path).read_text()) if path else {}
    pairs.update(overrides or {})
    return Config().with_overrides(pairs)
