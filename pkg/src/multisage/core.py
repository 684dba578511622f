"""Shared value types, distance kernels and seeded randomness.

Embeddings are plain numpy arrays. They may be stored as float32, but every
distance, similarity and importance computation is carried out in float64.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SECONDS_PER_DAY = 86_400


class DimensionMismatch(ValueError):
    """Two embeddings of different length were combined."""


def as_embedding(values, dimension: int | None = None) -> np.ndarray:
    """Validate ``values`` as an embedding and return it as a float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"embedding must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("embedding dimension must be at least 2")
    if dimension is not None and arr.shape[0] != dimension:
        raise DimensionMismatch(f"expected dimension {dimension}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def squared_euclidean(a, b) -> float:
    """Squared L2 distance ``sum((a - b) ** 2)``."""
    a, b = _pair(a, b)
    diff = a - b
    return float(np.dot(diff, diff))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1]."""
    a, b = _pair(a, b)
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb)))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize the rows of ``x`` (float64). Zero rows raise."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return x / norms


# --------------------------------------------------------------------------
# Randomness
# --------------------------------------------------------------------------

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *stream)``.

    Philox is a counter-based bit generator, so two streams derived from the
    same seed never depend on the order in which tasks were scheduled. Output
    is identical across platforms for a given numpy major version.
    """
    keys = [int(seed) & 0xFFFF_FFFF_FFFF_FFFF] + [int(s) & 0xFFFF_FFFF_FFFF_FFFF for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(keys)))


def weighted_sample_without_replacement(items: Sequence[tuple[object, float]], k: int,
                                        rng: np.random.Generator) -> list:
    """Draw up to ``k`` distinct ids, each step proportional to the remaining weights.

    Items with zero weight are never drawn, so at most ``min(k, #positive)``
    ids are returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = [item for item, _ in items]
    weights = np.array([float(w) for _, w in items], dtype=np.float64)
    if weights.size == 0 or np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(weights > 0):
        raise ValueError("at least one weight must be positive")

    remaining = weights.copy()
    chosen = []
    for _ in range(min(k, int(np.count_nonzero(weights > 0)))):
        total = remaining.sum()
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(remaining), u, side="right"))
        # guard against u landing on the float edge of the cumulative sum
        idx = min(idx, remaining.size - 1)
        while remaining[idx] == 0:
            idx -= 1
        chosen.append(ids[idx])
        remaining[idx] = 0.0
    return chosen


# --------------------------------------------------------------------------
# Pins and actions
# --------------------------------------------------------------------------

class PinStore:
    """Immutable table of pin embeddings with optional quality scores.

    Vectors are held as a dense ``(n, d)`` float32 matrix ordered by pin id.
    """

    def __init__(self, ids, vectors, quality=None):
        ids = np.asarray(ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != ids.shape[0]:
            raise ValueError("vectors must be an (n, d) matrix matching ids")
        if vectors.shape[1] < 2:
            raise ValueError("embedding dimension must be at least 2")
        if ids.size and ids.min() < 0:
            raise ValueError("pin ids must be non-negative")
        if np.unique(ids).size != ids.size:
            raise ValueError("pin ids must be unique")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embeddings contain non-finite values")
        if quality is None:
            quality = np.ones(ids.size, dtype=np.float32)
        quality = np.asarray(quality, dtype=np.float32)
        if quality.shape != ids.shape:
            raise ValueError("quality must have one entry per pin")
        if np.any((quality < 0) | (quality > 1)):
            raise ValueError("quality scores must lie in [0, 1]")

        order = np.argsort(ids, kind="stable")
        self.ids = ids[order]
        self.vectors = vectors[order]
        self.quality = quality[order]
        for arr in (self.ids, self.vectors, self.quality):
            arr.setflags(write=False)
        self._row = {int(p): i for i, p in enumerate(self.ids)}

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.ids.size)

    def __contains__(self, pin) -> bool:
        return int(pin) in self._row

    def row(self, pin: int) -> int:
        try:
            return self._row[int(pin)]
        except KeyError:
            raise KeyError(f"unknown pin id {pin}") from None

    def rows(self, pins: Iterable[int]) -> np.ndarray:
        pins = np.asarray(pins if isinstance(pins, np.ndarray) else list(pins), dtype=np.int64).reshape(-1)
        if self.ids.size == 0:
            if pins.size:
                raise KeyError(f"unknown pin id {int(pins[0])}")
            return np.zeros(0, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.ids, pins), self.ids.size - 1)
        bad = self.ids[pos] != pins
        if bad.any():
            raise KeyError(f"unknown pin id {int(pins[bad][0])}")
        return pos.astype(np.int64)

    def get(self, pin: int) -> np.ndarray:
        """Embedding of ``pin`` as float64."""
        return self.vectors[self.row(pin)].astype(np.float64)

    def matrix(self, pins: Iterable[int]) -> np.ndarray:
        """Stack the embeddings of ``pins`` into a float64 matrix."""
        return self.vectors[self.rows(pins)].astype(np.float64)


class ActionKind(str, enum.Enum):
    REPIN = "repin"
    CLICK = "click"
    IMPRESSION = "impression"

    @property
    def is_engagement(self) -> bool:
        return self is not ActionKind.IMPRESSION


@dataclass(frozen=True, order=True)
class ActionRecord:
    timestamp: int
    pin: int
    kind: ActionKind = ActionKind.REPIN

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if not isinstance(self.kind, ActionKind):
            object.__setattr__(self, "kind", ActionKind(self.kind))


@dataclass(frozen=True)
class ActionLog:
    """Time-ordered activity of one user."""

    user: int
    records: tuple[ActionRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        ts = [r.timestamp for r in records]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"records of user {self.user} are not sorted by timestamp")

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_records(cls, user: int, records: Iterable[ActionRecord]) -> "ActionLog":
        """Build a log, sorting records by timestamp (stable)."""
        return cls(user, tuple(sorted(records, key=lambda r: r.timestamp)))

    def engagements(self) -> "ActionLog":
        """Repins and clicks only (the clustering input)."""
        return ActionLog(self.user, tuple(r for r in self.records if r.kind.is_engagement))

    def impressions(self) -> "ActionLog":
        return ActionLog(self.user, tuple(r for r in self.records if not r.kind.is_engagement))

    def between(self, start: int | None = None, end: int | None = None) -> "ActionLog":
        """Records with ``start <= timestamp < end``."""
        lo = -math.inf if start is None else start
        hi = math.inf if end is None else end
        return ActionLog(self.user, tuple(r for r in self.records if lo <= r.timestamp < hi))

    @property
    def pins(self) -> list[int]:
        return [r.pin for r in self.records]

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.records], dtype=np.int64)


def age_in_days(timestamps, now: int) -> np.ndarray:
    """Ages ``(now - t) / 86400`` as float64 days."""
    return (float(now) - np.asarray(timestamps, dtype=np.float64)) / SECONDS_PER_DAY
