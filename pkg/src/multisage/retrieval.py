"""Candidate generation from a multi-medoid profile."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .ann import AnnIndex, MedoidCache, query_by_medoid
from .core import PinStore, normalize_rows, weighted_sample_without_replacement
from .representation import UserProfile


@dataclass(frozen=True)
class RetrievalConfig:
    sampled_medoids: int = 3
    total_budget: int = 400

    def __post_init__(self):
        if self.sampled_medoids < 1:
            raise ValueError("sampled_medoids must be >= 1")
        if self.total_budget < self.sampled_medoids:
            raise ValueError("total_budget must be >= sampled_medoids")


class Recommendation(NamedTuple):
    pin: int
    similarity: float
    source: int


@dataclass(frozen=True)
class RecommendationSet:
    """Distinct pins ordered by similarity (desc), then pin id."""

    items: tuple[Recommendation, ...] = ()
    sampled: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def pins(self) -> list[int]:
        return [r.pin for r in self.items]

    def to_json(self) -> dict:
        return {"sampled_medoids": list(self.sampled),
                "pins": [{"pin": r.pin, "similarity": r.similarity, "medoid": r.source} for r in self.items]}


def merge_candidates(lists: Iterable[tuple[int, Iterable[tuple[int, float]]]], budget: int,
                     exclude=frozenset()) -> tuple[Recommendation, ...]:
    """Collapse per-source (pin, distance) lists keeping each pin's best similarity."""
    best: dict[int, Recommendation] = {}
    for source, found in lists:
        for pin, dist in found:
            if pin in exclude:
                continue
            sim = 1.0 - dist
            cur = best.get(pin)
            if cur is None or sim > cur.similarity or (sim == cur.similarity and source < cur.source):
                best[pin] = Recommendation(int(pin), float(sim), int(source))
    ranked = sorted(best.values(), key=lambda r: (-r.similarity, r.pin))
    return tuple(ranked[:budget])


def recommend(profile: UserProfile, index: AnnIndex, cache: MedoidCache | None,
              config: RetrievalConfig | None = None, rng: np.random.Generator | None = None,
              exclude=frozenset()) -> RecommendationSet:
    """Sample medoids by importance, fetch their neighbours and merge.

    Each sampled medoid fetches ``total_budget // n_sampled`` pins, where
    ``n_sampled`` is the number actually drawn, so a profile with fewer
    clusters than ``sampled_medoids`` still gets the full budget. Pins in
    ``exclude`` (typically the user's own engagements) are dropped.
    """
    config = config or RetrievalConfig()
    if len(profile) == 0:
        return RecommendationSet()
    if rng is None:
        rng = np.random.default_rng(0)
    sampled = weighted_sample_without_replacement(
        [(s.medoid, s.importance) for s in profile.summaries], config.sampled_medoids, rng)
    per = config.total_budget // len(sampled)
    lists = [(m, query_by_medoid(index, cache, m, per)) for m in sampled]
    return RecommendationSet(merge_candidates(lists, config.total_budget, exclude), tuple(sampled))


class DiversityScore(NamedTuple):
    value: float
    degenerate: bool


def diversity(pins, store: PinStore) -> DiversityScore:
    """Mean pairwise cosine distance; 0 and ``degenerate=True`` below two pins."""
    pins = list(pins.pins if isinstance(pins, RecommendationSet) else pins)
    if len(pins) < 2:
        return DiversityScore(0.0, True)
    return DiversityScore(mean_pairwise_cosine_distance(store.matrix(pins)), False)


def mean_pairwise_cosine_distance(vectors: np.ndarray) -> float:
    x = normalize_rows(vectors)
    n = x.shape[0]
    s = x.sum(axis=0)
    pair_sum = (float(s @ s) - float(np.einsum("ij,ij->", x, x))) / 2.0
    return float(1.0 - pair_sum / (n * (n - 1) / 2.0))
