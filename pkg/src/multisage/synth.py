"""Synthetic multi-interest worlds with known ground truth.

Topic centres are unit vectors drawn in a low-rank subspace, so topics are
distinct (pairwise cosine below ``max_center_cosine``) yet correlated, the
way real concept regions are. Pins scatter around their topic centre. Every
user owns a few interests; an interest is a personal point inside a topic and
the user engages with the pins closest to that point. Users hop between
interests with a Markov chain, sometimes wander elsewhere in the current
topic and occasionally click a random pin from anywhere.

The defaults are calibrated so that the desk-scale evaluation separates the
models: frequent switching makes the last pin a weak predictor, and the
narrow neighbourhoods reward a profile that remembers every interest.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .core import SECONDS_PER_DAY, ActionKind, ActionLog, ActionRecord, PinStore, make_rng, normalize_rows
from .representation import DEFAULT_ALPHA
from .ward import ward_cluster


@dataclass(frozen=True)
class WorldConfig:
    """Knobs of the synthetic world.

    ``noise`` is the root-mean-square norm of the Gaussian offset of a pin
    from its topic centre; ``interest_spread`` is the same for a user's
    personal interest point. Offsets live in a random ``topic_rank``-dimensional
    subspace per topic (isotropic when ``topic_rank >= dimension``), which gives
    a topic internal geometry: nearby pins in the subspace are nearby in the
    embedding space, so a user's neighbourhood is a compact region.
    """

    n_topics: int = 20
    pins_per_topic: int = 2000
    dimension: int = 64
    noise: float = 0.1
    n_users: int = 500
    interests_per_user: tuple[int, int] = (2, 6)
    actions_per_day: tuple[int, int] = (3, 8)
    days: int = 30
    switch_prob: float = 0.9
    seed: int = 0
    center_rank: int = 6
    topic_rank: int = 4
    max_center_cosine: float = 0.5
    interest_spread: float = 0.2
    interest_neighborhood: int = 20
    explore_prob: float = 0.2
    stray_prob: float = 0.3
    interest_concentration: float = 1.0
    popularity_exponent: float = 0.8
    impressions_per_action: float = 3.0
    start_date: dt.date = dt.date(2024, 1, 1)

    def __post_init__(self):
        if self.n_topics < 1 or self.pins_per_topic < 1 or self.n_users < 0 or self.days < 1:
            raise ValueError("topic, pin, user and day counts must be positive")
        if self.dimension < 2:
            raise ValueError("dimension must be at least 2")
        lo, hi = self.interests_per_user
        if not 1 <= lo <= hi:
            raise ValueError("interests_per_user must be an increasing pair >= 1")
        if hi > self.n_topics:
            raise ValueError(f"users need up to {hi} distinct topics but only {self.n_topics} exist")
        if not 1 <= self.actions_per_day[0] <= self.actions_per_day[1]:
            raise ValueError("actions_per_day must be an increasing pair >= 1")
        if not all(0 <= p <= 1 for p in (self.switch_prob, self.explore_prob, self.stray_prob)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.noise < 0 or self.interest_spread < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0 < self.max_center_cosine <= 1:
            raise ValueError("max_center_cosine must lie in (0, 1]")
        if self.interest_concentration <= 0:
            raise ValueError("interest_concentration must be positive")
        if self.topic_rank < 1:
            raise ValueError("topic_rank must be >= 1")
        if self.interest_neighborhood < 1:
            raise ValueError("interest_neighborhood must be >= 1")

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class World:
    """Generated corpus plus the ground truth behind it."""

    config: WorldConfig
    pins: PinStore
    pin_topic: dict[int, int]
    centers: np.ndarray
    logs: dict[int, ActionLog]
    labels: dict[int, np.ndarray]
    interests: dict[int, list[int]] = field(default_factory=dict)

    @property
    def start_timestamp(self) -> int:
        d = self.config.start_date
        return int(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp())

    def day_start(self, day: int) -> int:
        return self.start_timestamp + day * SECONDS_PER_DAY

    def date(self, day: int) -> dt.date:
        return self.config.start_date + dt.timedelta(days=day)


def topic_centers(cfg: WorldConfig, rng: np.random.Generator,
                  max_tries: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sample unit centres with pairwise cosine below the cap.

    Returns the centres and the orthonormal basis of the subspace they span.
    """
    rank = min(cfg.center_rank, cfg.dimension)
    basis, _ = np.linalg.qr(rng.normal(size=(cfg.dimension, rank)))
    centers = []
    for _ in range(max_tries):
        c = basis @ rng.normal(size=rank)
        c /= np.linalg.norm(c)
        if all(float(c @ o) < cfg.max_center_cosine for o in centers):
            centers.append(c)
            if len(centers) == cfg.n_topics:
                return np.array(centers), basis
    raise ValueError("could not place topic centres under the cosine cap; raise center_rank")


def topic_bases(cfg: WorldConfig, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal (dimension, r) basis of each topic's offset subspace."""
    r = min(cfg.topic_rank, cfg.dimension)
    return np.array([np.linalg.qr(rng.normal(size=(cfg.dimension, r)))[0] for _ in range(cfg.n_topics)])


def _jitter(center: np.ndarray, basis: np.ndarray, scale: float, rng, size=None) -> np.ndarray:
    r = basis.shape[1]
    shape = (r,) if size is None else (size, r)
    return center + rng.normal(scale=scale / np.sqrt(r), size=shape) @ basis.T


def generate_world(cfg: WorldConfig | None = None) -> World:
    """Pins, per-user action logs (engagements and impressions) and topic labels."""
    cfg = cfg or WorldConfig()
    rng = make_rng(cfg.seed, 1)
    centers, _ = topic_centers(cfg, rng)
    bases = topic_bases(cfg, rng)

    n_pins = cfg.n_topics * cfg.pins_per_topic
    topic_of_row = np.repeat(np.arange(cfg.n_topics), cfg.pins_per_topic)
    parts = [_jitter(centers[t], bases[t], cfg.noise, rng, cfg.pins_per_topic) for t in range(cfg.n_topics)]
    vectors = normalize_rows(np.concatenate(parts))
    pin_ids = rng.permutation(n_pins).astype(np.int64) + 1
    quality = rng.beta(5.0, 1.5, size=n_pins)
    pins = PinStore(pin_ids, vectors, quality)
    pin_topic = {int(p): int(t) for p, t in zip(pin_ids, topic_of_row)}
    rows_by_topic = [np.flatnonzero(topic_of_row == t) for t in range(cfg.n_topics)]

    # topic popularity (Zipf) drives both interest choice and impressions
    popularity = 1.0 / np.arange(1, cfg.n_topics + 1) ** cfg.popularity_exponent
    popularity = popularity[rng.permutation(cfg.n_topics)]
    popularity /= popularity.sum()
    pin_weight = popularity[topic_of_row] / cfg.pins_per_topic
    logs, labels, interests = {}, {}, {}
    for user in range(1, cfg.n_users + 1):
        urng = make_rng(cfg.seed, 2, user)
        n_int = int(urng.integers(cfg.interests_per_user[0], cfg.interests_per_user[1] + 1))
        topics = urng.choice(cfg.n_topics, size=n_int, replace=False, p=popularity)
        weights = urng.dirichlet(np.full(n_int, cfg.interest_concentration))
        hoods = []
        for t in topics:
            rows = rows_by_topic[t]
            point = _jitter(centers[t], bases[t], cfg.interest_spread, urng)
            point /= np.linalg.norm(point)
            near = np.argsort(-(vectors[rows] @ point), kind="stable")[:cfg.interest_neighborhood]
            hoods.append(rows[near])

        records, topic_labels = [], []
        state = int(urng.choice(n_int, p=weights))
        for day in range(cfg.days):
            n_act = int(urng.integers(cfg.actions_per_day[0], cfg.actions_per_day[1] + 1))
            times = np.sort(urng.integers(0, SECONDS_PER_DAY, size=n_act))
            for ts in times:
                if urng.random() < cfg.switch_prob:
                    state = int(urng.choice(n_int, p=weights))
                if urng.random() < cfg.explore_prob:
                    row = int(urng.integers(n_pins))
                elif urng.random() < cfg.stray_prob:
                    row = int(urng.choice(rows_by_topic[topics[state]]))
                else:
                    row = int(urng.choice(hoods[state]))
                kind = ActionKind.REPIN if urng.random() < 0.5 else ActionKind.CLICK
                stamp = int(cfg_day_start(cfg, day) + ts)
                records.append(ActionRecord(stamp, int(pin_ids[row]), kind))
                topic_labels.append(int(topic_of_row[row]))
            n_imp = int(round(cfg.impressions_per_action * n_act))
            if n_imp:
                shown = urng.choice(n_pins, size=n_imp, p=pin_weight)
                for row, ts in zip(shown, np.sort(urng.integers(0, SECONDS_PER_DAY, size=n_imp))):
                    records.append(ActionRecord(int(cfg_day_start(cfg, day) + ts), int(pin_ids[row]),
                                                ActionKind.IMPRESSION))
                    topic_labels.append(int(topic_of_row[row]))
        order = sorted(range(len(records)), key=lambda i: (records[i].timestamp, i))
        logs[user] = ActionLog(user, tuple(records[i] for i in order))
        labels[user] = np.array([topic_labels[i] for i in order], dtype=np.int64)
        interests[user] = [int(t) for t in topics]
    return World(cfg, pins, pin_topic, centers, logs, labels, interests)


def cfg_day_start(cfg: WorldConfig, day: int) -> int:
    d = cfg.start_date
    return int(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp()) + day * SECONDS_PER_DAY


def cluster_purity(assignment, labels) -> float:
    """Fraction of points whose label is the majority label of their cluster."""
    assignment = np.asarray(assignment)
    labels = np.asarray(labels)
    if assignment.size == 0:
        return 1.0
    agree = 0
    for c in np.unique(assignment):
        _, counts = np.unique(labels[assignment == c], return_counts=True)
        agree += int(counts.max())
    return agree / assignment.size


def profile_purity(world: World, alpha: float = DEFAULT_ALPHA) -> float:
    """Mean per-user purity of the Ward clusters behind each profile."""
    scores = []
    for user, log in world.logs.items():
        keep = np.array([r.kind.is_engagement for r in log.records], dtype=bool)
        if not keep.any():
            continue
        pins = [r.pin for r, k in zip(log.records, keep) if k]
        _, clusters = ward_cluster(world.pins.matrix(pins), alpha)
        scores.append(cluster_purity(clusters.assignment, world.labels[user][keep]))
    return float(np.mean(scores)) if scores else 1.0
