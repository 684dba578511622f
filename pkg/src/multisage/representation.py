"""Per-user profiles: Ward clusters summarised by medoid and time-decayed importance."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import SECONDS_PER_DAY, ActionLog, PinStore, age_in_days
from .ward import ward_cluster

DEFAULT_ALPHA = 1.0
DEFAULT_LAMBDA = 0.01
WINDOW_DAYS = 90


class ProfileSource(str, enum.Enum):
    BATCH = "batch"
    ONLINE = "online"


@dataclass(frozen=True, order=True)
class ProfileVersion:
    date: dt.date
    source: ProfileSource = ProfileSource.BATCH


@dataclass(frozen=True)
class ClusterSummary:
    medoid: int
    importance: float
    member_count: int

    def __post_init__(self):
        if self.member_count < 1:
            raise ValueError("a cluster has at least one member")
        if not self.importance > 0:
            raise ValueError("importance must be positive")


@dataclass(frozen=True)
class UserProfile:
    user: int
    summaries: tuple[ClusterSummary, ...] = ()
    version: ProfileVersion = field(default_factory=lambda: ProfileVersion(dt.date(1970, 1, 1)))

    def __post_init__(self):
        ordered = tuple(sorted(self.summaries, key=lambda s: (-s.importance, s.medoid)))
        object.__setattr__(self, "summaries", ordered)
        medoids = [s.medoid for s in ordered]
        if len(set(medoids)) != len(medoids):
            raise ValueError(f"profile of user {self.user} repeats a medoid")

    def __len__(self) -> int:
        return len(self.summaries)

    @property
    def medoids(self) -> list[int]:
        return [s.medoid for s in self.summaries]


def utc_date(timestamp: int) -> dt.date:
    return dt.datetime.fromtimestamp(int(timestamp), tz=dt.timezone.utc).date()


def medoid_ranking(points: np.ndarray, pins) -> list[int]:
    """Member positions ordered by sum of squared distances, then pin id."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        raise ValueError("cannot pick a medoid of an empty cluster")
    cost = cdist(points, points, metric="sqeuclidean").sum(axis=1)
    pins = np.asarray(pins, dtype=np.int64)
    return [int(i) for i in np.lexsort((pins, cost))]


def compute_medoid(cluster, points, pins) -> int:
    """Pin id of the member minimising the sum of squared distances to the others.

    ``cluster`` indexes rows of ``points``; ``pins[i]`` is the pin id of row i.
    Ties go to the lowest pin id.
    """
    members = np.asarray(sorted(cluster), dtype=np.int64)
    if members.size == 0:
        raise ValueError("cannot pick a medoid of an empty cluster")
    pins = np.asarray(pins, dtype=np.int64)[members]
    best = medoid_ranking(np.asarray(points, dtype=np.float64)[members], pins)[0]
    return int(pins[best])


def compute_centroid(cluster, points) -> np.ndarray:
    """Arithmetic mean of the member embeddings."""
    members = np.asarray(sorted(cluster), dtype=np.int64)
    if members.size == 0:
        raise ValueError("cannot average an empty cluster")
    return np.asarray(points, dtype=np.float64)[members].mean(axis=0)


def compute_importance(cluster, timestamps, lam: float, now: int) -> float:
    """Sum of ``exp(-lam * age_days)`` over the members of ``cluster``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    ts = np.asarray(timestamps, dtype=np.int64)[np.asarray(sorted(cluster), dtype=np.int64)]
    if np.any(ts > now):
        raise ValueError("member timestamps must not be in the future")
    if lam == 0:
        return float(ts.size)
    return float(np.exp(-lam * age_in_days(ts, now)).sum())


def profile_window(log: ActionLog, now: int, window_days: int = WINDOW_DAYS) -> ActionLog:
    """Engagements in ``(now - window_days, now]``."""
    start = now - window_days * SECONDS_PER_DAY + 1
    return log.engagements().between(start, now + 1)


def build_profile(log: ActionLog, store: PinStore, alpha: float = DEFAULT_ALPHA,
                  lam: float = DEFAULT_LAMBDA, now: int | None = None, *,
                  window_days: int | None = WINDOW_DAYS,
                  source: ProfileSource = ProfileSource.BATCH) -> UserProfile:
    """Cluster a user's recent engagements and summarise every cluster.

    ``now`` defaults to the last action time. Pins missing from ``store``
    raise ``KeyError``; callers that tolerate missing embeddings filter first.
    """
    if now is None:
        now = log.records[-1].timestamp if len(log) else 0
    if window_days is not None:
        log = profile_window(log, now, window_days)
    else:
        log = log.engagements().between(None, now + 1)
    version = ProfileVersion(utc_date(now), source)
    if len(log) == 0:
        return UserProfile(log.user, (), version)

    pins = np.array(log.pins, dtype=np.int64)
    points = store.matrix(pins)
    timestamps = log.timestamps
    _, clusters = ward_cluster(points, alpha)
    return UserProfile(log.user, summarize_clusters(clusters.clusters, points, pins, timestamps, lam, now),
                       version)


def summarize_clusters(clusters, points, pins, timestamps, lam, now) -> tuple[ClusterSummary, ...]:
    """Medoid and importance per cluster, keeping medoid ids distinct.

    Clusters are served in order of importance; when a cluster's best medoid
    is already taken it falls back to its next-best member, and a cluster with
    no free member is folded into the summary holding its medoid.
    """
    drafts = []
    for members in clusters:
        members = np.asarray(members, dtype=np.int64)
        imp = compute_importance(members, timestamps, lam, now)
        ranking = [int(pins[members[r]]) for r in medoid_ranking(points[members], pins[members])]
        drafts.append((imp, ranking, members.size))
    drafts.sort(key=lambda d: (-d[0], d[1][0]))

    taken: dict[int, list] = {}
    order = []
    for imp, ranking, count in drafts:
        medoid = next((p for p in ranking if p not in taken), None)
        if medoid is None:
            slot = taken[ranking[0]]
            slot[0] += imp
            slot[1] += count
            continue
        taken[medoid] = [imp, count]
        order.append(medoid)
    return tuple(ClusterSummary(p, float(taken[p][0]), int(taken[p][1])) for p in order)
