"""User models compared in the offline experiments.

Every model maps a user's engagement history (strictly before the evaluation
time) to a :class:`UserEmbedding`: one or more query vectors, an importance
weight per vector, and the medoid pin behind each vector when there is one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

from ..core import ActionLog, PinStore, age_in_days, normalize_rows
from ..representation import DEFAULT_ALPHA, DEFAULT_LAMBDA, compute_importance, summarize_clusters
from ..ward import ClusterSet, ward_cluster


@dataclass
class UserEmbedding:
    vectors: np.ndarray                 # (e, d) float64
    importance: np.ndarray              # (e,)
    medoids: np.ndarray | None = None   # (e,) pin ids, or None for synthetic vectors

    def __len__(self) -> int:
        return int(self.vectors.shape[0])


def kmeans_cluster(points, k: int, rng: np.random.Generator, *, max_iter: int = 100,
                   tol: float = 1e-6) -> tuple[ClusterSet, np.ndarray]:
    """Lloyd's k-means seeded from ``k`` distinct input points.

    ``k`` is reduced to the number of distinct points when larger. Returns the
    partition and the final centroids (ordered like the partition's clusters).
    """
    X = np.asarray(points, dtype=np.float64)
    m = X.shape[0]
    if m == 0:
        return ClusterSet([], np.zeros(0, dtype=np.int64)), np.zeros((0, X.shape[-1]))
    rows = np.ascontiguousarray(X).view(np.dtype((np.void, X.dtype.itemsize * X.shape[1]))).ravel()
    distinct = np.unique(rows, return_index=True)[1]
    k = max(1, min(k, distinct.size))
    centroids = X[np.sort(rng.choice(np.sort(distinct), size=k, replace=False))].copy()
    sq = (X ** 2).sum(axis=1)
    for _ in range(max_iter):
        labels = _nearest(X, sq, centroids)
        onehot = (labels[:, None] == np.arange(k)[None, :]).astype(np.float64)
        counts = onehot.sum(axis=0)
        sums = onehot.T @ X
        filled = counts > 0
        new = centroids.copy()
        new[filled] = sums[filled] / counts[filled, None]
        moved = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if moved < tol:
            break
    labels = _nearest(X, sq, centroids)
    clusters = ClusterSet.from_labels(labels)
    ordered = np.array([X[list(c)].mean(axis=0) for c in clusters.clusters])
    return clusters, ordered


def _nearest(X, sq, centroids) -> np.ndarray:
    d2 = sq[:, None] - 2.0 * X @ centroids.T + (centroids ** 2).sum(axis=1)[None, :]
    return np.argmin(d2, axis=1)


def complete_linkage_cluster(points, alpha: float) -> ClusterSet:
    """Complete-linkage (maximum pairwise squared distance) clusters cut at ``alpha``."""
    X = np.asarray(points, dtype=np.float64)
    m = X.shape[0]
    if m <= 1:
        return ClusterSet.from_labels(np.zeros(m, dtype=np.int64))
    Z = linkage(pdist(X, metric="sqeuclidean"), method="complete")
    return ClusterSet.from_labels(fcluster(Z, t=alpha, criterion="distance"))


def decay_avg_embedding(log: ActionLog, store: PinStore, lam: float, now: int) -> np.ndarray:
    """L2-normalised sum of embeddings weighted by ``exp(-lam * age_days)``."""
    if len(log) == 0:
        raise ValueError("decay average needs at least one action")
    w = np.exp(-lam * age_in_days(log.timestamps, now))
    v = w @ store.matrix(log.pins)
    return normalize_rows(v[None, :])[0]


# -- models ----------------------------------------------------------------

class LastPin:
    name = "last_pin"

    def embed(self, log: ActionLog, store: PinStore, now: int, rng) -> UserEmbedding:
        pin = log.records[-1].pin
        return UserEmbedding(store.matrix([pin]), np.ones(1), np.array([pin]))


class DecayAvg:
    def __init__(self, lam: float = DEFAULT_LAMBDA):
        self.lam = lam
        self.name = f"decay_avg(lambda={lam:g})"

    def embed(self, log, store, now, rng) -> UserEmbedding:
        return UserEmbedding(decay_avg_embedding(log, store, self.lam, now)[None, :], np.ones(1))


class AllPins:
    """Every past engagement as its own embedding (the oracle's candidate set)."""

    name = "oracle"

    def embed(self, log, store, now, rng) -> UserEmbedding:
        pins = np.array(log.pins)
        return UserEmbedding(store.matrix(pins), np.ones(pins.size), pins)


class KMeansCentroids:
    """k-means centroids of past engagements (the k-means oracle's candidate set)."""

    def __init__(self, k: int = 3):
        self.k = k
        self.name = f"kmeans_oracle(k={k})"

    def embed(self, log, store, now, rng) -> UserEmbedding:
        clusters, centroids = kmeans_cluster(store.matrix(log.pins), self.k, rng)
        sizes = np.array([len(c) for c in clusters.clusters], dtype=np.float64)
        return UserEmbedding(centroids, sizes)


class ClusterModel:
    """Cluster engagements, then summarise each cluster by medoid or centroid.

    ``clustering`` is ``"ward"``, ``"kmeans"`` or ``"complete"``. Importance is
    the time-decayed member count with rate ``lam``.
    """

    def __init__(self, clustering: str = "ward", summary: str = "medoid", lam: float = DEFAULT_LAMBDA,
                 alpha: float = DEFAULT_ALPHA, k: int = 5, name: str | None = None):
        if clustering not in ("ward", "kmeans", "complete"):
            raise ValueError(f"unknown clustering {clustering!r}")
        if summary not in ("medoid", "centroid"):
            raise ValueError(f"unknown summary {summary!r}")
        self.clustering, self.summary, self.lam, self.alpha, self.k = clustering, summary, lam, alpha, k
        self.name = name or f"{clustering}_{summary}(lambda={lam:g})"

    def clusters(self, points, rng) -> ClusterSet:
        if self.clustering == "ward":
            return ward_cluster(points, self.alpha)[1]
        if self.clustering == "kmeans":
            return kmeans_cluster(points, self.k, rng)[0]
        return complete_linkage_cluster(points, self.alpha)

    def embed(self, log, store, now, rng, clusters: ClusterSet | None = None) -> UserEmbedding:
        pins = np.array(log.pins, dtype=np.int64)
        points = store.matrix(pins)
        if clusters is None:
            clusters = self.clusters(points, rng)
        ts = log.timestamps
        if self.summary == "medoid":
            summaries = summarize_clusters(clusters.clusters, points, pins, ts, self.lam, now)
            medoids = np.array([s.medoid for s in summaries], dtype=np.int64)
            return UserEmbedding(store.matrix(medoids), np.array([s.importance for s in summaries]), medoids)
        vecs, imps = [], []
        for members in clusters.clusters:
            vecs.append(points[list(members)].mean(axis=0))
            imps.append(compute_importance(members, ts, self.lam, now))
        order = np.argsort(-np.asarray(imps), kind="stable")
        return UserEmbedding(np.asarray(vecs)[order], np.asarray(imps)[order])


def largest_cluster_centroid(emb: UserEmbedding) -> UserEmbedding:
    """The single centroid with the largest member count (fixed, non-oracle choice)."""
    best = int(np.argmax(emb.importance))
    return UserEmbedding(emb.vectors[best:best + 1], emb.importance[best:best + 1])


__all__ = [
    "AllPins", "ClusterModel", "DecayAvg", "KMeansCentroids", "LastPin", "UserEmbedding",
    "complete_linkage_cluster", "decay_avg_embedding", "kmeans_cluster", "largest_cluster_centroid",
]
