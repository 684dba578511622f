"""Ward agglomerative clustering via the nearest-neighbour chain.

Distances follow the squared-L2 convention: two singletons start at
``||x - y||^2`` and the Lance-Williams recurrence keeps every later distance
equal to ``2 * n_a * n_b / (n_a + n_b) * ||c_a - c_b||^2``, the increase in
within-cluster sum of squares (times two) caused by merging ``a`` and ``b``.

The chain keeps a stack of clusters where each entry is the nearest neighbour
of the one below it. When the top two are reciprocal nearest neighbours they
are merged. Because Ward is reducible, the rest of the stack stays valid after
a merge, so every cluster is pushed at most once per episode and the whole run
costs O(m^2) time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

DEFAULT_MAX_POINTS = 5000
LEMMA_TOLERANCE = 1e-9


class InvariantViolation(AssertionError):
    """Raised when a chain-algorithm invariant fails during a strict run."""


@dataclass(frozen=True)
class MergeEvent:
    """``absorber`` takes over ``absorbed`` at Ward cost ``distance``."""

    absorber: int
    absorbed: int
    distance: float
    resulting_size: int


@dataclass
class ChainStats:
    """Counters from one chain run.

    ``lemma1_violations`` counts merged-cluster distances that fell below the
    smaller child distance (Ward is reducible, so this never happens);
    ``lemma2_violations`` counts pushes of a cluster already on the stack.
    """

    pushes: int = 0
    lance_williams_updates: int = 0
    lemma1_violations: int = 0
    lemma2_violations: int = 0
    max_stack_depth: int = 0


@dataclass
class MergeHistory:
    """Dendrogram in the order merges were performed.

    ``children[k]`` holds the two dendrogram node ids joined by event ``k``:
    ids below ``initial_count`` are input points, id ``initial_count + t`` is
    the cluster created by event ``t``.
    """

    events: list[MergeEvent]
    initial_count: int
    children: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    stats: ChainStats = field(default_factory=ChainStats)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def distances(self) -> np.ndarray:
        return np.array([e.distance for e in self.events], dtype=np.float64)

    def members(self, event: int) -> np.ndarray:
        """Sorted input indices covered by the cluster that ``event`` created."""
        m = self.initial_count
        out = []
        todo = [m + event]
        while todo:
            node = todo.pop()
            if node < m:
                out.append(node)
            else:
                todo.extend(self.children[node - m])
        return np.sort(np.array(out, dtype=np.int64))


@dataclass
class ClusterSet:
    """Flat partition of ``0..m-1``; ``assignment[i]`` is the ordinal of i's cluster."""

    clusters: list[tuple[int, ...]]
    assignment: np.ndarray

    def __len__(self) -> int:
        return len(self.clusters)

    @classmethod
    def from_labels(cls, labels) -> "ClusterSet":
        """Canonical partition from arbitrary labels, clusters ordered by first member."""
        labels = np.asarray(labels)
        groups: dict = {}
        for idx, lab in enumerate(labels.tolist()):
            groups.setdefault(lab, []).append(idx)
        clusters = sorted((tuple(g) for g in groups.values()), key=lambda c: c[0])
        assignment = np.empty(labels.shape[0], dtype=np.int64)
        for ordinal, members in enumerate(clusters):
            assignment[list(members)] = ordinal
        return cls(clusters, assignment)

    def as_frozensets(self) -> set[frozenset]:
        return {frozenset(c) for c in self.clusters}


def lance_williams_update(d_ik: float, d_jk: float, d_ij: float,
                          n_i: int, n_j: int, n_k: int) -> float:
    """Ward distance from ``C_i u C_j`` to ``C_k`` given the child distances."""
    if min(n_i, n_j, n_k) < 1:
        raise ValueError("cluster sizes must be >= 1")
    return ((n_i + n_k) * d_ik + (n_j + n_k) * d_jk - n_k * d_ij) / (n_i + n_j + n_k)


def ward_cluster(points, alpha: float, *, max_points: int = DEFAULT_MAX_POINTS,
                 strict: bool = True) -> tuple[MergeHistory, ClusterSet]:
    """Cluster ``points`` with the nearest-neighbour chain and cut at ``alpha``.

    Parameters
    ----------
    points : array-like of shape (m, d)
    alpha : float
        Merge-cost threshold; merges costing more than ``alpha`` are not accepted
        into the flat clustering.
    max_points : int
        Refuse inputs larger than this (the distance matrix is dense).
    strict : bool
        Raise :class:`InvariantViolation` on the first failed runtime check
        instead of only counting it in ``history.stats``.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(0, 0) if X.size == 0 else X.reshape(-1, 1)
    m = X.shape[0]
    if m > max_points:
        raise ValueError(f"{m} points exceeds the cap of {max_points}")
    if m == 0:
        return MergeHistory([], 0), ClusterSet([], np.zeros(0, dtype=np.int64))
    history = _nn_chain(X, strict)
    return history, extract_clusters(history, alpha)


def _nn_chain(X: np.ndarray, strict: bool) -> MergeHistory:
    m = X.shape[0]
    D = cdist(X, X, metric="sqeuclidean")
    np.fill_diagonal(D, np.inf)
    absorber, absorbed, dist, sizes, children, counters, error = _chain_kernel(D, strict, LEMMA_TOLERANCE)
    stats = ChainStats(*(int(c) for c in counters[:5]))
    if error == 1:
        raise InvariantViolation("merged cluster moved closer than both children")
    if error == 2:
        raise InvariantViolation("a cluster was pushed twice onto the chain")
    n = int(counters[5])
    events = [MergeEvent(int(absorber[t]), int(absorbed[t]), float(dist[t]), int(sizes[t])) for t in range(n)]
    return MergeHistory(events, m, children[:n].copy(), stats)


@njit(cache=True)
def _chain_kernel(D, strict, tol):
    m = D.shape[0]
    n_ev = max(m - 1, 0)
    absorber = np.empty(n_ev, dtype=np.int64)
    absorbed = np.empty(n_ev, dtype=np.int64)
    dist = np.empty(n_ev, dtype=np.float64)
    sizes = np.empty(n_ev, dtype=np.int64)
    children = np.empty((n_ev, 2), dtype=np.int64)
    # pushes, lance-williams updates, bound and double-push violations, max depth, events
    counters = np.zeros(6, dtype=np.int64)
    size = np.ones(m, dtype=np.float64)
    alive = np.ones(m, dtype=np.bool_)
    on_stack = np.zeros(m, dtype=np.bool_)
    node_of = np.arange(m)
    stack = np.empty(m, dtype=np.int64)
    live = m
    first = 0
    t = 0
    while live > 1:
        while not alive[first]:
            first += 1
        depth = 1
        stack[0] = first
        on_stack[first] = True
        counters[0] += 1
        while depth > 0:
            i = stack[depth - 1]
            nxt = -1
            dmin = np.inf
            for k in range(m):
                if D[i, k] < dmin:
                    dmin = D[i, k]
                    nxt = k
            if depth >= 2 and D[i, stack[depth - 2]] == dmin:
                j = stack[depth - 2]
                depth -= 2
                on_stack[i] = False
                on_stack[j] = False
                ni = size[i]
                nj = size[j]
                for k in range(m):
                    if not alive[k] or k == i or k == j:
                        continue
                    nk = size[k]
                    d_ik = D[i, k]
                    d_jk = D[j, k]
                    upd = ((ni + nk) * d_ik + (nj + nk) * d_jk - nk * dmin) / (ni + nj + nk)
                    counters[1] += 1
                    floor = min(d_ik, d_jk)
                    if upd < floor - tol * max(1.0, floor):
                        counters[2] += 1
                        if strict:
                            return absorber, absorbed, dist, sizes, children, counters, 1
                    D[i, k] = upd
                    D[k, i] = upd
                for k in range(m):
                    D[j, k] = np.inf
                    D[k, j] = np.inf
                alive[j] = False
                live -= 1
                children[t, 0] = node_of[i]
                children[t, 1] = node_of[j]
                size[i] = ni + nj
                node_of[i] = m + t
                absorber[t] = i
                absorbed[t] = j
                dist[t] = dmin
                sizes[t] = np.int64(size[i])
                t += 1
                counters[5] = t
            else:
                if on_stack[nxt]:
                    counters[3] += 1
                    if strict:
                        return absorber, absorbed, dist, sizes, children, counters, 2
                    for k in range(depth):
                        on_stack[stack[k]] = False
                    break
                stack[depth] = nxt
                depth += 1
                on_stack[nxt] = True
                counters[0] += 1
                if depth > counters[4]:
                    counters[4] = depth
    return absorber, absorbed, dist, sizes, children, counters, 0


def extract_clusters(history: MergeHistory, alpha: float) -> ClusterSet:
    """Flat clusters from a dendrogram.

    Events are visited by decreasing cost. A merged cluster is accepted when
    its cost is at most ``alpha`` and it shares no point with an already
    accepted cluster. Points covered by no accepted cluster become singletons.

    Among equal costs a merge is visited before the merges nested inside it
    (later events first), so repeated identical points end up in one cluster;
    disjoint equal-cost clusters are accepted whatever their relative order.
    """
    m = history.initial_count
    n = len(history.events)
    labels = np.full(m, -1, dtype=np.int64)
    # two dendrogram clusters overlap only when one contains the other, so an
    # overlap check is a walk up the parents plus a flag for accepted descendants
    parent = np.full(m + n, -1, dtype=np.int64)
    for t in range(n):
        parent[history.children[t]] = m + t
    accepted = np.zeros(m + n, dtype=bool)
    below = np.zeros(m + n, dtype=bool)
    order = sorted(range(n), key=lambda t: (-history.events[t].distance, -t))
    n_accepted = 0
    for t in order:
        if history.events[t].distance > alpha:
            continue
        node = m + t
        if below[node]:
            continue
        up = node
        while up >= 0 and not accepted[up]:
            up = parent[up]
        if up >= 0:
            continue
        accepted[node] = True
        up = node
        while up >= 0 and not below[up]:
            below[up] = True
            up = parent[up]
        labels[history.members(t)] = n_accepted
        n_accepted += 1
    loose = np.flatnonzero(labels < 0)
    labels[loose] = n_accepted + np.arange(loose.size)
    return ClusterSet.from_labels(labels)


def naive_ward_oracle(points) -> MergeHistory:
    """Reference dendrogram by repeatedly merging the globally cheapest pair.

    Merge costs are computed from cluster centroids and sizes,
    ``2 * n_a * n_b / (n_a + n_b) * ||c_a - c_b||^2``, with no use of the
    Lance-Williams recurrence. O(m^3); intended for m <= 256.
    """
    X = np.asarray(points, dtype=np.float64)
    m = X.shape[0]
    if m > 256:
        raise ValueError("the naive oracle is limited to 256 points")
    centroid = X.copy()
    size = np.ones(m)
    alive = np.ones(m, dtype=bool)
    node_of = np.arange(m, dtype=np.int64)
    events = []
    children = np.empty((max(m - 1, 0), 2), dtype=np.int64)
    for t in range(m - 1):
        ids = np.flatnonzero(alive)
        c = centroid[ids]
        n = size[ids]
        diff = c[:, None, :] - c[None, :, :]
        sq = np.einsum("abk,abk->ab", diff, diff)
        cost = 2.0 * n[:, None] * n[None, :] / (n[:, None] + n[None, :]) * sq
        np.fill_diagonal(cost, np.inf)
        a, b = np.unravel_index(int(np.argmin(cost)), cost.shape)
        i, j = int(ids[min(a, b)]), int(ids[max(a, b)])
        total = size[i] + size[j]
        centroid[i] = (size[i] * centroid[i] + size[j] * centroid[j]) / total
        children[t] = (node_of[i], node_of[j])
        events.append(MergeEvent(i, j, float(cost[a, b]), int(total)))
        size[i] = total
        alive[j] = False
        node_of[i] = m + t
    return MergeHistory(events, m, children)
