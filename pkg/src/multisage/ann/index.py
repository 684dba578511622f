"""Layered navigable small-world index over refined pin embeddings."""

from __future__ import annotations

import io as _io
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..core import PinStore, make_rng, normalize_rows
from ..io import FormatError, atomic_write_bytes
from . import _kernels

INDEX_MAGIC = b"MSGI"
INDEX_VERSION = 1


@dataclass(frozen=True)
class IndexConfig:
    """Graph and refinement parameters.

    ``max_neighbors`` is M (layer 0 allows 2M), ``build_beam`` is
    ef_construction and ``query_beam`` is ef_search.
    """

    max_neighbors: int = 16
    build_beam: int = 200
    query_beam: int = 100
    dedup_threshold: float = 0.99
    quality_floor: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_neighbors < 2:
            raise ValueError("max_neighbors must be >= 2")
        if self.build_beam < 1 or self.query_beam < 1:
            raise ValueError("beam widths must be >= 1")
        if not 0 < self.dedup_threshold <= 1:
            raise ValueError("dedup_threshold must lie in (0, 1]")
        if not 0 <= self.quality_floor <= 1:
            raise ValueError("quality_floor must lie in [0, 1]")

    @property
    def level_multiplier(self) -> float:
        return 1.0 / math.log(self.max_neighbors)


class AnnIndex:
    """Frozen proximity graph; safe for concurrent readers.

    ``ids[r]`` is the pin id of graph row ``r``; ``vectors`` are unit-norm.
    Adjacency is symmetric on every layer.
    """

    def __init__(self, ids, vectors, levels, start, count, indices, entry, config: IndexConfig,
                 store: PinStore | None = None):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        self.levels = np.asarray(levels, dtype=np.int64)
        self.start = np.ascontiguousarray(start, dtype=np.int64)
        self.count = np.ascontiguousarray(count, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.entry = int(entry)
        self.config = config
        self.store = store
        self.traversals = 0
        self._row = {int(p): r for r, p in enumerate(self.ids)}

    def __len__(self) -> int:
        return int(self.ids.size)

    def __contains__(self, pin) -> bool:
        return int(pin) in self._row

    @property
    def max_level(self) -> int:
        return int(self.start.shape[0] - 1) if len(self) else -1

    def neighbors(self, pin: int, layer: int = 0) -> np.ndarray:
        r = self._row[int(pin)]
        s = self.start[layer, r]
        return self.ids[self.indices[s:s + self.count[layer, r]]]

    # -- search -------------------------------------------------------------

    def search_rows(self, queries: np.ndarray, k: int, beam: int | None = None):
        """Raw batch search; returns (distances, rows) of shape (nq, k), -1 padded."""
        beam = max(self.config.query_beam if beam is None else beam, k)
        queries = normalize_rows(np.atleast_2d(queries))
        self.traversals += queries.shape[0]
        return _kernels.search_batch(self.vectors, queries, k, self.entry, self.max_level, beam,
                                     self.start, self.count, self.indices)

    def query(self, q, k: int, beam: int | None = None) -> list[tuple[int, float]]:
        """Up to ``k`` (pin id, cosine distance) pairs in ascending distance."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self) == 0:
            return []
        d, rows = self.search_rows(np.asarray(q, dtype=np.float64)[None, :], k, beam)
        keep = rows[0] >= 0
        return [(int(self.ids[r]), float(x)) for r, x in zip(rows[0][keep], d[0][keep])]

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = _io.BytesIO()
        meta = json.dumps({"version": INDEX_VERSION, "config": asdict(self.config),
                           "entry": self.entry}).encode()
        buf.write(INDEX_MAGIC)
        buf.write(np.uint32(INDEX_VERSION).tobytes())
        buf.write(np.uint32(len(meta)).tobytes())
        buf.write(meta)
        for arr in (self.ids, self.vectors, self.levels, self.start, self.count, self.indices):
            np.save(buf, arr, allow_pickle=False)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, store: PinStore | None = None) -> "AnnIndex":
        if data[:4] != INDEX_MAGIC:
            raise FormatError("not an index file")
        version = int(np.frombuffer(data, np.uint32, 1, 4)[0])
        if version != INDEX_VERSION:
            raise FormatError(f"unsupported index version {version}")
        mlen = int(np.frombuffer(data, np.uint32, 1, 8)[0])
        meta = json.loads(data[12:12 + mlen])
        buf = _io.BytesIO(data[12 + mlen:])
        arrays = [np.load(buf, allow_pickle=False) for _ in range(6)]
        return cls(*arrays, meta["entry"], IndexConfig(**meta["config"]), store)

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path, store: PinStore | None = None) -> "AnnIndex":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), store)


def assign_levels(n: int, config: IndexConfig) -> np.ndarray:
    """Seeded geometric layer assignment, floor(-ln(U) / ln(M))."""
    u = 1.0 - make_rng(config.seed, 0x1D5).random(n)
    return np.floor(-np.log(u) * config.level_multiplier).astype(np.int64)


def _symmetrize(start, count, indices):
    """Make every layer undirected: keep an edge when either endpoint chose it."""
    nlayers, n = count.shape
    new_count = np.zeros_like(count)
    new_start = np.zeros_like(start)
    chunks = []
    offset = 0
    for layer in range(nlayers):
        src = np.repeat(np.arange(n, dtype=np.int64), count[layer])
        slabs = start[layer][:, None] + np.arange(int(count[layer].max(initial=0)))[None, :]
        mask = np.arange(slabs.shape[1])[None, :] < count[layer][:, None]
        dst = indices[slabs[mask]] if slabs.size else np.zeros(0, np.int64)
        pairs = np.unique(np.concatenate([src * n + dst, dst * n + src]))
        a, b = pairs // n, pairs % n
        deg = np.bincount(a, minlength=n)
        new_count[layer] = deg
        new_start[layer] = offset + np.concatenate([[0], np.cumsum(deg)[:-1]])
        chunks.append(b)
        offset += b.size
    flat = np.concatenate(chunks) if chunks else np.zeros(0, np.int64)
    return new_start, new_count, flat


def build_index(store: PinStore, accepted, config: IndexConfig | None = None) -> AnnIndex:
    """Build the graph over ``accepted`` pins, inserted in pin-id order."""
    config = config or IndexConfig()
    ids = np.sort(np.fromiter((int(p) for p in accepted), dtype=np.int64))
    if ids.size == 0:
        raise ValueError("cannot index an empty pool")
    vectors = normalize_rows(store.matrix(ids))
    levels = assign_levels(ids.size, config)
    m = config.max_neighbors
    start, count, indices, entry = _kernels.build_graph(vectors, levels, m, 2 * m, config.build_beam)
    start, count, indices = _symmetrize(start, count, indices)
    return AnnIndex(ids, vectors, levels, start, count, indices, entry, config, store)


def exact_knn(store: PinStore, accepted, q, k: int) -> list[tuple[int, float]]:
    """Brute-force cosine top-k over ``accepted`` (ground truth for recall)."""
    ids = np.sort(np.fromiter((int(p) for p in accepted), dtype=np.int64))
    if ids.size == 0:
        return []
    vectors = normalize_rows(store.matrix(ids))
    qn = normalize_rows(np.asarray(q, dtype=np.float64)[None, :])[0]
    dist = 1.0 - vectors @ qn
    order = np.lexsort((ids, dist))[:k]
    return [(int(ids[r]), float(dist[r])) for r in order]


def exact_knn_batch(vectors: np.ndarray, queries: np.ndarray, k: int, block: int = 256) -> np.ndarray:
    """Row indices of the exact cosine top-k for each query (unit-norm inputs)."""
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for s in range(0, queries.shape[0], block):
        sims = queries[s:s + block] @ vectors.T
        part = np.argpartition(-sims, kth=min(k, sims.shape[1] - 1), axis=1)[:, :k]
        ps = np.take_along_axis(sims, part, axis=1)
        out[s:s + block] = np.take_along_axis(part, np.argsort(-ps, axis=1, kind="stable"), axis=1)
    return out


def recall_at_k(found: np.ndarray, truth: np.ndarray) -> float:
    """Mean fraction of each true top-k row recovered (in [0, 1])."""
    found = np.atleast_2d(found)
    truth = np.atleast_2d(truth)
    hits = [np.intersect1d(f[f >= 0], t).size / t.size for f, t in zip(found, truth)]
    return float(np.mean(hits)) if hits else 0.0


def bench(index: AnnIndex, queries: np.ndarray, k: int = 10, beams=(10, 20, 50, 100, 200)):
    """Recall@k and mean latency (microseconds) per query beam."""
    truth = exact_knn_batch(index.vectors, normalize_rows(queries), k)
    index.search_rows(queries[:1], k, beams[0])  # compile outside the timed loop
    rows = []
    for beam in beams:
        t0 = time.perf_counter()
        _, found = index.search_rows(queries, k, beam)
        elapsed = time.perf_counter() - t0
        rows.append((beam, recall_at_k(found, truth), 1e6 * elapsed / len(queries)))
    return rows
