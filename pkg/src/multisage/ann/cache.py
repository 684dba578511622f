"""Medoid-keyed result cache in front of the graph index."""

from __future__ import annotations

import threading
from collections import OrderedDict

from .index import AnnIndex


class MedoidCache:
    """Bounded LRU map ``(medoid pin, k) -> result list``.

    Lookups and inserts are thread-safe and get-or-compute is linearizable per
    key: concurrent misses on one key run the computation once. The cache
    empties itself when it is used with a different index than before.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.hits = 0
        self.misses = 0
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._key_locks: dict = {}
        self._index_ref: int | None = None

    def __len__(self) -> int:
        return len(self._data)

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self._key_locks.clear()

    def bind(self, index: AnnIndex) -> None:
        """Drop every entry if ``index`` is not the index the entries came from."""
        with self._lock:
            if self._index_ref != id(index):
                self._data.clear()
                self._index_ref = id(index)

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            return None

    def put(self, key, value) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def get_or_compute(self, key, compute):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            with self._lock:
                if key in self._data:
                    self._data.move_to_end(key)
                    self.hits += 1
                    return self._data[key]
                self.misses += 1
            value = compute()
            self.put(key, value)
        with self._lock:
            self._key_locks.pop(key, None)
        return value


def query_by_medoid(index: AnnIndex, cache: MedoidCache | None, medoid: int, k: int):
    """Top-``k`` neighbours of a medoid pin, excluding the medoid itself.

    The medoid's embedding is looked up in the index's pin store, so medoids
    that were refined out of the pool can still be queried.
    """
    if index.store is None:
        raise ValueError("index has no pin store attached")
    if medoid not in index.store:
        raise KeyError(f"unknown medoid pin {medoid}")

    def compute():
        found = index.query(index.store.get(medoid), k + 1)
        return tuple(r for r in found if r[0] != medoid)[:k]

    if cache is None:
        return compute()
    cache.bind(index)
    return cache.get_or_compute((int(medoid), int(k)), compute)
