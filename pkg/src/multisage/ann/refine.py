"""Candidate-pool refinement: quality floor, then greedy near-duplicate removal."""

from __future__ import annotations

import logging

import numpy as np

from ..core import PinStore, normalize_rows
from .index import IndexConfig

log = logging.getLogger(__name__)


def refine_pool(store: PinStore, config: IndexConfig | None = None, *, block: int = 2048) -> np.ndarray:
    """Pin ids that survive refinement, in ascending order.

    Pins below ``quality_floor`` are dropped first. The rest are scanned in
    pin-id order and a pin is dropped when its cosine similarity to any
    already accepted pin is at least ``dedup_threshold``.
    """
    config = config or IndexConfig()
    keep = store.quality >= config.quality_floor
    ids = store.ids[keep]
    if ids.size == 0:
        log.warning("no pin meets the quality floor %.3f; the pool is empty", config.quality_floor)
        return ids.copy()
    vecs = normalize_rows(store.vectors[keep])
    thr = config.dedup_threshold

    accepted = np.zeros(ids.size, dtype=bool)
    acc_rows: list[int] = []
    for s in range(0, ids.size, block):
        chunk = vecs[s:s + block]
        alive = np.ones(chunk.shape[0], dtype=bool)
        if acc_rows:
            prev = vecs[np.asarray(acc_rows)]
            for p in range(0, prev.shape[0], 8 * block):
                alive &= ~np.any(chunk @ prev[p:p + 8 * block].T >= thr, axis=1)
        inner = chunk @ chunk.T
        chosen: list[int] = []
        for r in np.flatnonzero(alive):
            if chosen and np.any(inner[r, chosen] >= thr):
                continue
            chosen.append(int(r))
        accepted[s + np.asarray(chosen, dtype=np.int64)] = True
        acc_rows.extend(s + c for c in chosen)
    dropped = ids.size - int(accepted.sum())
    if dropped:
        log.info("dropped %d near-duplicate pins", dropped)
    return ids[accepted]
