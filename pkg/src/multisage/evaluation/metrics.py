"""Retrieval and ranking metrics."""

from __future__ import annotations

import numpy as np

from ..core import normalize_rows

RELEVANCE_THRESHOLD = 0.8


def relevant_hits(action_vecs: np.ndarray, rec_vecs: np.ndarray,
                  threshold: float = RELEVANCE_THRESHOLD) -> int:
    """How many actions have cosine >= ``threshold`` with some recommended pin."""
    if len(action_vecs) == 0 or len(rec_vecs) == 0:
        return 0
    sims = normalize_rows(action_vecs) @ normalize_rows(rec_vecs).T
    return int(np.count_nonzero(sims.max(axis=1) >= threshold))


def recall_hits(action_pins, rec_pins) -> int:
    """How many actions are literally in the recommendation set."""
    recs = set(int(p) for p in rec_pins)
    return sum(1 for p in action_pins if int(p) in recs)


def max_cosine(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Per candidate, the best cosine similarity to any query vector."""
    return (normalize_rows(candidates) @ normalize_rows(queries).T).max(axis=1)


def rank_positions(scores: np.ndarray, tiebreak: np.ndarray) -> np.ndarray:
    """1-based rank of every candidate under descending score, ties by ``tiebreak``."""
    order = np.lexsort((tiebreak, -np.asarray(scores)))
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def r_precision(ranks: np.ndarray, is_action: np.ndarray) -> float:
    """Share of the top-k that are actions, with k the number of actions."""
    k = int(np.count_nonzero(is_action))
    if k == 0:
        return 0.0
    return int(np.count_nonzero(ranks[is_action] <= k)) / k


def reciprocal_rank(ranks: np.ndarray, is_action: np.ndarray) -> float:
    """Mean of 1/rank over the action candidates."""
    r = ranks[is_action]
    return float(np.mean(1.0 / r)) if r.size else 0.0


def lift(value: float, baseline: float) -> float:
    """Relative change ``(value - baseline) / baseline``; nan when the baseline is 0."""
    return (value - baseline) / baseline if baseline else float("nan")
