"""Offline evaluation protocol: next-action, retrieval, ranking and diversity sweeps.

Test days are processed in chronological order. For each test day every
model is refit on the user's engagements strictly before that day (within the
trailing window), evaluated on the day's activity, and the day then becomes
training data for the next one. Each (day, user) pair is an independent job;
jobs may run on a thread pool and their partial sums are reduced in job
order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..ann import AnnIndex, MedoidCache, query_by_medoid
from ..core import SECONDS_PER_DAY, ActionLog, PinStore, make_rng, weighted_sample_without_replacement
from ..representation import DEFAULT_ALPHA, WINDOW_DAYS
from ..retrieval import merge_candidates, mean_pairwise_cosine_distance
from .baselines import (AllPins, ClusterModel, DecayAvg, KMeansCentroids, LastPin, UserEmbedding,
                        largest_cluster_centroid)
from .metrics import (RELEVANCE_THRESHOLD, max_cosine, r_precision, rank_positions, recall_hits,
                      reciprocal_rank, relevant_hits)
from .report import EvalReport

log = logging.getLogger(__name__)

IMPRESSIONS_PER_ACTION = 20


class ChronologyError(AssertionError):
    """A model was about to see data from the batch it is evaluated on."""


@dataclass
class EvalData:
    """Pins, full logs and the start timestamps of the chronological test batches.

    ``interests`` optionally holds each user's ground-truth interest topics.
    ``chronology_checks`` counts the leak checks made by :meth:`split`.
    """

    pins: PinStore
    logs: dict[int, ActionLog]
    batch_starts: list[int]
    window_days: int = WINDOW_DAYS
    users: list[int] | None = None
    interests: dict[int, list[int]] = field(default_factory=dict)
    chronology_checks: int = 0
    _engagements: dict[int, ActionLog] = field(default_factory=dict, repr=False)

    @classmethod
    def from_world(cls, world, split_day: int = 24, users=None) -> "EvalData":
        starts = [world.day_start(d) for d in range(split_day, world.config.days)]
        return cls(world.pins, world.logs, starts, users=users, interests=dict(world.interests))

    @classmethod
    def from_logs(cls, pins: PinStore, logs: dict[int, ActionLog], split_day: int = 24, *,
                  window_days: int = WINDOW_DAYS, interests=None) -> "EvalData":
        """Day batches counted from the UTC day of the earliest action through the last one."""
        firsts = [lg.records[0].timestamp for lg in logs.values() if len(lg)]
        starts = []
        if firsts:
            origin = min(firsts) - min(firsts) % SECONDS_PER_DAY
            last = max(lg.records[-1].timestamp for lg in logs.values() if len(lg))
            n_days = (last - origin) // SECONDS_PER_DAY + 1
            starts = [origin + d * SECONDS_PER_DAY for d in range(split_day, n_days)]
        return cls(pins, logs, starts, window_days, interests=dict(interests or {}))

    def restricted_to(self, users) -> "EvalData":
        return EvalData(self.pins, self.logs, self.batch_starts, self.window_days, sorted(users),
                        self.interests, 0, self._engagements)

    def restricted_to_multi_interest(self, min_interests: int = 3) -> "EvalData":
        """Only users whose ground truth lists at least ``min_interests`` interests."""
        if not self.interests:
            raise ValueError("no ground-truth interests available")
        return self.restricted_to(u for u, t in self.interests.items() if len(t) >= min_interests)

    def user_list(self) -> list[int]:
        return sorted(self.logs) if self.users is None else sorted(self.users)

    def engagements(self, user: int) -> ActionLog:
        if user not in self._engagements:
            self._engagements[user] = self.logs[user].engagements()
        return self._engagements[user]

    def jobs(self) -> list[tuple[int, int]]:
        """(batch, user) pairs with training history and at least one test engagement."""
        out = []
        for b, start in enumerate(self.batch_starts):
            lo, hi = start - self.window_days * SECONDS_PER_DAY, start + SECONDS_PER_DAY
            for user in self.user_list():
                eng = self.engagements(user)
                if len(eng.between(lo, start)) and len(eng.between(start, hi)):
                    out.append((b, user))
        return out

    def split(self, batch: int, user: int) -> tuple[ActionLog, ActionLog, ActionLog]:
        """Training engagements, test engagements and test impressions for one job."""
        start = self.batch_starts[batch]
        train = self.engagements(user).between(start - self.window_days * SECONDS_PER_DAY, start)
        day = self.logs[user].between(start, start + SECONDS_PER_DAY)
        self.chronology_checks += 1
        if len(train) and train.records[-1].timestamp >= start:
            raise ChronologyError(f"user {user}: training data reaches into batch {batch}")
        return train, day.engagements(), day.impressions()

    def batches(self):
        """Yield ``(batch, user, train, test_engagements, test_impressions)`` in job order."""
        for b, user in self.jobs():
            yield (b, user, *self.split(b, user))


def _map(fn, items, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _reduce(parts, keys) -> dict:
    total = {k: 0 for k in keys}
    for part in parts:
        for k in keys:
            total[k] += part[k]
    return total


@dataclass(frozen=True)
class ModelSpec:
    """A user model plus how many of its embeddings a request may use."""

    name: str
    model: object
    e: int = 1


def standard_models(alpha: float = DEFAULT_ALPHA) -> list[ModelSpec]:
    """The comparison lineup for the retrieval and ranking tasks."""
    ward = ClusterModel("ward", "medoid", 0.01, alpha)
    return [
        ModelSpec("last_pin", LastPin()),
        ModelSpec("decay_avg(lambda=0.01)", DecayAvg(0.01)),
        ModelSpec("multi(sample 1 embedding)", ward, 1),
        ModelSpec("multi(kmeans k=5)", ClusterModel("kmeans", "medoid", 0.01, alpha, k=5), 3),
        ModelSpec("multi(complete linkage)", ClusterModel("complete", "medoid", 0.01, alpha), 3),
        ModelSpec("multi(embedding=centroid)", ClusterModel("ward", "centroid", 0.01, alpha), 3),
        ModelSpec("multi(importance lambda=0)", ClusterModel("ward", "medoid", 0.0, alpha), 3),
        ModelSpec("multi(importance lambda=0.1)", ClusterModel("ward", "medoid", 0.1, alpha), 3),
        ModelSpec("multi(ward, medoid, lambda=0.01)", ward, 3),
    ]


def core_models(alpha: float = DEFAULT_ALPHA) -> list[ModelSpec]:
    """The four models whose ordering the acceptance checks track."""
    ward = ClusterModel("ward", "medoid", 0.01, alpha)
    return [
        ModelSpec("last_pin", LastPin()),
        ModelSpec("decay_avg(lambda=0.01)", DecayAvg(0.01)),
        ModelSpec("multi(sample 1 embedding)", ward, 1),
        ModelSpec("multi(ward, medoid, lambda=0.01)", ward, 3),
    ]


class _Fitter:
    """Fits models for one (user, batch), sharing clusterings between variants."""

    def __init__(self, pins: PinStore, train: ActionLog, now: int, seed: int, user: int, batch: int):
        self.pins, self.train, self.now = pins, train, now
        self.seed, self.user, self.batch = seed, user, batch
        self._clusters: dict = {}
        self._embeddings: dict = {}

    def embed(self, spec: ModelSpec) -> UserEmbedding:
        key = id(spec.model)
        if key in self._embeddings:
            return self._embeddings[key]
        model = spec.model
        rng = make_rng(self.seed, 11, self.user, self.batch)
        if isinstance(model, ClusterModel):
            ckey = (model.clustering, model.alpha, model.k)
            if ckey not in self._clusters:
                self._clusters[ckey] = model.clusters(self.pins.matrix(self.train.pins), rng)
            emb = model.embed(self.train, self.pins, self.now, rng, self._clusters[ckey])
        else:
            emb = model.embed(self.train, self.pins, self.now, rng)
        self._embeddings[key] = emb
        return emb

    def select(self, emb: UserEmbedding, e: int) -> np.ndarray:
        """Rows used for one retrieval request: all when few enough, else sampled by importance.

        The stream is shared by every model for this (user, batch), so the
        draws for ``e`` are a prefix of the draws for ``e + 1``.
        """
        if len(emb) <= e:
            return np.arange(len(emb))
        rng = make_rng(self.seed, 12, self.user, self.batch)
        items = [(i, float(w)) for i, w in enumerate(emb.importance)]
        return np.array(weighted_sample_without_replacement(items, e, rng), dtype=np.int64)


def top_rows(emb: UserEmbedding, e: int) -> np.ndarray:
    """The ``e`` most important rows (ties: lower row first)."""
    return np.argsort(-np.asarray(emb.importance), kind="stable")[:e]


def _fetch(emb: UserEmbedding, rows, index: AnnIndex, cache: MedoidCache | None, budget: int):
    per = budget // len(rows)
    lists = []
    for r in rows:
        if emb.medoids is not None:
            found = query_by_medoid(index, cache, int(emb.medoids[r]), per)
        else:
            found = index.query(emb.vectors[r], per)
        lists.append((int(r), found))
    return merge_candidates(lists, budget)


_RETRIEVAL_KEYS = ("actions", "relevant", "recalled", "div_sum", "div_n", "size", "requests")


def retrieval_task(specs: list[ModelSpec], data: EvalData, index: AnnIndex,
                   cache: MedoidCache | None = None, *, budget: int = 400, seed: int = 0,
                   threshold: float = RELEVANCE_THRESHOLD, workers: int = 1) -> EvalReport:
    """Relevance, recall and diversity of each model's recommendation sets.

    Relevance and recall are pooled over all test actions; diversity is the
    mean over (user, batch) requests with at least two recommended pins.
    """
    def job(key):
        b, user = key
        train, test, _ = data.split(b, user)
        fitter = _Fitter(data.pins, train, data.batch_starts[b] - 1, seed, user, b)
        action_pins = test.pins
        action_vecs = data.pins.matrix(action_pins)
        out = {}
        for spec in specs:
            emb = fitter.embed(spec)
            rec_pins = [r.pin for r in _fetch(emb, fitter.select(emb, spec.e), index, cache, budget)]
            a = {"actions": len(action_pins), "relevant": 0, "recalled": 0, "div_sum": 0.0, "div_n": 0,
                 "size": len(rec_pins), "requests": 1}
            if rec_pins:
                rec_vecs = data.pins.matrix(rec_pins)
                a["relevant"] = relevant_hits(action_vecs, rec_vecs, threshold)
                a["recalled"] = recall_hits(action_pins, rec_pins)
                if len(rec_pins) >= 2:
                    a["div_sum"] = mean_pairwise_cosine_distance(rec_vecs)
                    a["div_n"] = 1
            out[spec.name] = a
        return out

    parts = _map(job, data.jobs(), workers)
    rows = {}
    for spec in specs:
        a = _reduce((p[spec.name] for p in parts), _RETRIEVAL_KEYS)
        n = max(a["actions"], 1)
        rows[spec.name] = {
            "relevance": a["relevant"] / n,
            "recall": a["recalled"] / n,
            "diversity": a["div_sum"] / a["div_n"] if a["div_n"] else 0.0,
            "mean_set_size": a["size"] / max(a["requests"], 1),
            "test_actions": a["actions"],
        }
    return EvalReport("retrieval", rows, baseline="last_pin", primary=("relevance", "recall"))


def ranking_candidates(actions, impressions, all_ids: np.ndarray, rng: np.random.Generator,
                       ratio: int = IMPRESSIONS_PER_ACTION) -> tuple[np.ndarray, np.ndarray]:
    """The actions followed by exactly ``ratio`` impressions per action.

    Impressions are drawn without replacement from the shown pins that are not
    also actions. A shortfall is padded with uniformly random pool pins that
    are neither actions nor already chosen. Returns candidates and an action mask.
    """
    actions = np.asarray(actions, dtype=np.int64)
    need = ratio * actions.size
    pool = np.setdiff1d(np.unique(np.asarray(impressions, dtype=np.int64)), actions)
    shown = rng.choice(pool, size=min(need, pool.size), replace=False) if pool.size else pool
    if shown.size < need:
        taken = set(actions.tolist()) | set(shown.tolist())
        if all_ids.size - len(taken) < need - shown.size:
            raise ValueError("pin pool too small to pad the impressions")
        pad = []
        while len(pad) < need - shown.size:
            p = int(all_ids[rng.integers(all_ids.size)])
            if p not in taken:
                taken.add(p)
                pad.append(p)
        shown = np.concatenate([shown, np.array(pad, dtype=np.int64)])
    candidates = np.concatenate([actions, shown.astype(np.int64)])
    is_action = np.zeros(candidates.size, dtype=bool)
    is_action[:actions.size] = True
    return candidates, is_action


def ranking_task(specs: list[ModelSpec], data: EvalData, *, seed: int = 0,
                 ratio: int = IMPRESSIONS_PER_ACTION, workers: int = 1) -> EvalReport:
    """R-precision and reciprocal rank of actions against sampled impressions.

    Each (user, batch) contributes one candidate list from
    :func:`ranking_candidates`, shared by all models. Metrics are averaged over
    candidate lists so every batch weighs the same.

    Unlike retrieval, ranking is deterministic given the candidates: a model
    scores with its ``e`` most important embeddings.
    """
    all_ids = data.pins.ids

    def job(key):
        b, user = key
        train, test, impressions = data.split(b, user)
        rng = make_rng(seed, 13, user, b)
        candidates, is_action = ranking_candidates(test.pins, impressions.pins, all_ids, rng, ratio)
        tiebreak = rng.permutation(candidates.size)
        cand_vecs = data.pins.matrix(candidates)
        fitter = _Fitter(data.pins, train, data.batch_starts[b] - 1, seed, user, b)
        out = {}
        for spec in specs:
            emb = fitter.embed(spec)
            ranks = rank_positions(max_cosine(emb.vectors[top_rows(emb, spec.e)], cand_vecs), tiebreak)
            out[spec.name] = {"rprec": r_precision(ranks, is_action), "rr": reciprocal_rank(ranks, is_action),
                              "n": 1}
        return out

    parts = _map(job, data.jobs(), workers)
    rows = {}
    for spec in specs:
        a = _reduce((p[spec.name] for p in parts), ("rprec", "rr", "n"))
        n = max(a["n"], 1)
        rows[spec.name] = {"r_precision": a["rprec"] / n, "reciprocal_rank": a["rr"] / n, "lists": a["n"]}
    return EvalReport("ranking", rows, baseline="last_pin", primary=("r_precision", "reciprocal_rank"))


@dataclass
class NextActionResult:
    report: EvalReport
    instances: int
    structural_violations: dict[str, int]


def next_action_task(data: EvalData, *, seed: int = 0, threshold: float = RELEVANCE_THRESHOLD,
                     max_positions: int = 30, min_prefix: int = 2, lam: float = 0.01,
                     k: int = 3, workers: int = 1) -> NextActionResult:
    """How often the best user embedding reaches cosine >= ``threshold`` with the next pin.

    For each user up to ``max_positions`` prefix lengths are sampled. The oracle
    models may look at the next pin when choosing among their embeddings,
    which amounts to taking the maximum similarity over their candidate set.
    ``kmeans_largest_centroid`` is the non-oracle pick of the biggest k-means
    cluster, so it can never beat the k-means oracle.
    """
    kmeans = f"kmeans_oracle(k={k})"
    models = {
        "last_pin": LastPin(),
        f"decay_avg(lambda={lam:g})": DecayAvg(lam),
        kmeans: KMeansCentroids(k),
        "oracle": AllPins(),
    }
    names = list(models) + ["kmeans_largest_centroid"]
    checks = ["oracle<last_pin", "kmeans_oracle<largest_centroid"]
    keys = names + checks + ["instances"]

    def job(user):
        out = dict.fromkeys(keys, 0)
        eng = data.engagements(user)
        n = len(eng)
        if n < min_prefix + 1:
            return out
        rng = make_rng(seed, 14, user)
        choices = np.arange(min_prefix - 1, n - 1)
        positions = np.sort(rng.choice(choices, size=min(max_positions, choices.size), replace=False))
        for i in positions:
            prefix = ActionLog(user, eng.records[:i + 1])
            now = prefix.records[-1].timestamp
            target = data.pins.matrix([eng.records[i + 1].pin])
            best = {}
            for name, model in models.items():
                emb = model.embed(prefix, data.pins, now, make_rng(seed, 15, user, int(i)))
                best[name] = float(max_cosine(emb.vectors, target)[0])
                if name == kmeans:
                    best["kmeans_largest_centroid"] = float(
                        max_cosine(largest_cluster_centroid(emb).vectors, target)[0])
            for name, score in best.items():
                out[name] += int(score >= threshold)
            out["oracle<last_pin"] += int(best["oracle"] < best["last_pin"] - 1e-12)
            out["kmeans_oracle<largest_centroid"] += int(best[kmeans] < best["kmeans_largest_centroid"] - 1e-12)
            out["instances"] += 1
        return out

    total = _reduce(_map(job, data.user_list(), workers), keys)
    instances = total["instances"]
    rows = {name: {"accuracy": total[name] / max(instances, 1), "instances": instances} for name in names}
    return NextActionResult(EvalReport("next-action", rows, baseline="last_pin", primary=("accuracy",)),
                            instances, {c: total[c] for c in checks})


def diversity_relevance_sweep(data: EvalData, index: AnnIndex, cache: MedoidCache | None = None, *,
                              e_values=(1, 2, 3, 4), budget: int = 400, seed: int = 0,
                              alpha: float = DEFAULT_ALPHA, workers: int = 1) -> EvalReport:
    """Retrieval relevance and diversity as the number of sampled medoids grows.

    Lifts are relative to the last-pin model on the same requests.
    """
    ward = ClusterModel("ward", "medoid", 0.01, alpha)
    specs = [ModelSpec("last_pin", LastPin())] + [ModelSpec(f"multi(e={e})", ward, e) for e in e_values]
    base = retrieval_task(specs, data, index, cache, budget=budget, seed=seed, workers=workers)
    rows = {name: {"e": (0 if name == "last_pin" else int(name[len("multi(e="):-1])),
                   "relevance": r["relevance"], "diversity": r["diversity"], "recall": r["recall"]}
            for name, r in base.rows.items()}
    return EvalReport("diversity", rows, baseline="last_pin", primary=("diversity", "relevance"))
