"""Two-pronged profile serving: nightly batch inference plus intra-day online updates.

The batch job rebuilds every profile from the trailing 90-day window. During
the day, incoming engagements are folded into an online overlay without
touching the batch profiles; the next reconciliation discards the overlay and
recomputes from the full data, so the persisted state never depends on how
online events were interleaved.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import SECONDS_PER_DAY, ActionLog, ActionRecord, PinStore, squared_euclidean
from .io import encode_profiles, read_profiles, write_profiles
from .representation import (DEFAULT_ALPHA, DEFAULT_LAMBDA, WINDOW_DAYS, ClusterSummary, ProfileSource,
                             ProfileVersion, UserProfile, build_profile, utc_date)

log = logging.getLogger(__name__)

ONLINE_BUFFER = 20


def day_end(date: dt.date) -> int:
    """Last second of ``date`` (UTC) as an epoch timestamp."""
    midnight = dt.datetime(date.year, date.month, date.day, tzinfo=dt.timezone.utc)
    return int(midnight.timestamp()) + SECONDS_PER_DAY - 1


@dataclass
class ProfileStore:
    """Batch-produced profiles keyed by user id."""

    profiles: dict[int, UserProfile] = field(default_factory=dict)
    skipped_actions: int = 0

    def __len__(self) -> int:
        return len(self.profiles)

    def __contains__(self, user) -> bool:
        return user in self.profiles

    def get(self, user: int) -> UserProfile | None:
        return self.profiles.get(user)

    def encode(self) -> str:
        return encode_profiles(self.profiles)

    def save(self, path) -> None:
        write_profiles(path, self.profiles)

    @classmethod
    def load(cls, path) -> "ProfileStore":
        return cls(read_profiles(path))


def _known_only(log_: ActionLog, pins: PinStore) -> tuple[ActionLog, int]:
    kept = tuple(r for r in log_.records if r.pin in pins)
    return ActionLog(log_.user, kept), len(log_.records) - len(kept)


def batch_infer(all_logs: Mapping[int, ActionLog] | Iterable[ActionLog], pins: PinStore,
                alpha: float = DEFAULT_ALPHA, lam: float = DEFAULT_LAMBDA,
                as_of: dt.date | None = None, *, window_days: int = WINDOW_DAYS,
                workers: int = 1) -> ProfileStore:
    """Build a profile for every user with at least one engagement in the window.

    Actions whose pin has no embedding are dropped and counted in
    ``ProfileStore.skipped_actions``.
    """
    logs = list(all_logs.values()) if isinstance(all_logs, Mapping) else list(all_logs)
    if as_of is None:
        last = max((lg.records[-1].timestamp for lg in logs if len(lg)), default=0)
        as_of = utc_date(last)
    now = day_end(as_of)

    skipped = 0
    jobs = []
    for lg in sorted(logs, key=lambda lg: lg.user):
        lg, dropped = _known_only(lg, pins)
        skipped += dropped
        jobs.append(lg)
    if skipped:
        log.warning("skipped %d actions whose pin has no embedding", skipped)

    def run(lg: ActionLog) -> UserProfile:
        return build_profile(lg, pins, alpha, lam, now, window_days=window_days)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(run, jobs))
    else:
        built = [run(lg) for lg in jobs]
    profiles = {p.user: p for p in built if len(p)}
    return ProfileStore(profiles, skipped)


@dataclass
class OnlineState:
    """Intra-day overlay: recent-event buffers and the online-sourced profiles."""

    buffers: dict[int, deque] = field(default_factory=dict)
    profiles: dict[int, UserProfile] = field(default_factory=dict)
    ignored_events: int = 0

    def buffer(self, user: int) -> deque:
        return self.buffers.setdefault(user, deque(maxlen=ONLINE_BUFFER))

    def clear(self) -> None:
        self.buffers.clear()
        self.profiles.clear()

    def serving_profile(self, store: ProfileStore, user: int) -> UserProfile | None:
        """Online profile when one exists for today, else the batch profile."""
        return self.profiles.get(user) or store.get(user)


def online_update(state: OnlineState, store: ProfileStore, user: int, event: ActionRecord,
                  pins: PinStore, alpha: float = DEFAULT_ALPHA,
                  lam: float = DEFAULT_LAMBDA) -> UserProfile | None:
    """Fold one engagement into the user's online profile.

    The pin joins the cluster whose medoid is nearest when that squared
    distance is at most ``alpha`` (importance +1, since the event is the
    present); otherwise it opens a singleton cluster. Medoids never move
    online. Impressions and unknown pins leave the profile unchanged.
    """
    current = state.serving_profile(store, user)
    if not event.kind.is_engagement:
        return current
    if event.pin not in pins:
        state.ignored_events += 1
        log.warning("ignoring event for unknown pin %d", event.pin)
        return current
    base = store.get(user)
    if base is not None and utc_date(event.timestamp) < base.version.date:
        raise ValueError("online event predates the batch profile it would extend")

    buf = state.buffer(user)
    if buf and event.timestamp < buf[-1][0].timestamp:
        raise ValueError("online events for a user must arrive in timestamp order")
    vec = pins.get(event.pin)
    buf.append((event, vec))

    summaries = list(current.summaries) if current is not None else []
    best, best_d = None, math.inf
    for pos, s in enumerate(summaries):
        d = squared_euclidean(pins.get(s.medoid), vec)
        if d < best_d or (d == best_d and s.medoid < summaries[best].medoid):
            best, best_d = pos, d
    # an event happens "now", so its decay weight exp(-lam * 0) is exactly one
    if best is not None and best_d <= alpha:
        s = summaries[best]
        summaries[best] = ClusterSummary(s.medoid, s.importance + 1.0, s.member_count + 1)
    else:
        summaries.append(ClusterSummary(int(event.pin), 1.0, 1))
    updated = UserProfile(user, tuple(summaries),
                          ProfileVersion(utc_date(event.timestamp), ProfileSource.ONLINE))
    state.profiles[user] = updated
    return updated


def merge_logs(*sources: Mapping[int, ActionLog]) -> dict[int, ActionLog]:
    """Union of per-user logs; records with equal timestamps keep source order."""
    merged: dict[int, list[ActionRecord]] = {}
    for src in sources:
        for user, lg in src.items():
            merged.setdefault(user, []).extend(lg.records)
    return {u: ActionLog.from_records(u, recs) for u, recs in sorted(merged.items())}


def reconcile_daily(store: ProfileStore, history: Mapping[int, ActionLog],
                    day_logs: Mapping[int, ActionLog], pins: PinStore,
                    alpha: float = DEFAULT_ALPHA, lam: float = DEFAULT_LAMBDA,
                    as_of: dt.date | None = None, *, state: OnlineState | None = None,
                    window_days: int = WINDOW_DAYS, workers: int = 1) -> ProfileStore:
    """End-of-day batch rerun over history plus the day's actions.

    The returned store replaces ``store`` wholesale; any online overlay in
    ``state`` is cleared.
    """
    logs = merge_logs(history, day_logs)
    if as_of is None:
        stamps = [lg.records[-1].timestamp for lg in day_logs.values() if len(lg)]
        as_of = utc_date(max(stamps)) if stamps else None
    fresh = batch_infer(logs, pins, alpha, lam, as_of, window_days=window_days, workers=workers)
    if state is not None:
        state.clear()
    return fresh


def replay_events(events: Iterable[tuple[int, ActionRecord]], store: ProfileStore, pins: PinStore,
                  alpha: float = DEFAULT_ALPHA, lam: float = DEFAULT_LAMBDA,
                  state: OnlineState | None = None) -> OnlineState:
    """Drive :func:`online_update` over a time-ordered event stream."""
    state = state if state is not None else OnlineState()
    for user, record in events:
        online_update(state, store, user, record, pins, alpha, lam)
    return state


def serving_snapshot(store: ProfileStore, state: OnlineState) -> dict[int, UserProfile]:
    """Profiles as they would be served right now (online overlay wins)."""
    out = dict(store.profiles)
    out.update(state.profiles)
    return out


__all__ = [
    "ONLINE_BUFFER", "OnlineState", "ProfileStore", "batch_infer", "day_end", "merge_logs",
    "online_update", "reconcile_daily", "replay_events", "serving_snapshot",
]
