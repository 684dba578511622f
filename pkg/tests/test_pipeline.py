import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisage.core import ActionKind, ActionLog, ActionRecord
from multisage.pipeline import (ONLINE_BUFFER, OnlineState, ProfileStore, batch_infer, day_end, merge_logs,
                                online_update, reconcile_daily, replay_events, serving_snapshot)
from multisage.representation import ProfileSource, utc_date
from multisage.synth import WorldConfig, generate_world

from conftest import DAY, make_log, make_store, unit_rows

D0 = dt.date(2024, 3, 1)
T0 = day_end(D0) + 1  # midnight starting the next day


def line_store():
    # 1-d geometry embedded in 2-d: ids 0..4 at x = -0.3, 0.1, 0.1, 0.1, 0.75
    xs = [-0.3, 0.1, 0.1, 0.1, 0.75]
    return make_store([[x, 0.0] for x in xs])


@pytest.fixture(scope="module")
def world():
    return generate_world(WorldConfig(n_users=12, n_topics=6, pins_per_topic=150, days=12, seed=3))


class TestBatch:
    def test_empty(self):
        assert len(batch_infer({}, make_store([[1.0, 0.0]]))) == 0

    def test_one_action(self):
        store = make_store([[1.0, 0.0]])
        out = batch_infer({5: make_log(5, [0], [T0])}, store)
        assert list(out.profiles) == [5]
        assert out.get(5).medoids == [0]

    def test_repeatable_bytes(self, world):
        a = batch_infer(world.logs, world.pins).encode()
        b = batch_infer(world.logs, world.pins).encode()
        assert a == b and a

    def test_threads_do_not_change_output(self, world):
        assert batch_infer(world.logs, world.pins, workers=3).encode() == batch_infer(world.logs, world.pins).encode()

    def test_missing_embeddings_are_skipped(self):
        store = make_store([[1.0, 0.0]])
        out = batch_infer({1: make_log(1, [0, 99], [T0, T0 + 5])}, store)
        assert out.skipped_actions == 1
        assert out.get(1).medoids == [0]

    def test_sorted_on_disk(self, world, tmp_path):
        store = batch_infer(world.logs, world.pins)
        store.save(tmp_path / "p.jsonl")
        users = [json.loads(line)["user"] for line in (tmp_path / "p.jsonl").read_text().splitlines()]
        assert users == sorted(users)
        assert ProfileStore.load(tmp_path / "p.jsonl").encode() == store.encode()


class TestOnline:
    def setup_method(self):
        self.pins = make_store(unit_rows([[1.0, 0.0], [1.0, 0.05], [0.0, 1.0], [-1.0, 0.0]]))
        self.store = batch_infer({1: make_log(1, [0, 1], [T0 - 100, T0 - 50])}, self.pins, alpha=1.0)

    def test_event_on_medoid_adds_exactly_one(self):
        state = OnlineState()
        medoid = self.store.get(1).medoids[0]
        before = self.store.get(1).summaries[0].importance
        out = online_update(state, self.store, 1, ActionRecord(T0 + 10, medoid), self.pins)
        assert len(out) == len(self.store.get(1))
        assert out.summaries[0].importance == before + 1.0
        assert out.version.source is ProfileSource.ONLINE

    def test_far_event_opens_cluster(self):
        state = OnlineState()
        out = online_update(state, self.store, 1, ActionRecord(T0 + 10, 3), self.pins, alpha=1.0)
        assert len(out) == len(self.store.get(1)) + 1
        assert 3 in out.medoids

    def test_batch_profile_untouched(self):
        state = OnlineState()
        before = self.store.encode()
        online_update(state, self.store, 1, ActionRecord(T0 + 10, 3), self.pins)
        assert self.store.encode() == before
        assert serving_snapshot(self.store, state)[1] is state.profiles[1]

    def test_unknown_pin_and_impressions_ignored(self):
        state = OnlineState()
        out = online_update(state, self.store, 1, ActionRecord(T0 + 10, 77), self.pins)
        assert state.ignored_events == 1 and out == self.store.get(1)
        out = online_update(state, self.store, 1, ActionRecord(T0 + 11, 3, ActionKind.IMPRESSION), self.pins)
        assert out == self.store.get(1)

    def test_stale_event_is_an_error(self):
        with pytest.raises(ValueError):
            online_update(OnlineState(), self.store, 1, ActionRecord(T0 - 3 * DAY, 2), self.pins)

    def test_out_of_order_is_an_error(self):
        state = OnlineState()
        online_update(state, self.store, 1, ActionRecord(T0 + 10, 2), self.pins)
        with pytest.raises(ValueError):
            online_update(state, self.store, 1, ActionRecord(T0 + 5, 2), self.pins)

    def test_buffer_bound(self):
        state = OnlineState()
        for i in range(3 * ONLINE_BUFFER):
            online_update(state, self.store, 1, ActionRecord(T0 + i, i % 4), self.pins)
            assert len(state.buffer(1)) <= ONLINE_BUFFER
        assert len(state.buffer(1)) == ONLINE_BUFFER

    def test_new_user_gets_online_profile(self):
        state = OnlineState()
        out = online_update(state, self.store, 9, ActionRecord(T0, 2), self.pins)
        assert out.medoids == [2]


class TestReconcile:
    def test_no_online_updates_equals_batch(self, world):
        split = world.day_start(8)
        history = {u: lg.between(None, split) for u, lg in world.logs.items()}
        day = {u: lg.between(split, split + DAY) for u, lg in world.logs.items()}
        store = batch_infer(history, world.pins)
        merged = reconcile_daily(store, history, day, world.pins)
        plain = batch_infer(merge_logs(history, day), world.pins, as_of=world.date(8))
        assert merged.encode() == plain.encode()

    def test_idempotent(self, world):
        split = world.day_start(8)
        history = {u: lg.between(None, split) for u, lg in world.logs.items()}
        day = {u: lg.between(split, split + DAY) for u, lg in world.logs.items()}
        store = batch_infer(history, world.pins)
        once = reconcile_daily(store, history, day, world.pins)
        twice = reconcile_daily(once, history, day, world.pins)
        assert once.encode() == twice.encode()

    def test_spurious_online_singleton_is_merged(self):
        pins = line_store()
        store = ProfileStore()
        events = [(1, ActionRecord(T0 + i, p)) for i, p in enumerate([0, 1, 2, 3, 4])]
        state = replay_events(events, store, pins, alpha=1.0)
        assert len(state.profiles[1]) == 2 and 4 in state.profiles[1].medoids
        day = {1: ActionLog(1, tuple(r for _, r in events))}
        fresh = reconcile_daily(store, {}, day, pins, alpha=1.0, state=state)
        assert len(fresh.get(1)) == 1 and fresh.get(1).summaries[0].member_count == 5
        assert not state.profiles and not state.buffers

    def test_twenty_events_on_new_topic(self, rng):
        base = np.vstack([[1.0, 0.0, 0.0] + rng.normal(size=(10, 3)) * 0.01,
                          [0.0, 1.0, 0.0] + rng.normal(size=(20, 3)) * 0.01])
        pins = make_store(unit_rows(base))
        history = {1: make_log(1, range(10), T0 - DAY + np.arange(10) * 60)}
        store = batch_infer(history, pins)
        events = [(1, ActionRecord(T0 + 60 * i, 10 + i)) for i in range(20)]
        state = replay_events(events, store, pins)
        fresh = reconcile_daily(store, history, {1: ActionLog(1, tuple(r for _, r in events))}, pins)
        assert len(state.profiles[1]) == len(fresh.get(1)) == 2

    def test_serving_prefers_online(self):
        pins = line_store()
        store = batch_infer({1: make_log(1, [0], [T0 - 10])}, pins)
        state = OnlineState()
        assert state.serving_profile(store, 1) is store.get(1)
        online_update(state, store, 1, ActionRecord(T0 + 1, 4), pins)
        assert state.serving_profile(store, 1) is state.profiles[1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 20), st.data())
def test_convergence_any_interleaving(seed, n_events, data):
    rng = np.random.default_rng(seed)
    pins = make_store(unit_rows(rng.normal(size=(40, 4))))
    users = [1, 2, 3]
    history = {u: make_log(u, rng.integers(0, 40, 15), np.sort(rng.integers(T0 - 20 * DAY, T0, 15)))
               for u in users}
    store = batch_infer(history, pins)
    day_records = {u: sorted(ActionRecord(int(T0 + rng.integers(0, DAY)), int(rng.integers(0, 40)))
                             for _ in range(n_events)) for u in users}
    stream = []
    cursors = {u: 0 for u in users}
    while any(cursors[u] < n_events for u in users):
        live = [u for u in users if cursors[u] < n_events]
        u = data.draw(st.sampled_from(live))
        stream.append((u, day_records[u][cursors[u]]))
        cursors[u] += 1
    state = replay_events(stream, store, pins)
    day = {u: ActionLog(u, tuple(day_records[u])) for u in users}
    fresh = reconcile_daily(store, history, day, pins, state=state)
    scratch = batch_infer(merge_logs(history, day), pins, as_of=utc_date(max(r.timestamp for _, r in stream)))
    assert fresh.encode() == scratch.encode()
