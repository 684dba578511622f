"""Daily batch profiles with intra-day online updates
=====================================================

Profiles are rebuilt nightly from 90 days of history. During the day each new
engagement adjusts the serving profile cheaply; at the end of the day the
batch job reruns and its output replaces the online overlay.
"""

# %%
from multisage.core import SECONDS_PER_DAY, ActionLog
from multisage.pipeline import batch_infer, merge_logs, reconcile_daily, replay_events
from multisage.synth import WorldConfig, generate_world

world = generate_world(WorldConfig(n_users=20, n_topics=8, pins_per_topic=300, days=15, seed=4))
day = 14
start = world.day_start(day)
history = {u: lg.between(None, start) for u, lg in world.logs.items()}
today = {u: ActionLog(u, tuple(r for r in lg.between(start, start + SECONDS_PER_DAY).records
                               if r.kind.is_engagement)[:20]) for u, lg in world.logs.items()}
store = batch_infer(history, world.pins, as_of=world.date(day - 1))
print(f"{len(store)} batch profiles as of {world.date(day - 1)}")

# %% replay the day's events in time order across users
stream = sorted(((u, r) for u, lg in today.items() for r in lg.records), key=lambda x: x[1].timestamp)
state = replay_events(stream, store, world.pins)
user = max(today, key=lambda u: len(today[u]))
print(f"user {user}: batch clusters {len(store.get(user))}, online clusters {len(state.profiles[user])}")

# %% the nightly rerun equals a from-scratch batch job
fresh = reconcile_daily(store, history, today, world.pins, as_of=world.date(day), state=state)
scratch = batch_infer(merge_logs(history, today), world.pins, as_of=world.date(day))
print("reconciled store identical to scratch run:", fresh.encode() == scratch.encode())
print("online overlay cleared:", not state.profiles)
