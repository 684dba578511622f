"""Nearest-neighbour index, candidate refinement and the medoid cache
=====================================================================
"""

# %%
import time

import numpy as np

from multisage.ann import IndexConfig, MedoidCache, bench, build_index, query_by_medoid, refine_pool
from multisage.core import PinStore, make_rng
from multisage.synth import WorldConfig, generate_world

world = generate_world(WorldConfig(pins_per_topic=1500, n_users=0))
t0 = time.perf_counter()
index = build_index(world.pins, world.pins.ids, IndexConfig(max_neighbors=16, build_beam=200))
print(f"indexed {len(index)} pins in {time.perf_counter() - t0:.1f}s, {index.max_level + 1} layers")

# %% recall against exact search as the query beam widens
rng = make_rng(0, 1)
queries = world.pins.vectors[rng.choice(len(world.pins), 1000, replace=False)].astype(np.float64)
queries += rng.normal(scale=0.02, size=queries.shape)
print("beam  recall@10  mean us")
for beam, recall, micros in bench(index, queries, 10, beams=(10, 20, 50, 100, 200)):
    print(f"{beam:4d}  {recall:9.4f}  {micros:7.1f}")

# %% users that share medoids share one traversal
cache = MedoidCache()
medoids = rng.choice(world.pins.ids, 300)
before = index.traversals
for m in np.concatenate([medoids, medoids]):
    query_by_medoid(index, cache, int(m), 100)
print(f"600 lookups, {index.traversals - before} traversals, hit rate {cache.hit_rate:.2f}")

# %% refinement drops near-duplicates and low-quality pins before indexing
# pins of one synthetic topic sit about 0.14 apart (noise 0.1 each), i.e. at
# cosine close to 0.99, so the default threshold collapses whole topics
for threshold in (0.99, 0.999):
    kept = refine_pool(world.pins, IndexConfig(dedup_threshold=threshold))
    print(f"generator pins, threshold {threshold}: kept {kept.size} of {len(world.pins)}")

# %% on a spread-out pool only planted copies are removed
base = rng.normal(size=(20000, 64))
dups = rng.choice(len(base), 200, replace=False)
store = PinStore(np.arange(20200), np.vstack([base, base[dups]]), rng.beta(5.0, 1.5, size=20200))
for floor in (0.0, 0.5):
    kept = refine_pool(store, IndexConfig(quality_floor=floor))
    print(f"quality floor {floor}: kept {kept.size} of {len(store)}, planted copies left "
          f"{np.isin(np.arange(20000, 20200), kept).sum()}")
