"""Ward profiles on a synthetic user
===================================

One user's engagements are clustered with the nearest-neighbour chain, each
cluster is summarised by its medoid and a time-decayed importance, and the
clusters are compared with the topics that generated the actions.
"""

# %%
import numpy as np

from multisage.representation import build_profile
from multisage.synth import WorldConfig, cluster_purity, generate_world, profile_purity
from multisage.ward import ward_cluster

world = generate_world(WorldConfig(n_users=50, seed=0))
user = max(world.interests, key=lambda u: len(world.interests[u]))
log = world.logs[user].engagements()
print(f"user {user}: {len(log)} engagements, generated with topics {sorted(world.interests[user])}")

# %% the dendrogram and its flat cut
points = world.pins.matrix(log.pins)
history, clusters = ward_cluster(points, alpha=1.0)
print(f"{len(history)} merges, {history.stats.pushes} stack pushes, {len(clusters)} clusters at alpha=1")
print("largest merge costs:", np.round(np.sort(history.distances)[-6:], 2))

# %% topics behind each cluster
labels = world.labels[user][[r.kind.is_engagement for r in world.logs[user].records]]
for members in sorted(clusters.clusters, key=len, reverse=True)[:8]:
    topics, counts = np.unique(labels[list(members)], return_counts=True)
    print(f"size {len(members):3d}  topics {dict(zip(topics.tolist(), counts.tolist()))}")
print("purity:", round(cluster_purity(clusters.assignment, labels), 3))

# %% the profile: medoids ordered by importance
profile = build_profile(log, world.pins, alpha=1.0, lam=0.01)
for s in profile.summaries[:8]:
    print(f"medoid {s.medoid:6d}  topic {world.pin_topic[s.medoid]:2d}  "
          f"importance {s.importance:6.2f}  members {s.member_count}")

# %% alpha trades cluster count against purity
for alpha in (0.25, 0.5, 1.0, 2.0, 4.0):
    sizes = [len(ward_cluster(world.pins.matrix(lg.engagements().pins), alpha)[1]) for lg in world.logs.values()]
    print(f"alpha {alpha:4.2f}: mean clusters {np.mean(sizes):5.1f}, purity {profile_purity(world, alpha):.3f}")
