"""Offline comparison of user representations
============================================

Next-action prediction, candidate retrieval and impression ranking on a
synthetic corpus, with single-embedding baselines next to the multi-embedding
profile. The corpus is smaller than the default one so the script runs in
about a minute; the acceptance suite uses the full 500-user corpus.
"""

# %%
from multisage.ann import IndexConfig, MedoidCache, build_index
from multisage.evaluation import (EvalData, core_models, diversity_relevance_sweep, next_action_task, ranking_task,
                                  retrieval_task)
from multisage.synth import WorldConfig, generate_world

world = generate_world(WorldConfig(n_users=150, seed=0))
data = EvalData.from_world(world)
print(f"{len(data.user_list())} users, {len(data.jobs())} evaluation jobs, {len(world.pins)} pins")

# %% which embedding is closest to the next pin?
result = next_action_task(data)
print(result.report.to_markdown())
print("structural violations:", result.structural_violations)

# %% retrieval: candidates fetched around each representation
index = build_index(world.pins, world.pins.ids, IndexConfig())
print(retrieval_task(core_models(), data, index, MedoidCache()).to_markdown())

# %% ranking held-out engagements among sampled impressions
print(ranking_task(core_models(), data).to_markdown())

# %% more sampled medoids: diversity grows, relevance gains shrink
multi = data.restricted_to_multi_interest(3)
print(diversity_relevance_sweep(multi, index, MedoidCache()).to_markdown())
