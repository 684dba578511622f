"""Offline evaluation: baselines, metrics and the task harness."""

from .baselines import (AllPins, ClusterModel, DecayAvg, KMeansCentroids, LastPin, UserEmbedding,
                        complete_linkage_cluster, decay_avg_embedding, kmeans_cluster,
                        largest_cluster_centroid)
from .metrics import (RELEVANCE_THRESHOLD, lift, max_cosine, r_precision, rank_positions, recall_hits,
                      reciprocal_rank, relevant_hits)
from .report import EvalReport
from .tasks import (ChronologyError, EvalData, ModelSpec, NextActionResult, core_models,
                    diversity_relevance_sweep, next_action_task, ranking_candidates, ranking_task, retrieval_task, standard_models,
                    top_rows)

__all__ = [
    "AllPins", "ChronologyError", "ClusterModel", "DecayAvg", "EvalData", "EvalReport", "KMeansCentroids",
    "LastPin",
    "ModelSpec", "NextActionResult", "RELEVANCE_THRESHOLD", "UserEmbedding", "complete_linkage_cluster",
    "core_models", "decay_avg_embedding", "diversity_relevance_sweep", "kmeans_cluster",
    "largest_cluster_centroid", "lift", "max_cosine", "next_action_task", "r_precision", "rank_positions",
    "ranking_candidates", "ranking_task", "recall_hits", "reciprocal_rank", "relevant_hits", "retrieval_task",
    "standard_models", "top_rows",
]
