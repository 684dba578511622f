"""Approximate nearest-neighbour retrieval over pin embeddings."""

from .cache import MedoidCache, query_by_medoid
from .index import (AnnIndex, IndexConfig, bench, build_index, exact_knn, exact_knn_batch,
                    recall_at_k)
from .refine import refine_pool

__all__ = [
    "AnnIndex", "IndexConfig", "MedoidCache", "bench", "build_index", "exact_knn", "exact_knn_batch",
    "query_by_medoid", "recall_at_k", "refine_pool",
]
