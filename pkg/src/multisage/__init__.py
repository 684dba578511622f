"""Multi-embedding user representations: Ward clustering of recent engagements,
medoid embeddings with importance weights, and ANN candidate retrieval."""

__version__ = "0.1.0"

from .core import ActionKind, ActionLog, ActionRecord, PinStore, make_rng
from .representation import UserProfile, build_profile
from .ward import ClusterSet, MergeHistory, ward_cluster

__all__ = [
    "ActionKind", "ActionLog", "ActionRecord", "ClusterSet", "MergeHistory", "PinStore", "UserProfile",
    "__version__", "build_profile", "make_rng", "ward_cluster",
]
