"""Knowledge selection: flat and hierarchical ranking, the bi-encoder index and its training."""

from .index import BiEncoderIndex, IndexBuildError, build_index, query_index
from .losses import LossConfig, LossKind, nll_loss, ntxent_loss, softmax_cross_entropy, triplet_loss
from .negatives import NegativeSample, sample_negatives_cross, sample_negatives_hierarchical
from .ranking import (
    TOP_K,
    HierarchicalConfig,
    HierarchicalScorers,
    HierarchyVariant,
    SelectionResult,
    rank_flat,
    select_hierarchical_beam,
    select_hierarchical_greedy,
    surviving_entities,
    top_k,
)
from .training import LOSS_METRIC, OptimConfig, TrainingLog, train_biencoder

__all__ = [
    "BiEncoderIndex",
    "HierarchicalConfig",
    "HierarchicalScorers",
    "HierarchyVariant",
    "IndexBuildError",
    "LOSS_METRIC",
    "LossConfig",
    "LossKind",
    "NegativeSample",
    "OptimConfig",
    "SelectionResult",
    "TOP_K",
    "TrainingLog",
    "build_index",
    "nll_loss",
    "ntxent_loss",
    "query_index",
    "rank_flat",
    "sample_negatives_cross",
    "sample_negatives_hierarchical",
    "select_hierarchical_beam",
    "select_hierarchical_greedy",
    "softmax_cross_entropy",
    "surviving_entities",
    "top_k",
    "train_biencoder",
    "triplet_loss",
]
