"""Object-exchange augmentation pipeline for indoor point clouds.

The package splits into geometry primitives, graph over-segmentation,
cross-scene object exchange, reference loss numerics, dataset analytics,
and the file formats plus CLI that tie them together.
"""

from ._version import VERSION as __version__
from .analysis import (
    AffinityMap,
    SegMetrics,
    cooccurrence_affinity,
    mix3d_merge,
    overlap_statistics,
    robustness_ratio,
    seg_metrics,
)
from .config import PipelineConfig, config_hash
from .exchange import (
    ExchangePlan,
    RelocationMask,
    box_similarity_matrix,
    eligible_clusters,
    exchange_objects,
    greedy_match,
    make_corrupted_dataset,
    plan_exchange,
    select_exchange_set,
)
from .geometry import (
    AugmentationConfig,
    Obb,
    PointCloud,
    augment_view,
    estimate_normals,
    farthest_point_sampling,
    knn_edges,
    min_circumscribed_box,
)
from .objective import (
    FeatureBundle,
    LossWeights,
    aux_loss,
    context_loss,
    object_pattern_loss,
    pair_term,
    pool_cluster_features,
    total_loss,
)
from .segmentation import (
    AffinityGraph,
    SceneSegmentation,
    build_affinity_graph,
    graph_cut_segment,
    merge_small_clusters,
    segment_scene,
    segmentation_from_clusters,
)

__all__ = [
    "__version__",
    "AffinityGraph",
    "AffinityMap",
    "AugmentationConfig",
    "ExchangePlan",
    "FeatureBundle",
    "LossWeights",
    "Obb",
    "PipelineConfig",
    "PointCloud",
    "RelocationMask",
    "SceneSegmentation",
    "SegMetrics",
    "augment_view",
    "aux_loss",
    "box_similarity_matrix",
    "build_affinity_graph",
    "config_hash",
    "context_loss",
    "cooccurrence_affinity",
    "eligible_clusters",
    "estimate_normals",
    "exchange_objects",
    "farthest_point_sampling",
    "graph_cut_segment",
    "greedy_match",
    "knn_edges",
    "make_corrupted_dataset",
    "merge_small_clusters",
    "min_circumscribed_box",
    "mix3d_merge",
    "object_pattern_loss",
    "overlap_statistics",
    "pair_term",
    "plan_exchange",
    "pool_cluster_features",
    "robustness_ratio",
    "seg_metrics",
    "segment_scene",
    "segmentation_from_clusters",
    "select_exchange_set",
    "total_loss",
]
