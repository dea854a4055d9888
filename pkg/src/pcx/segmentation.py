"""Unsupervised scene over-segmentation.

A scene is cut into geometrically coherent clusters in three steps: a
k-NN affinity graph whose edge weights mix normal agreement with optional
per-point feature agreement, a greedy graph cut that merges components
while their internal variation supports it, and a cleanup pass folding
undersized clusters into their most compatible neighbour.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MissingFeatures
from .geometry import (
    Obb,
    PointCloud,
    estimate_normals,
    knn_edges,
    min_circumscribed_box,
)

DEFAULT_THRESHOLD = 1.5
DEFAULT_MIN_CLUSTER_POINTS = 300


@dataclass(frozen=True)
class AffinityGraph:
    """Undirected weighted graph over the points of one scene.

    edges is an (E, 2) int array with i < j, lexicographically sorted and
    unique; weights aligns with edges. Lower weight means more alike.
    alpha records how strongly feature agreement was blended in, which
    bounds the weights to [1 - alpha, 3 + alpha].
    """

    n_points: int
    edges: np.ndarray
    weights: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        if self.edges.shape != (len(self.weights), 2):
            raise ValueError("edges and weights disagree on edge count")
        if len(self.weights):
            lo, hi = 1.0 - self.alpha, 3.0 + self.alpha
            if self.weights.min() < lo - 1e-9 or self.weights.max() > hi + 1e-9:
                raise ValueError("edge weight outside the cosine-implied range")


@dataclass
class SceneSegmentation:
    """Clustering of one scene plus per-cluster summaries.

    cluster_of maps each point to a cluster id in [0, num_clusters); ids
    are assigned by order of first appearance along the point axis.
    centroids[c] is the mean position and boxes[c] the minimum
    circumscribed box of cluster c.
    """

    cluster_of: np.ndarray
    centroids: np.ndarray
    boxes: list = field(default_factory=list)

    @property
    def num_clusters(self) -> int:
        return len(self.centroids)

    def points_in(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.num_clusters)


def _feature_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity per row pair; zero-norm rows contribute 0."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    bad = (na < 1e-12) | (nb < 1e-12)
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} edge(s) touch zero-norm feature rows; "
            "their feature cosine is taken as 0",
            RuntimeWarning,
            stacklevel=3,
        )
    denom = np.where(bad, 1.0, na * nb)
    cos = np.einsum("ij,ij->i", a, b) / denom
    cos[bad] = 0.0
    return cos


def build_affinity_graph(
    cloud: PointCloud,
    features: Optional[np.ndarray] = None,
    alpha: float = 0.0,
    knn_k: int = 16,
    radius_cap: float = 0.5,
) -> AffinityGraph:
    """Edge weights 2 - (cos(normals) + alpha * cos(features)).

    The graph connects each point to its knn_k nearest neighbours within
    radius_cap. Normal agreement always contributes; feature agreement is
    blended in with weight alpha when alpha > 0, in which case ``features``
    (one row per point) is required. Weights land in [0, 2] when alpha = 0
    and in [1 - alpha, 3 + alpha] otherwise.
    """
    if cloud.normals is None:
        raise MissingFeatures("cloud has no normals; run estimate_normals first")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha > 0 and features is None:
        raise MissingFeatures("alpha > 0 requires per-point features")
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if len(features) != len(cloud):
            raise MissingFeatures("features must have one row per point")

    edges = knn_edges(cloud.positions, k=knn_k, radius_cap=radius_cap)
    if len(edges) == 0:
        return AffinityGraph(n_points=len(cloud), edges=edges,
                             weights=np.empty(0, dtype=np.float64), alpha=alpha)
    i, j = edges[:, 0], edges[:, 1]
    ni, nj = cloud.normals[i], cloud.normals[j]
    sim = np.einsum("ij,ij->i", ni, nj) / (
        np.linalg.norm(ni, axis=1) * np.linalg.norm(nj, axis=1))
    if alpha > 0:
        sim = sim + alpha * _feature_cosine(features[i], features[j])
    weights = 2.0 - sim
    return AffinityGraph(n_points=len(cloud), edges=edges, weights=weights,
                         alpha=alpha if alpha > 0 else 0.0)


class _UnionFind:
    __slots__ = ("parent", "size", "internal")

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.internal = np.zeros(n, dtype=np.float64)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int, weight: float) -> None:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = weight  # edges arrive in ascending order


def _relabel_first_seen(raw: np.ndarray) -> np.ndarray:
    """Map arbitrary ids to 0..M-1 in order of first appearance."""
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return order[inverse].astype(np.int32)


def graph_cut_segment(graph: AffinityGraph, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Greedy agglomeration over edges in ascending weight order.

    Components a and b joined by an edge of weight w merge iff
    w <= min(Int(a) + t/|a|, Int(b) + t/|b|), where t is the threshold and
    Int is the largest weight merged into the component so far (0 for
    singletons). Equal weights are processed in (i, j) order, so the
    result is deterministic. Isolated points come out as singleton
    clusters. Returns the per-point cluster id array.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    uf = _UnionFind(graph.n_points)
    order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights))
    edges = graph.edges[order]
    weights = graph.weights[order]
    for (i, j), w in zip(edges, weights):
        a, b = uf.find(i), uf.find(j)
        if a == b:
            continue
        if w <= uf.internal[a] + threshold / uf.size[a] and \
           w <= uf.internal[b] + threshold / uf.size[b]:
            uf.union(a, b, w)
    roots = np.fromiter((uf.find(i) for i in range(graph.n_points)),
                        dtype=np.int64, count=graph.n_points)
    return _relabel_first_seen(roots)


def merge_small_clusters(
    labels: np.ndarray,
    graph: AffinityGraph,
    min_points: int = DEFAULT_MIN_CLUSTER_POINTS,
) -> np.ndarray:
    """Fold clusters below ``min_points`` into their closest neighbour.

    Repeatedly takes the smallest remaining undersized cluster (ties by
    lower id) and merges it into the adjacent cluster whose connecting
    edges have the lowest mean weight (ties again by lower id). Undersized
    clusters with no graph neighbour are left alone. Returns compacted ids.
    """
    labels = np.asarray(labels, dtype=np.int64).copy()
    if labels.shape != (graph.n_points,):
        raise ValueError("labels must assign every graph node a cluster")
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    exhausted = set()  # undersized clusters with no neighbour to join
    while True:
        sizes = np.bincount(labels)
        small = [c for c in np.flatnonzero((sizes > 0) & (sizes < min_points))
                 if c not in exhausted]
        if not small:
            break
        small.sort(key=lambda c: (sizes[c], c))
        c = small[0]
        ci, cj = labels[i], labels[j]
        touching = (ci != cj) & ((ci == c) | (cj == c))
        if not np.any(touching):
            exhausted.add(c)
            continue
        other = np.where(ci[touching] == c, cj[touching], ci[touching])
        w = graph.weights[touching]
        totals: dict[int, tuple[float, int]] = {}
        for o, wt in zip(other.tolist(), w.tolist()):
            s, n = totals.get(o, (0.0, 0))
            totals[o] = (s + wt, n + 1)
        target = min(totals, key=lambda o: (totals[o][0] / totals[o][1], o))
        labels[labels == c] = target
    return _relabel_first_seen(labels)


def segmentation_from_clusters(cloud: PointCloud, cluster_of: np.ndarray) -> SceneSegmentation:
    """Summaries (centroid and box per cluster) for an existing labeling."""
    cluster_of = np.asarray(cluster_of, dtype=np.int32)
    if cluster_of.shape != (len(cloud),):
        raise ValueError("cluster_of must assign every point a cluster")
    num = int(cluster_of.max()) + 1
    centroids = np.empty((num, 3), dtype=np.float64)
    boxes = []
    for c in range(num):
        pts = cloud.positions[cluster_of == c]
        if len(pts) == 0:
            raise ValueError(f"cluster {c} is empty; ids must be consecutive")
        centroids[c] = pts.mean(axis=0)
        boxes.append(min_circumscribed_box(pts))
    return SceneSegmentation(cluster_of=cluster_of, centroids=centroids, boxes=boxes)


def segment_scene(
    cloud: PointCloud,
    features: Optional[np.ndarray] = None,
    alpha: float = 0.0,
    threshold: float = DEFAULT_THRESHOLD,
    knn_k: int = 16,
    radius_cap: float = 0.5,
    min_points: int = DEFAULT_MIN_CLUSTER_POINTS,
) -> SceneSegmentation:
    """Full over-segmentation of one scene.

    Estimates normals when the cloud has none, builds the affinity graph,
    cuts it, merges undersized clusters, and summarizes each cluster with
    its centroid and minimum circumscribed box.
    """
    if cloud.normals is None:
        normals, _ = estimate_normals(cloud, k=knn_k)
        cloud = PointCloud(
            positions=cloud.positions,
            colors=cloud.colors,
            normals=normals,
            labels=cloud.labels,
            clusters=cloud.clusters,
            scene_id=cloud.scene_id,
        )
    graph = build_affinity_graph(cloud, features=features, alpha=alpha,
                                 knn_k=knn_k, radius_cap=radius_cap)
    raw = graph_cut_segment(graph, threshold=threshold)
    cluster_of = merge_small_clusters(raw, graph, min_points=min_points)
    return segmentation_from_clusters(cloud, cluster_of)
