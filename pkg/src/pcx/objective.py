"""Reference numerics for the training objective.

Given per-point features for two views of a mixed scene, the objective
pulls each cluster's pooled feature toward its counterpart in the other
view (separately for exchanged and untouched clusters) and scores an
auxiliary per-point classifier that predicts which points were imported.
No network code lives here; everything operates on supplied arrays, and
summation order is fixed so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCluster, ShapeMismatch, ZeroVector

_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Blend weights: lambda_ scales the object term, gamma the auxiliary."""

    lambda_: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.lambda_ < 0 or self.gamma < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class FeatureBundle:
    """Per-point features of one view plus their cluster-level pooling.

    cluster_features[i] is the componentwise max over the rows of
    point_features belonging to cluster i; the constructor checks this so
    a bundle can never drift out of sync with its own pooling.
    """

    point_features: np.ndarray
    cluster_of: np.ndarray
    cluster_features: np.ndarray

    def __post_init__(self):
        self.point_features = np.asarray(self.point_features, dtype=np.float64)
        self.cluster_of = np.asarray(self.cluster_of, dtype=np.int64)
        self.cluster_features = np.asarray(self.cluster_features, dtype=np.float64)
        n, d = self.point_features.shape
        if self.cluster_of.shape != (n,):
            raise ShapeMismatch("cluster_of must assign every feature row a cluster")
        m = self.cluster_features.shape[0]
        if self.cluster_features.shape != (m, d) or m < 1 or n < m:
            raise ShapeMismatch("cluster_features must be an (M, d) matrix, M <= N")
        expected = pool_cluster_features(self.point_features, self.cluster_of)
        if expected.shape != self.cluster_features.shape or \
                not np.array_equal(expected, self.cluster_features):
            raise ValueError("cluster_features do not match max-pooled point features")

    @property
    def d(self) -> int:
        return self.point_features.shape[1]

    @classmethod
    def from_points(cls, point_features: np.ndarray, cluster_of: np.ndarray) -> "FeatureBundle":
        pooled = pool_cluster_features(point_features, cluster_of)
        return cls(point_features=point_features, cluster_of=cluster_of,
                   cluster_features=pooled)

    def members(self, cluster: int) -> np.ndarray:
        return self.point_features[self.cluster_of == cluster]


def pool_cluster_features(point_features: np.ndarray, cluster_of: np.ndarray) -> np.ndarray:
    """Componentwise max over each cluster's feature rows."""
    feats = np.asarray(point_features, dtype=np.float64)
    ids = np.asarray(cluster_of, dtype=np.int64)
    if feats.ndim != 2 or ids.shape != (len(feats),):
        raise ShapeMismatch("point_features must be (N, d) with matching cluster_of")
    m = int(ids.max()) + 1
    counts = np.bincount(ids, minlength=m)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise EmptyCluster(f"cluster {empty} has no member points")
    pooled = np.full((m, feats.shape[1]), -np.inf)
    np.maximum.at(pooled, ids, feats)
    return pooled


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < _NORM_FLOOR:
        raise ZeroVector(f"cannot normalize zero-length {what}")
    return v / norm


def pair_term(
    cluster_feat_view1: np.ndarray,
    cluster_feat_view2: np.ndarray,
    member_point_feats_view1: np.ndarray,
) -> float:
    """Squared unit-vector distances tying a cluster to its other view.

    With u the view-1 cluster feature, v the view-2 cluster feature, and
    p_j the view-1 member point features, returns

        ||u^ - v^||^2 + (1/n) sum_j ||p_j^ - v^||^2

    where ^ marks L2 normalization. Each summand is at most 4, so the
    result lies in [0, 8].
    """
    u = _unit(np.asarray(cluster_feat_view1, dtype=np.float64), "cluster feature")
    v = _unit(np.asarray(cluster_feat_view2, dtype=np.float64), "cluster feature")
    members = np.asarray(member_point_feats_view1, dtype=np.float64)
    if members.ndim != 2 or members.shape[1] != len(u):
        raise ShapeMismatch("member features must be (n, d) matching the cluster feature")
    if len(members) == 0:
        raise EmptyCluster("pair_term needs at least one member point")
    norms = np.linalg.norm(members, axis=1)
    if np.any(norms < _NORM_FLOOR):
        raise ZeroVector("cannot normalize zero-length point feature")
    hatted = members / norms[:, None]
    cluster_part = float(np.sum((u - v) ** 2))
    point_part = float(np.mean(np.sum((hatted - v) ** 2, axis=1)))
    return cluster_part + point_part


# One direction of a symmetrized loss: the bundle whose clusters (and
# member points) are being pulled, the bundle supplying the targets, and
# the (cluster_in_first, cluster_in_second) id pairs to compare.
Direction = tuple[FeatureBundle, FeatureBundle, Sequence[tuple[int, int]]]


def _directional_mean(direction: Direction) -> float:
    bundle, target, id_pairs = direction
    if len(id_pairs) == 0:
        return 0.0
    terms = [
        pair_term(
            bundle.cluster_features[own],
            target.cluster_features[other],
            bundle.members(own),
        )
        for own, other in id_pairs
    ]
    return float(np.mean(terms))


def object_pattern_loss(exchanged_pairs: Iterable[Direction]) -> float:
    """Mean pair_term over exchanged clusters, summed across directions.

    Each direction contributes the mean over its cluster pairs; a
    direction with no exchanged clusters contributes 0.
    """
    return float(sum(_directional_mean(d) for d in exchanged_pairs))


def context_loss(remaining_pairs: Iterable[Direction]) -> float:
    """Same contract as object_pattern_loss, over the untouched clusters."""
    return float(sum(_directional_mean(d) for d in remaining_pairs))


def aux_loss(logits: np.ndarray, mask: np.ndarray) -> float:
    """Mean cross entropy of imported-point predictions.

    logits is (N, 2): column 0 scores "native", column 1 "imported";
    mask is the boolean ground truth (true = imported).
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeMismatch("logits must be an (N, 2) matrix")
    if logits.shape[0] != mask.shape[0] or mask.ndim != 1:
        raise ShapeMismatch("mask length must match logits rows")
    if len(mask) == 0:
        raise ShapeMismatch("need at least one point")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    true_logit = np.where(mask, shifted[:, 1], shifted[:, 0])
    return float(np.mean(log_norm - true_logit))


def total_loss(l_context: float, l_op: float, l_aux: float,
               w: LossWeights = LossWeights()) -> float:
    """l_context + lambda_ * l_op + gamma * l_aux."""
    parts = (l_context, l_op, l_aux)
    if not all(np.isfinite(p) and p >= 0 for p in parts):
        raise ValueError("loss components must be finite and non-negative")
    return float(l_context + w.lambda_ * l_op + w.gamma * l_aux)
