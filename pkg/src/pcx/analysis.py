"""Dataset and prediction analytics.

Class co-occurrence maps over labeled scene collections, confusion-matrix
segmentation metrics, the corrupted-over-clean robustness ratio, and box
overlap statistics that compare object exchange against naive scene
merging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DivisionByZero,
    LengthMismatch,
    NoLabels,
    NoValidPoints,
    TooFewClusters,
)
from .geometry import Obb, PointCloud
from .segmentation import SceneSegmentation

IGNORE_LABEL = 255


@dataclass(frozen=True)
class AffinityMap:
    """Symmetric class-by-class co-occurrence matrix.

    matrix[i][j] tells how often classes[i] and classes[j] appear in the
    same scene, normalized to [0, 1]; scene_count records how many scenes
    went in.
    """

    classes: np.ndarray
    matrix: np.ndarray
    scene_count: int

    def value(self, class_a: int, class_b: int) -> float:
        ia = int(np.flatnonzero(self.classes == class_a)[0])
        ib = int(np.flatnonzero(self.classes == class_b)[0])
        return float(self.matrix[ia, ib])


@dataclass(frozen=True)
class SegMetrics:
    """Per-class IoU plus the two headline numbers."""

    per_class_iou: dict
    miou: float
    acc: float


def cooccurrence_affinity(
    dataset: Sequence[PointCloud],
    classes: Optional[Sequence[int]] = None,
) -> AffinityMap:
    """How often two semantic classes share a scene.

    affinity(a, b) = N_ab / min(N_a, N_b), where N_x counts scenes with at
    least one point of class x and N_ab counts scenes containing both.
    The class axis defaults to every label observed in the dataset (the
    ignore label excluded); a caller-supplied class list may include
    classes absent everywhere, which get all-zero rows and columns.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must contain at least one scene")
    per_scene = []
    for cloud in dataset:
        if cloud.labels is None:
            raise NoLabels(f"scene {cloud.scene_id!r} has no semantic labels")
        present = np.unique(cloud.labels)
        per_scene.append(set(int(c) for c in present if c != IGNORE_LABEL))
    if classes is None:
        observed = sorted(set().union(*per_scene))
        class_arr = np.asarray(observed, dtype=np.int64)
    else:
        class_arr = np.asarray(sorted(set(int(c) for c in classes)), dtype=np.int64)

    c = len(class_arr)
    scene_count = len(per_scene)
    counts = np.zeros(c, dtype=np.int64)
    both = np.zeros((c, c), dtype=np.int64)
    index_of = {int(cls): i for i, cls in enumerate(class_arr)}
    for scene_classes in per_scene:
        idx = sorted(index_of[cls] for cls in scene_classes if cls in index_of)
        for a in idx:
            counts[a] += 1
        for pos, a in enumerate(idx):
            for b in idx[pos:]:
                both[a, b] += 1
                both[b, a] += 1
    matrix = np.zeros((c, c), dtype=np.float64)
    for a in range(c):
        for b in range(c):
            denom = min(counts[a], counts[b])
            if denom > 0:
                matrix[a, b] = both[a, b] / denom
    # both[a, a] double-counts in the loop above; the diagonal is simply
    # "does the class appear at all".
    np.fill_diagonal(matrix, (counts > 0).astype(np.float64))
    return AffinityMap(classes=class_arr, matrix=matrix, scene_count=scene_count)


def seg_metrics(pred: np.ndarray, gt: np.ndarray,
                ignore_label: int = IGNORE_LABEL) -> SegMetrics:
    """Confusion-matrix IoU over the classes present in the ground truth.

    Points whose ground-truth label equals ignore_label are dropped
    entirely. Classes that appear only in the prediction contribute false
    positives to the classes they collide with but get no IoU row of
    their own.
    """
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise LengthMismatch("pred and gt must be 1-D arrays of equal length")
    valid = gt != ignore_label
    if not np.any(valid):
        raise NoValidPoints("every point carries the ignore label")
    pred = pred[valid]
    gt = gt[valid]
    per_class = {}
    for cls in np.unique(gt):
        cls = int(cls)
        tp = int(np.sum((gt == cls) & (pred == cls)))
        fp = int(np.sum((gt != cls) & (pred == cls)))
        fn = int(np.sum((gt == cls) & (pred != cls)))
        per_class[cls] = tp / (tp + fp + fn)
    miou = float(np.mean(list(per_class.values())))
    acc = float(np.mean(pred == gt))
    return SegMetrics(per_class_iou=per_class, miou=miou, acc=acc)


def robustness_ratio(metrics_corrupted: SegMetrics, metrics_clean: SegMetrics) -> float:
    """Corrupted-set mIoU as a percentage of the clean-set mIoU."""
    if metrics_clean.miou <= 0:
        raise DivisionByZero("clean mIoU must be positive")
    return 100.0 * metrics_corrupted.miou / metrics_clean.miou


def _box_iou(a: Obb, b: Obb) -> float:
    """Volume IoU with b approximated by its bounding box in a's frame.

    Exact when the boxes share a yaw; otherwise a slight overestimate of
    b's extent, which is fine for aggregate overlap statistics.
    """
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    corners_xy = b.footprint_corners() - a.center[:2]
    u = corners_xy[:, 0] * c + corners_xy[:, 1] * s
    v = -corners_xy[:, 0] * s + corners_xy[:, 1] * c
    bz = b.center[2] - a.center[2]
    b_lo = np.array([u.min(), v.min(), bz - 0.5 * b.dims[2]])
    b_hi = np.array([u.max(), v.max(), bz + 0.5 * b.dims[2]])
    a_half = np.array([0.5 * a.dims[0], 0.5 * a.dims[1], 0.5 * a.dims[2]])
    lo = np.maximum(b_lo, -a_half)
    hi = np.minimum(b_hi, a_half)
    extent = np.maximum(hi - lo, 0.0)
    inter = float(extent.prod())
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


def overlap_statistics(seg: SceneSegmentation) -> dict:
    """Mean and max box IoU over all cluster pairs of one scene."""
    m = seg.num_clusters
    if m < 2:
        raise TooFewClusters("overlap statistics need at least 2 clusters")
    values = []
    for i in range(m):
        for j in range(i + 1, m):
            values.append(_box_iou(seg.boxes[i], seg.boxes[j]))
    return {
        "mean_pairwise_box_iou": float(np.mean(values)),
        "max_pairwise_box_iou": float(np.max(values)),
    }


def mix3d_merge(scene_a: PointCloud, scene_b: PointCloud) -> PointCloud:
    """Naive union baseline: center both scenes at the origin and stack.

    Optional fields are carried only when both inputs have them; cluster
    ids of the second scene are shifted past the first scene's so the two
    id spaces stay disjoint.
    """
    pos_a = scene_a.positions - scene_a.positions.mean(axis=0)
    pos_b = scene_b.positions - scene_b.positions.mean(axis=0)
    both = lambda f: getattr(scene_a, f) is not None and getattr(scene_b, f) is not None
    clusters = None
    if both("clusters"):
        offset = int(scene_a.clusters.max()) + 1
        clusters = np.concatenate([scene_a.clusters, scene_b.clusters + offset])
    return PointCloud(
        positions=np.concatenate([pos_a, pos_b]),
        colors=np.concatenate([scene_a.colors, scene_b.colors]),
        normals=np.concatenate([scene_a.normals, scene_b.normals]) if both("normals") else None,
        labels=np.concatenate([scene_a.labels, scene_b.labels]) if both("labels") else None,
        clusters=clusters,
        scene_id=f"{scene_a.scene_id}+{scene_b.scene_id}",
    )
