"""Low-level geometric primitives.

Nearest-neighbour structure, covariance normal estimation, farthest point
sampling, gravity-aligned minimum circumscribed boxes, and the random view
augmentation used to build training views. Everything here is a pure
function of its inputs (plus an explicit seed), so calls are safe from any
number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import CountExceedsPopulation

# Extents below this are clamped so every box has strictly positive volume.
MIN_BOX_EXTENT = 1e-4

# |component| below this counts as zero for the normal sign rule.
_SIGN_EPS = 1e-10


@dataclass
class PointCloud:
    """One scene: positions in meters, RGB colors, optional extras.

    positions, colors and any present optional array share length N.
    ``clusters`` carries per-point cluster ids when the cloud has been
    segmented (or loaded from a PLY with a cluster property).
    """

    positions: np.ndarray
    colors: np.ndarray
    normals: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    clusters: Optional[np.ndarray] = None
    scene_id: str = ""

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.uint8)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be an (N, 3) array")
        n = len(self.positions)
        if n < 1:
            raise ValueError("a point cloud needs at least one point")
        if self.colors.shape != (n, 3):
            raise ValueError("colors must be an (N, 3) array matching positions")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != (n, 3):
                raise ValueError("normals must be an (N, 3) array matching positions")
            norms = np.linalg.norm(self.normals, axis=1)
            if not np.all(np.abs(norms - 1.0) <= 1e-6):
                raise ValueError("normals must be unit vectors (tolerance 1e-6)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (n,):
                raise ValueError("labels must be length N")
        if self.clusters is not None:
            self.clusters = np.asarray(self.clusters, dtype=np.int32)
            if self.clusters.shape != (n,):
                raise ValueError("clusters must be length N")

    def __len__(self) -> int:
        return len(self.positions)

    def take(self, indices: np.ndarray, scene_id: Optional[str] = None) -> "PointCloud":
        """New cloud containing the points at ``indices`` (order preserved)."""
        take = lambda a: None if a is None else a[indices]
        return PointCloud(
            positions=self.positions[indices],
            colors=self.colors[indices],
            normals=take(self.normals),
            labels=take(self.labels),
            clusters=take(self.clusters),
            scene_id=self.scene_id if scene_id is None else scene_id,
        )


@dataclass(frozen=True)
class Obb:
    """Gravity-aligned minimum circumscribed box.

    The XY footprint is the minimum-area rectangle of the generating
    cluster's XY projection; ``yaw`` (radians, in [0, pi)) is the heading of
    the length axis about z. dims = (length, width, height) with
    length >= width; height is the z extent. Degenerate extents are clamped
    to MIN_BOX_EXTENT.
    """

    center: np.ndarray
    yaw: float
    dims: tuple[float, float, float]

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def footprint_corners(self) -> np.ndarray:
        """The 4 XY corners of the footprint rectangle, shape (4, 2)."""
        length, width, _ = self.dims
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        axis_l = np.array([c, s])
        axis_w = np.array([-s, c])
        cxy = self.center[:2]
        half_l, half_w = 0.5 * length, 0.5 * width
        return np.array(
            [
                cxy + half_l * axis_l + half_w * axis_w,
                cxy + half_l * axis_l - half_w * axis_w,
                cxy - half_l * axis_l - half_w * axis_w,
                cxy - half_l * axis_l + half_w * axis_w,
            ]
        )

    def contains(self, points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        """Boolean mask: which points lie inside the box (with tolerance)."""
        pts = np.asarray(points, dtype=np.float64)
        rel = pts - self.center
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        u = rel[:, 0] * c + rel[:, 1] * s
        v = -rel[:, 0] * s + rel[:, 1] * c
        length, width, height = self.dims
        return (
            (np.abs(u) <= 0.5 * length + tol)
            & (np.abs(v) <= 0.5 * width + tol)
            & (np.abs(rel[:, 2]) <= 0.5 * height + tol)
        )


@dataclass(frozen=True)
class AugmentationConfig:
    """Random view augmentation parameters.

    flip_axes lists the axes ('x', 'y') that may be mirrored (each with
    probability 1/2); the z rotation angle is drawn uniformly from
    [0, z_rotation_range); the scale factor uniformly from scale_jitter,
    whose range must contain 1; crop_fraction of the points (a contiguous
    spatial neighbourhood) is retained.
    """

    flip_axes: frozenset = frozenset()
    z_rotation_range: float = 0.0
    scale_jitter: tuple[float, float] = (1.0, 1.0)
    crop_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "flip_axes", frozenset(self.flip_axes))
        if not self.flip_axes <= {"x", "y"}:
            raise ValueError("flip_axes may only contain 'x' and 'y'")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ValueError("crop_fraction must be in (0, 1]")
        lo, hi = self.scale_jitter
        if not lo <= 1.0 <= hi:
            raise ValueError("scale_jitter range must contain 1")
        if self.z_rotation_range < 0:
            raise ValueError("z_rotation_range must be non-negative")


IDENTITY_AUGMENTATION = AugmentationConfig()


def _knn_indices(positions: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's k nearest neighbours (self excluded).

    Ties in distance are broken by lower index, which makes the selection
    exact and deterministic even on regular grids. Returns an (N, k) array.
    """
    pts = np.asarray(positions, dtype=np.float64)
    n = len(pts)
    if k >= n:
        raise ValueError("k must be smaller than the number of points")
    tree = cKDTree(pts)
    kq = min(n, k + 2)  # +1 for self, +1 so boundary ties are detectable
    rows = np.arange(n)[:, None]
    while True:
        dist, idx = tree.query(pts, k=kq)
        far = dist[:, -1]
        # Push the self entry past everything real, then sort each row by
        # (distance, index) so equal distances resolve to the lower index.
        is_self = idx == rows
        dist = np.where(is_self, np.inf, dist)
        idx = np.where(is_self, n, idx)
        order = np.lexsort((idx, dist), axis=-1)
        d_sorted = np.take_along_axis(dist, order, axis=-1)
        keep = np.take_along_axis(idx, order, axis=-1)[:, :k]
        # A selected candidate at the same distance as the farthest fetched
        # one means lower-index ties may still be missing: refetch wider.
        if kq == n or not np.any(d_sorted[:, k - 1] >= far):
            return keep.astype(np.int64)
        kq = min(n, kq * 2)


def estimate_normals(cloud: PointCloud, k: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Per-point unit normals from k-NN covariance.

    The normal at a point is the eigenvector of the smallest eigenvalue of
    the covariance of its k-neighbourhood (the point plus its k-1 nearest
    neighbours), sign-flipped so z >= 0 (ties: y >= 0, then x >= 0). When a
    neighbourhood is degenerate (collinear or coincident, so the normal is
    not unique) the normal falls back to (0, 0, 1) and the point is flagged.

    Returns (normals, degenerate) where degenerate is a boolean mask.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    pts = cloud.positions
    n = len(pts)
    if n < k:
        raise ValueError("cloud must have at least k points")
    neighbours = _knn_indices(pts, k - 1)  # k-1 others + self = k points
    hood = np.concatenate([np.arange(n)[:, None], neighbours], axis=1)
    local = pts[hood]  # (N, k, 3)
    centered = local - local.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0].copy()

    # Rank <= 1 neighbourhoods (collinear or coincident) have no unique
    # normal; the test is relative so it is scale invariant.
    degenerate = eigvals[:, 1] <= 1e-12 * np.maximum(eigvals[:, 2], 0.0)
    normals[degenerate] = (0.0, 0.0, 1.0)

    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    _canonical_sign(normals)
    return normals, degenerate


def _canonical_sign(normals: np.ndarray) -> None:
    """Flip normals in place so z >= 0, ties resolved by y then x."""
    z, y, x = normals[:, 2], normals[:, 1], normals[:, 0]
    z_zero = np.abs(z) < _SIGN_EPS
    y_zero = np.abs(y) < _SIGN_EPS
    flip = (z < 0) & ~z_zero
    flip |= z_zero & (y < 0) & ~y_zero
    flip |= z_zero & y_zero & (x < 0)
    normals[flip] *= -1.0


def knn_edges(positions: np.ndarray, k: int = 16, radius_cap: float = 0.5) -> np.ndarray:
    """Symmetric k-NN adjacency as a deduplicated undirected edge list.

    (i, j) is an edge iff j is among i's k nearest (ties by lower index) or
    vice versa, and their distance is at most radius_cap. Returns an (E, 2)
    int array with i < j, sorted lexicographically. No self edges.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if radius_cap <= 0:
        raise ValueError("radius_cap must be positive")
    pts = np.asarray(positions, dtype=np.float64)
    n = len(pts)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    neighbours = _knn_indices(pts, min(k, n - 1))
    src = np.repeat(np.arange(n), neighbours.shape[1])
    dst = neighbours.ravel()
    d = np.linalg.norm(pts[src] - pts[dst], axis=1)
    within = d <= radius_cap
    src, dst = src[within], dst[within]
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return edges.astype(np.int64)


def farthest_point_sampling(positions: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """Greedy max-min sampling: an ordered index list of length ``count``.

    The first element is ``start``; each next element maximizes the minimum
    distance to everything already selected, ties broken by lowest index.
    """
    pts = np.asarray(positions, dtype=np.float64)
    n = len(pts)
    if count < 1:
        raise ValueError("count must be at least 1")
    if count > n:
        raise CountExceedsPopulation(f"requested {count} samples from {n} points")
    if not 0 <= start < n:
        raise ValueError("start index out of range")
    selected = np.empty(count, dtype=np.int64)
    selected[0] = start
    min_dist = np.linalg.norm(pts - pts[start], axis=1)
    for i in range(1, count):
        nxt = int(np.argmax(min_dist))  # argmax returns the lowest tied index
        selected[i] = nxt
        np.minimum(min_dist, np.linalg.norm(pts - pts[nxt], axis=1), out=min_dist)
    return selected


def _footprint_rectangle(xy: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    """Minimum-area enclosing rectangle of 2D points.

    Returns (angle, extent_along_angle, extent_across, center_xy) where
    angle is the rectangle edge direction searched over the convex hull
    (rotating calipers: the optimal rectangle shares a side with a hull
    edge). Handles collinear/degenerate inputs.
    """
    if len(xy) == 1:
        return 0.0, 0.0, 0.0, xy[0].copy()
    try:
        hull = ConvexHull(xy)
        hull_pts = xy[hull.vertices]
    except QhullError:
        # Collinear (or coincident) input: the footprint is a segment along
        # the dominant direction.
        rel = xy - xy.mean(axis=0)
        span = rel.max(axis=0) - rel.min(axis=0)
        if span[0] < 1e-15 and span[1] < 1e-15:
            return 0.0, 0.0, 0.0, xy.mean(axis=0)
        direction = rel[np.argmax(np.linalg.norm(rel, axis=1))]
        angle = math.atan2(direction[1], direction[0]) % math.pi
        return _rect_at_angle(xy, angle)

    edges = np.diff(np.vstack([hull_pts, hull_pts[:1]]), axis=0)
    angles = np.arctan2(edges[:, 1], edges[:, 0]) % (math.pi / 2)
    best = None
    for angle in np.unique(angles):
        cand = _rect_at_angle(hull_pts, angle)
        area = cand[1] * cand[2]
        if best is None or area < best_area - 1e-15:
            best, best_area = cand, area
    # Re-derive extents from all points, not just hull vertices (equal by
    # construction, but keeps the degenerate paths uniform).
    return _rect_at_angle(xy, best[0])


def _rect_at_angle(xy: np.ndarray, angle: float) -> tuple[float, float, float, np.ndarray]:
    c, s = math.cos(angle), math.sin(angle)
    u = xy[:, 0] * c + xy[:, 1] * s
    v = -xy[:, 0] * s + xy[:, 1] * c
    u_min, u_max = u.min(), u.max()
    v_min, v_max = v.min(), v.max()
    cu, cv = 0.5 * (u_min + u_max), 0.5 * (v_min + v_max)
    center = np.array([cu * c - cv * s, cu * s + cv * c])
    return angle, u_max - u_min, v_max - v_min, center


def min_circumscribed_box(points: np.ndarray) -> Obb:
    """Smallest gravity-aligned box enclosing ``points``.

    The XY footprint is the minimum-area rectangle of the XY projection
    (rotating calipers over the convex hull); the height is the z extent.
    Dims are canonicalized to length >= width and clamped to
    MIN_BOX_EXTENT; yaw is the length-axis heading in [0, pi).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
        raise ValueError("points must be a non-empty (N, 3) array")
    angle, ext_u, ext_v, center_xy = _footprint_rectangle(pts[:, :2])
    z_min, z_max = pts[:, 2].min(), pts[:, 2].max()
    if ext_u >= ext_v:
        length, width, yaw = ext_u, ext_v, angle % math.pi
    else:
        length, width, yaw = ext_v, ext_u, (angle + math.pi / 2) % math.pi
    dims = (
        float(max(length, MIN_BOX_EXTENT)),
        float(max(width, MIN_BOX_EXTENT)),
        float(max(z_max - z_min, MIN_BOX_EXTENT)),
    )
    center = np.array([center_xy[0], center_xy[1], 0.5 * (z_min + z_max)])
    return Obb(center=center, yaw=float(yaw), dims=dims)


def augment_view(cloud: PointCloud, config: AugmentationConfig) -> PointCloud:
    """Random flips, z rotation, scale jitter, then a contiguous crop.

    Deterministic under a fixed seed. Transforms are applied about the
    cloud centroid so the scene stays in place; normals are transformed
    alongside positions. Cluster ids and labels travel with the retained
    points. A crop that would retain zero points keeps the single nearest
    point instead.
    """
    rng = np.random.default_rng(config.seed)
    pts = cloud.positions.copy()
    normals = None if cloud.normals is None else cloud.normals.copy()
    centroid = pts.mean(axis=0)

    for axis_name in sorted(config.flip_axes):
        if rng.random() < 0.5:
            axis = 0 if axis_name == "x" else 1
            pts[:, axis] = 2.0 * centroid[axis] - pts[:, axis]
            if normals is not None:
                normals[:, axis] *= -1.0

    if config.z_rotation_range > 0:
        angle = rng.uniform(0.0, config.z_rotation_range)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pts = (pts - centroid) @ rot.T + centroid
        if normals is not None:
            normals = normals @ rot.T

    lo, hi = config.scale_jitter
    if (lo, hi) != (1.0, 1.0):
        factor = rng.uniform(lo, hi)
        pts = (pts - centroid) * factor + centroid

    n = len(pts)
    keep_count = int(math.floor(config.crop_fraction * n))
    if keep_count >= n:
        kept = np.arange(n)
    else:
        keep_count = max(keep_count, 1)  # empty crop falls back to 1 point
        anchor = int(rng.integers(n))
        d = np.linalg.norm(pts - pts[anchor], axis=1)
        order = np.lexsort((np.arange(n), d))
        kept = np.sort(order[:keep_count])

    out = PointCloud(
        positions=pts[kept],
        colors=cloud.colors[kept],
        normals=None if normals is None else normals[kept],
        labels=None if cloud.labels is None else cloud.labels[kept],
        clusters=None if cloud.clusters is None else cloud.clusters[kept],
        scene_id=cloud.scene_id,
    )
    return out
