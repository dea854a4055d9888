"""Shared synthetic-scene factories.

Scenes here are deliberately simple: solid box-shaped clusters dropped on
a loose grid (so nothing overlaps and every box sits in the exchangeable
size band) and, for segmentation tests, planar rooms with analytic
normals where the expected partition is known by construction.
"""

import numpy as np
import pytest

from pcx import PointCloud, segmentation_from_clusters


def _solid_box(rng, center, dims, n):
    return rng.uniform(-0.5, 0.5, (n, 3)) * np.asarray(dims) + np.asarray(center)


def make_box_scene(seed, n_boxes=4, points_per_box=120, scene_id="scene",
                   labels_from=10, cell=2.5):
    """A scene of well-separated solid boxes, one cluster per box.

    Boxes are centered on a jittered grid with dims drawn from
    [0.35, 1.2] m, so every cluster passes the default eligibility band
    and no two boxes touch. Cluster c carries semantic label
    labels_from + c.
    """
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(n_boxes)))
    parts, cluster_ids, labels = [], [], []
    for c in range(n_boxes):
        gx, gy = c % side, c // side
        dims = rng.uniform(0.35, 1.2, 3)
        center = np.array([
            cell * gx + rng.uniform(-0.3, 0.3),
            cell * gy + rng.uniform(-0.3, 0.3),
            dims[2] / 2 + rng.uniform(0.0, 0.5),
        ])
        parts.append(_solid_box(rng, center, dims, points_per_box))
        cluster_ids.append(np.full(points_per_box, c, dtype=np.int32))
        labels.append(np.full(points_per_box, labels_from + c, dtype=np.int32))
    positions = np.vstack(parts)
    cloud = PointCloud(
        positions=positions,
        colors=rng.integers(0, 256, (len(positions), 3)).astype(np.uint8),
        labels=np.concatenate(labels),
        clusters=np.concatenate(cluster_ids),
        scene_id=scene_id,
    )
    seg = segmentation_from_clusters(cloud, cloud.clusters)
    return cloud, seg


def _plane_patch(rng, n, make_point, normal):
    uv = rng.uniform(0.0, 1.0, (n, 2))
    pts = np.array([make_point(u, v) for u, v in uv])
    return pts, np.tile(np.asarray(normal, dtype=float), (n, 1))


def _hollow_cuboid(rng, center, dims, per_face):
    """Six rectangular face patches with exact face normals."""
    cx, cy, cz = center
    lx, ly, lz = dims
    faces = [
        (lambda u, v: (cx - lx / 2 + u * lx, cy - ly / 2 + v * ly, cz + lz / 2), (0, 0, 1)),
        (lambda u, v: (cx - lx / 2 + u * lx, cy - ly / 2 + v * ly, cz - lz / 2), (0, 0, 1)),
        (lambda u, v: (cx + lx / 2, cy - ly / 2 + u * ly, cz - lz / 2 + v * lz), (1, 0, 0)),
        (lambda u, v: (cx - lx / 2, cy - ly / 2 + u * ly, cz - lz / 2 + v * lz), (1, 0, 0)),
        (lambda u, v: (cx - lx / 2 + u * lx, cy + ly / 2, cz - lz / 2 + v * lz), (0, 1, 0)),
        (lambda u, v: (cx - lx / 2 + u * lx, cy - ly / 2, cz - lz / 2 + v * lz), (0, 1, 0)),
    ]
    pts, nrm = [], []
    for make_point, normal in faces:
        p, n = _plane_patch(rng, per_face, make_point, normal)
        pts.append(p)
        nrm.append(n)
    return np.vstack(pts), np.vstack(nrm)


def make_room_cloud(seed=42, floor_points=12000, wall_points=7000, per_face=60):
    """Floor, wall, and two floating hollow cuboids: 4 known components.

    Normals are the exact plane normals, so every within-component edge
    has weight 1.0 and every floor-to-wall edge exactly 2.0. The cuboids
    hover 1 m above the floor, beyond the edge radius cap, and each face
    holds fewer points than the merge threshold, which forces the cleanup
    pass to reunite each cuboid into a single cluster.
    """
    rng = np.random.default_rng(seed)
    floor_pts, floor_nrm = _plane_patch(
        rng, floor_points, lambda u, v: (5 * u, 5 * v, 0.0), (0, 0, 1))
    wall_pts, wall_nrm = _plane_patch(
        rng, wall_points, lambda u, v: (0.0, 5 * u, 2.5 * v), (1, 0, 0))
    box1_pts, box1_nrm = _hollow_cuboid(rng, (1.5, 1.5, 1.5), (0.8, 0.8, 0.8), per_face)
    box2_pts, box2_nrm = _hollow_cuboid(rng, (3.5, 3.5, 1.5), (0.7, 0.9, 0.8), per_face)
    positions = np.vstack([floor_pts, wall_pts, box1_pts, box2_pts])
    normals = np.vstack([floor_nrm, wall_nrm, box1_nrm, box2_nrm])
    return PointCloud(
        positions=positions,
        colors=np.full((len(positions), 3), 90, dtype=np.uint8),
        normals=normals,
        scene_id="room",
    )


@pytest.fixture
def box_scene():
    return make_box_scene


@pytest.fixture(scope="session")
def room_cloud():
    return make_room_cloud()
