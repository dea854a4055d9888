"""Geometry primitives against brute-force oracles and hand cases."""

import math

import numpy as np
import pytest

from pcx import (
    AugmentationConfig,
    Obb,
    PointCloud,
    augment_view,
    estimate_normals,
    farthest_point_sampling,
    knn_edges,
    min_circumscribed_box,
)
from pcx.errors import CountExceedsPopulation


def brute_knn_edges(positions, k, radius_cap):
    """O(N^2) reference: k nearest by (distance, index), symmetrized."""
    pts = np.asarray(positions, dtype=np.float64)
    n = len(pts)
    directed = set()
    for i in range(n):
        d = np.linalg.norm(pts - pts[i], axis=1)
        order = sorted((dd, j) for j, dd in enumerate(d) if j != i)
        for dd, j in order[:k]:
            if dd <= radius_cap:
                directed.add((min(i, j), max(i, j)))
    return np.array(sorted(directed), dtype=np.int64).reshape(-1, 2)


def brute_fps(positions, count, start):
    """Step-by-step max-min search with explicit lowest-index ties."""
    pts = np.asarray(positions, dtype=np.float64)
    chosen = [start]
    while len(chosen) < count:
        best = None
        for i in range(len(pts)):
            if i in chosen:
                continue
            dist = min(np.linalg.norm(pts[i] - pts[c]) for c in chosen)
            if best is None or dist > best[0]:
                best = (dist, i)
        chosen.append(best[1])
    return np.array(chosen)


def sweep_min_rect_area(xy, step_deg=1.0):
    """Minimum rectangle area over a dense sweep of candidate headings."""
    best = np.inf
    for deg in np.arange(0.0, 90.0, step_deg):
        t = math.radians(deg)
        c, s = math.cos(t), math.sin(t)
        u = xy[:, 0] * c + xy[:, 1] * s
        v = -xy[:, 0] * s + xy[:, 1] * c
        best = min(best, (u.max() - u.min()) * (v.max() - v.min()))
    return best


class TestPointCloud:
    def test_rejects_mismatched_colors(self):
        with pytest.raises(ValueError, match="colors"):
            PointCloud(positions=np.zeros((3, 3)), colors=np.zeros((2, 3), dtype=np.uint8))

    def test_rejects_non_unit_normals(self):
        with pytest.raises(ValueError, match="unit"):
            PointCloud(
                positions=np.zeros((2, 3)),
                colors=np.zeros((2, 3), dtype=np.uint8),
                normals=np.array([[0, 0, 1.0], [0, 0, 2.0]]),
            )

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PointCloud(positions=np.zeros((0, 3)), colors=np.zeros((0, 3), dtype=np.uint8))

    def test_take_preserves_fields(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(
            positions=rng.normal(size=(5, 3)),
            colors=rng.integers(0, 256, (5, 3)).astype(np.uint8),
            labels=np.arange(5, dtype=np.int32),
            clusters=np.zeros(5, dtype=np.int32),
        )
        sub = cloud.take(np.array([3, 1]))
        np.testing.assert_array_equal(sub.labels, [3, 1])
        np.testing.assert_array_equal(sub.positions, cloud.positions[[3, 1]])


class TestKnnEdges:
    def test_two_points_within_cap(self):
        edges = knn_edges(np.array([[0, 0, 0], [0.1, 0, 0]]), k=1, radius_cap=1.0)
        np.testing.assert_array_equal(edges, [[0, 1]])

    def test_two_points_beyond_cap(self):
        edges = knn_edges(np.array([[0, 0, 0], [5.0, 0, 0]]), k=1, radius_cap=1.0)
        assert len(edges) == 0

    def test_grid_matches_brute_force(self):
        """3x3 unit grid, k=2, cap 1.5: heavy ties, must match the oracle."""
        g = np.array([[x, y, 0.0] for x in range(3) for y in range(3)])
        np.testing.assert_array_equal(
            knn_edges(g, k=2, radius_cap=1.5), brute_knn_edges(g, 2, 1.5))

    def test_random_clouds_match_brute_force(self):
        rng = np.random.default_rng(7)
        for n, k, cap in [(5, 2, 2.0), (40, 4, 0.8), (120, 16, 0.5), (200, 7, 0.4)]:
            pts = rng.uniform(0, 2, (n, 3))
            np.testing.assert_array_equal(
                knn_edges(pts, k=k, radius_cap=cap),
                brute_knn_edges(pts, k, cap),
                err_msg=f"n={n} k={k} cap={cap}",
            )

    def test_duplicate_points_match_brute_force(self):
        """Coincident points force distance-zero ties on every row."""
        base = np.random.default_rng(3).uniform(0, 1, (10, 3))
        pts = np.vstack([base, base, base])
        np.testing.assert_array_equal(
            knn_edges(pts, k=4, radius_cap=1.0), brute_knn_edges(pts, 4, 1.0))

    def test_edges_sorted_and_unique(self):
        pts = np.random.default_rng(1).uniform(0, 1, (50, 3))
        edges = knn_edges(pts, k=5, radius_cap=0.7)
        assert np.all(edges[:, 0] < edges[:, 1])
        assert len(np.unique(edges, axis=0)) == len(edges)

    def test_parameter_validation(self):
        pts = np.zeros((4, 3))
        with pytest.raises(ValueError):
            knn_edges(pts, k=0)
        with pytest.raises(ValueError):
            knn_edges(pts, k=1, radius_cap=0.0)


class TestEstimateNormals:
    def test_flat_plane_gives_vertical_normals(self):
        rng = np.random.default_rng(11)
        pts = np.column_stack([rng.uniform(0, 3, 1000), rng.uniform(0, 3, 1000),
                               np.zeros(1000)])
        cloud = PointCloud(positions=pts, colors=np.zeros((1000, 3), dtype=np.uint8))
        normals, degenerate = estimate_normals(cloud, k=10)
        np.testing.assert_allclose(normals, np.tile([0, 0, 1.0], (1000, 1)), atol=1e-9)
        assert not degenerate.any()

    def test_sphere_normals_are_radial(self):
        """On a sphere the normal must align with the radius within 5 deg."""
        rng = np.random.default_rng(5)
        raw = rng.normal(size=(3000, 3))
        pts = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        cloud = PointCloud(positions=pts, colors=np.zeros((3000, 3), dtype=np.uint8))
        normals, degenerate = estimate_normals(cloud, k=20)
        assert not degenerate.any()
        cos = np.abs(np.einsum("ij,ij->i", normals, pts))
        worst = math.degrees(math.acos(np.clip(cos.min(), -1, 1)))
        assert worst < 5.0

    def test_collinear_points_flagged(self):
        pts = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
        cloud = PointCloud(positions=pts, colors=np.zeros((5, 3), dtype=np.uint8))
        normals, degenerate = estimate_normals(cloud, k=4)
        assert degenerate.all()
        np.testing.assert_array_equal(normals, np.tile([0, 0, 1.0], (5, 1)))

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(300, 3))
        colors = np.zeros((300, 3), dtype=np.uint8)
        n1, _ = estimate_normals(PointCloud(positions=pts, colors=colors), k=12)
        n2, _ = estimate_normals(
            PointCloud(positions=pts + [100.0, -40.0, 7.0], colors=colors), k=12)
        np.testing.assert_allclose(n1, n2, atol=1e-8)

    def test_sign_rule(self):
        """Every normal has z > 0, or z == 0 and y > 0, or points along +x."""
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(500, 3))
        cloud = PointCloud(positions=pts, colors=np.zeros((500, 3), dtype=np.uint8))
        normals, _ = estimate_normals(cloud, k=10)
        for nx, ny, nz in normals:
            if abs(nz) >= 1e-10:
                assert nz > 0
            elif abs(ny) >= 1e-10:
                assert ny > 0
            else:
                assert nx >= 0

    def test_parameter_validation(self):
        cloud = PointCloud(positions=np.zeros((4, 3)), colors=np.zeros((4, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            estimate_normals(cloud, k=2)
        with pytest.raises(ValueError):
            estimate_normals(cloud, k=5)


class TestFarthestPointSampling:
    def test_line_hand_case(self):
        """x = 0..9: after 0 and 9, index 4 wins the tie against 5."""
        pts = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
        np.testing.assert_array_equal(farthest_point_sampling(pts, 3), [0, 9, 4])

    def test_coincident_points(self):
        pts = np.zeros((4, 3))
        np.testing.assert_array_equal(farthest_point_sampling(pts, 2), [0, 1])

    def test_full_count_is_permutation(self):
        pts = np.random.default_rng(0).normal(size=(9, 3))
        out = farthest_point_sampling(pts, 9)
        assert sorted(out) == list(range(9))

    def test_matches_oracle_exhaustively(self):
        rng = np.random.default_rng(13)
        for n in range(2, 13):
            pts = rng.integers(0, 4, (n, 3)).astype(float)  # integer coords force ties
            for count in (1, n // 2 + 1, n):
                for start in (0, n - 1):
                    np.testing.assert_array_equal(
                        farthest_point_sampling(pts, count, start=start),
                        brute_fps(pts, count, start),
                        err_msg=f"n={n} count={count} start={start}",
                    )

    def test_count_exceeds_population(self):
        with pytest.raises(CountExceedsPopulation):
            farthest_point_sampling(np.zeros((3, 3)), 4)

    def test_start_out_of_range(self):
        with pytest.raises(ValueError):
            farthest_point_sampling(np.zeros((3, 3)), 2, start=3)


class TestMinCircumscribedBox:
    def test_axis_aligned_cube(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                           dtype=float)
        box = min_circumscribed_box(corners)
        assert box.dims == (1.0, 1.0, 1.0)
        assert box.yaw == 0.0
        np.testing.assert_allclose(box.center, [0.5, 0.5, 0.5])

    def test_rotated_square(self):
        """Unit square at 45 degrees, flat: dims (1, 1, clamp), yaw pi/4."""
        t = math.pi / 4
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]) @ rot.T
        pts = np.column_stack([square, np.zeros(4)])
        box = min_circumscribed_box(pts)
        np.testing.assert_allclose(box.dims, (1.0, 1.0, 1e-4), atol=1e-12)
        assert abs(box.yaw - math.pi / 4) < 1e-9

    def test_single_point_clamps(self):
        box = min_circumscribed_box(np.array([[2.0, 3.0, 4.0]]))
        assert box.dims == (1e-4, 1e-4, 1e-4)
        np.testing.assert_allclose(box.center, [2.0, 3.0, 4.0])

    def test_collinear_points(self):
        pts = np.array([[0, 0, 0], [1, 1, 0], [2, 2, 0.0]])
        box = min_circumscribed_box(pts)
        np.testing.assert_allclose(box.dims[0], math.hypot(2, 2), atol=1e-9)
        assert box.dims[1] == 1e-4
        assert abs(box.yaw - math.pi / 4) < 1e-9

    def test_beats_one_degree_sweep(self):
        """Footprint area must not exceed a dense rotation sweep's minimum."""
        rng = np.random.default_rng(21)
        for trial in range(20):
            pts = rng.normal(size=(rng.integers(3, 40), 3)) * rng.uniform(0.1, 3)
            box = min_circumscribed_box(pts)
            area = box.dims[0] * box.dims[1]
            sweep = sweep_min_rect_area(pts[:, :2])
            assert area <= sweep + 1e-9, f"trial {trial}: {area} > {sweep}"

    def test_contains_all_generating_points(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            pts = rng.normal(size=(30, 3))
            box = min_circumscribed_box(pts)
            assert box.contains(pts).all()

    def test_area_bounded_by_axis_aligned_rectangle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = rng.normal(size=(25, 3))
            box = min_circumscribed_box(pts)
            span = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
            assert box.dims[0] * box.dims[1] <= span[0] * span[1] + 1e-9

    def test_length_at_least_width_and_yaw_range(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            pts = rng.normal(size=(12, 3))
            box = min_circumscribed_box(pts)
            assert box.dims[0] >= box.dims[1]
            assert 0.0 <= box.yaw < math.pi


class TestAugmentView:
    def _cloud(self, n=400, seed=1):
        rng = np.random.default_rng(seed)
        return PointCloud(
            positions=rng.normal(size=(n, 3)) * 2,
            colors=rng.integers(0, 256, (n, 3)).astype(np.uint8),
            labels=rng.integers(0, 5, n).astype(np.int32),
            clusters=rng.integers(0, 3, n).astype(np.int32),
        )

    def test_identity_config_is_identity(self):
        cloud = self._cloud()
        out = augment_view(cloud, AugmentationConfig())
        np.testing.assert_array_equal(out.positions, cloud.positions)
        np.testing.assert_array_equal(out.colors, cloud.colors)
        np.testing.assert_array_equal(out.labels, cloud.labels)
        np.testing.assert_array_equal(out.clusters, cloud.clusters)

    def test_crop_cardinality(self):
        cloud = self._cloud(n=1000)
        out = augment_view(cloud, AugmentationConfig(crop_fraction=0.5, seed=3))
        assert len(out) == 500

    def test_tiny_crop_keeps_one_point(self):
        cloud = self._cloud(n=50)
        out = augment_view(cloud, AugmentationConfig(crop_fraction=0.001, seed=3))
        assert len(out) == 1

    def test_seed_determinism(self):
        cloud = self._cloud()
        config = AugmentationConfig(flip_axes={"x", "y"}, z_rotation_range=math.tau,
                                    scale_jitter=(0.9, 1.1), crop_fraction=0.7, seed=99)
        a = augment_view(cloud, config)
        b = augment_view(cloud, config)
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.clusters, b.clusters)

    def test_rigid_parts_preserve_distances(self):
        """Flips and rotation alone must not change pairwise distances."""
        cloud = self._cloud(n=100)
        config = AugmentationConfig(flip_axes={"x"}, z_rotation_range=math.tau, seed=5)
        out = augment_view(cloud, config)
        d0 = np.linalg.norm(cloud.positions[0] - cloud.positions[50])
        d1 = np.linalg.norm(out.positions[0] - out.positions[50])
        assert abs(d0 - d1) < 1e-9

    def test_normals_stay_unit_after_rotation(self):
        rng = np.random.default_rng(4)
        raw = rng.normal(size=(200, 3))
        cloud = PointCloud(
            positions=rng.normal(size=(200, 3)),
            colors=np.zeros((200, 3), dtype=np.uint8),
            normals=raw / np.linalg.norm(raw, axis=1, keepdims=True),
        )
        out = augment_view(cloud, AugmentationConfig(
            flip_axes={"y"}, z_rotation_range=1.0, seed=2))
        np.testing.assert_allclose(np.linalg.norm(out.normals, axis=1), 1.0, atol=1e-9)

    def test_scale_jitter_must_contain_one(self):
        with pytest.raises(ValueError):
            AugmentationConfig(scale_jitter=(1.1, 1.2))

    def test_crop_fraction_range(self):
        with pytest.raises(ValueError):
            AugmentationConfig(crop_fraction=0.0)
        with pytest.raises(ValueError):
            AugmentationConfig(crop_fraction=1.5)


class TestObb:
    def test_contains_tolerance(self):
        box = Obb(center=np.zeros(3), yaw=0.0, dims=(2.0, 1.0, 1.0))
        inside = np.array([[0.99, 0.0, 0.0], [1.0, 0.5, 0.5]])
        outside = np.array([[1.1, 0.0, 0.0], [0.0, 0.6, 0.0]])
        assert box.contains(inside).all()
        assert not box.contains(outside).any()

    def test_footprint_corners_face_yaw(self):
        box = Obb(center=np.array([1.0, 2.0, 0.0]), yaw=math.pi / 2, dims=(4.0, 2.0, 1.0))
        corners = box.footprint_corners()
        # length axis along +y: corners span 4 in y, 2 in x
        assert corners[:, 1].max() - corners[:, 1].min() == pytest.approx(4.0)
        assert corners[:, 0].max() - corners[:, 0].min() == pytest.approx(2.0)
