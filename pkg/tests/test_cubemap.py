import math

import numpy as np
import pytest

from lidarcs.core import PointCloud, range_of
from lidarcs.cubemap import (
    FACE_BASIS,
    FACE_NAMES,
    NO_RETURN,
    build_cube_map,
    estimate_normals,
    pixel_direction,
    query_depths,
    query_pattern,
    query_patterns,
)
from lidarcs.errors import EmptyScene, InvalidInput
from lidarcs.pattern import RayPattern, SENSOR_PRESETS, SensorSpec, synthesize_pattern
from lidarcs.synthetic import ground_points

W = 64


def _center_block(face):
    h = W // 2
    return face[h - 1:h + 1, h - 1:h + 1]


def _pixel_depth_oracle(face, row, col, plane_dist):
    """Distance along a pixel-center ray to a plane at ``plane_dist`` along the face axis."""
    u = 2 * (col + 0.5) / W - 1
    v = 2 * (row + 0.5) / W - 1
    return plane_dist * math.sqrt(1 + u * u + v * v)


@pytest.fixture(scope="module")
def ground_cube():
    xyz, n = ground_points(-2.0, 25.0, 0.05)
    return build_cube_map(PointCloud(xyz, normals=n), face_resolution=512, splat_radius=0.05)


class TestSinglePoint:
    def test_flat_kernel_center_depth(self):
        cube = build_cube_map(PointCloud(np.array([[10.0, 0, 0]])), face_resolution=W,
                              splat_radius=0.2, splat_kernel="flat")
        np.testing.assert_array_equal(_center_block(cube.face("+x")), np.float32(10.0))
        for name in FACE_NAMES[1:]:
            assert np.all(cube.face(name) == NO_RETURN)

    def test_oriented_kernel_center_depth(self):
        cloud = PointCloud(np.array([[10.0, 0, 0]]), normals=np.array([[-1.0, 0, 0]]))
        cube = build_cube_map(cloud, face_resolution=W, splat_radius=0.2)
        block = _center_block(cube.face("+x"))
        np.testing.assert_allclose(block, _pixel_depth_oracle(0, W // 2, W // 2, 10.0), rtol=1e-6)
        assert np.isfinite(cube.depth[0]).sum() >= 4
        assert np.all(np.isinf(cube.depth[1:]))


class TestTriangles:
    QUAD = np.array([
        [[5.0, -0.5, -0.5], [5.0, 0.5, -0.5], [5.0, 0.5, 0.5]],
        [[5.0, -0.5, -0.5], [5.0, 0.5, 0.5], [5.0, -0.5, 0.5]],
    ])

    def test_quad_occludes_point(self):
        bg = PointCloud(np.array([[10.0, 0, 0]]))
        cube = build_cube_map(bg, self.QUAD, face_resolution=W, splat_radius=0.2, splat_kernel="flat")
        np.testing.assert_allclose(_center_block(cube.face("+x")), 5.0, rtol=1e-3)
        row = col = W // 2
        assert cube.face("+x")[row, col] == pytest.approx(_pixel_depth_oracle(0, row, col, 5.0), rel=1e-6)

    def test_quad_coverage_matches_pixel_centers(self):
        cube = build_cube_map(PointCloud(np.array([[0.0, 0, 30]])), self.QUAD, face_resolution=W,
                              splat_radius=0.01, splat_kernel="flat")
        face = cube.face("+x")
        for row in range(W):
            for col in range(W):
                d = pixel_direction(0, row, col, W)
                hit = max(abs(d[1]), abs(d[2])) / d[0] * 5 <= 0.5
                if hit:
                    assert face[row, col] == pytest.approx(5.0 / d[0], rel=1e-6)
                else:
                    assert np.isinf(face[row, col])

    def test_triangle_behind_sensor_clipped(self):
        tri = np.array([[[-5.0, -50, -2], [50, 0, -2], [-5, 50, -2]]])
        cube = build_cube_map(PointCloud(np.array([[0.0, 0, 30]])), tri, face_resolution=W, splat_radius=0.01)
        down = cube.depth[5]
        rows, cols = np.nonzero(np.isfinite(down))
        assert len(rows) > 0.5 * W * W
        for r, c in zip(rows[::37], cols[::37]):
            d = pixel_direction(5, r, c, W)
            assert down[r, c] == pytest.approx(-2.0 / d[2], rel=1e-6)


class TestQueries:
    def test_sphere_all_rays_hit(self, small_sphere_cube, vld64):
        assert np.all(np.isfinite(small_sphere_cube.depth))
        cloud = query_pattern(small_sphere_cube, vld64, 120.0)
        assert len(cloud) == len(vld64)
        assert np.abs(range_of(cloud.xyz) - 10.0).max() <= 0.05

    def test_max_range_cutoff(self, small_sphere_cube, vld16):
        assert len(query_pattern(small_sphere_cube, vld16, 0.001)) == 0
        with pytest.raises(InvalidInput):
            query_pattern(small_sphere_cube, vld16, 0.0)

    def test_ground_examples(self, ground_cube):
        p = RayPattern(np.radians([0.0, 40.0]), np.radians([-30.0, 5.0]))
        cloud = query_pattern(ground_cube, p, 120.0)
        assert len(cloud) == 1
        assert range_of(cloud.xyz)[0] == pytest.approx(4.0, rel=1e-3)

    def test_ground_every_beam(self, ground_cube):
        spec = SensorSpec("g", 24, -40.0, 6.0, azimuth_resolution=1.0)
        p = synthesize_pattern(spec)
        d = query_depths(ground_cube, p.directions())
        down = p.elevation < 0
        expected = 2.0 / np.sin(-p.elevation[down])
        near = expected <= 20.0
        np.testing.assert_allclose(d[down][near], expected[near], rtol=1e-3)
        assert np.all(np.isinf(d[~down]))

    def test_batch_bit_identical(self, small_sphere_cube):
        pats = [synthesize_pattern(SENSOR_PRESETS[k]) for k in ("VLD-16", "VLD-32", "ONCE-40")]
        ranges = [100.0, 9.99, 120.0]
        batch = query_patterns(small_sphere_cube, pats, ranges)
        for p, r, c in zip(pats, ranges, batch):
            single = query_pattern(small_sphere_cube, p, r)
            assert c.xyz.tobytes() == single.xyz.tobytes()
            assert c.sensor_id == p.sensor_name
        single = query_patterns(small_sphere_cube, pats[:1], 100.0)[0]
        assert single.xyz.tobytes() == batch[0].xyz.tobytes()

    def test_batch_errors(self, small_sphere_cube, vld16):
        with pytest.raises(InvalidInput):
            query_patterns(small_sphere_cube, [], 100.0)
        with pytest.raises(InvalidInput):
            query_patterns(small_sphere_cube, [vld16, vld16], [100.0])


class TestBuild:
    def test_empty_background(self):
        with pytest.raises(EmptyScene):
            build_cube_map(PointCloud(np.zeros((0, 3))))

    @pytest.mark.parametrize("kw", [dict(face_resolution=8), dict(splat_radius=0.0), dict(splat_kernel="gauss")])
    def test_bad_config(self, kw):
        with pytest.raises(InvalidInput):
            build_cube_map(PointCloud(np.ones((1, 3))), **kw)

    def test_degenerate_points_skipped(self):
        cube = build_cube_map(PointCloud(np.array([[0.0, 0, 0], [10, 0, 0]])), face_resolution=W,
                              splat_radius=0.2, splat_kernel="flat")
        assert cube.skipped_points == 1
        assert np.isfinite(cube.face("+x")).any()

    def test_deterministic(self):
        xyz, n = ground_points(-2.0, 10.0, 0.1)
        a = build_cube_map(PointCloud(xyz), face_resolution=128, splat_radius=0.1)
        b = build_cube_map(PointCloud(xyz), face_resolution=128, splat_radius=0.1)
        assert a.depth.tobytes() == b.depth.tobytes()
        assert a.normals.tobytes() == b.normals.tobytes()

    def test_pixel_directions_land_on_own_face(self):
        for f in range(6):
            for r, c in [(0, 0), (W - 1, 3), (W // 2, W // 2), (5, W - 1)]:
                d = pixel_direction(f, r, c, W)
                assert np.argmax(np.abs(d)) == np.argmax(np.abs(FACE_BASIS[f, 0]))
                assert float(d @ FACE_BASIS[f, 0]) > 0


def test_estimate_normals_on_plane():
    xyz, _ = ground_points(-2.0, 3.0, 0.1)
    n = estimate_normals(xyz)
    np.testing.assert_allclose(np.abs(n[:, 2]), 1.0, atol=1e-9)
    # oriented toward the sensor at the origin
    assert np.all(np.einsum("ij,ij->i", n, -xyz) > 0)
