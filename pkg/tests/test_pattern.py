import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scipy.spatial import cKDTree

from lidarcs.core import PointCloud
from lidarcs.cubemap import query_pattern
from lidarcs.errors import EmptyInput, InvalidSpec
from lidarcs.pattern import (
    RayPattern,
    SENSOR_PRESETS,
    SensorSpec,
    beam_decompose,
    beam_elevations,
    dedup_directions,
    extract_pattern,
    pattern_distance,
    synthesize_pattern,
)


def _unit(n, seed):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _max_mismatch_deg(a, b):
    """Largest angle from any ray in ``a`` to its nearest ray in ``b``, both ways."""
    da, db = a.directions(), b.directions()
    ta, tb = cKDTree(da), cKDTree(db)
    chord = max(tb.query(da)[0].max(), ta.query(db)[0].max())
    return math.degrees(2 * math.asin(min(1.0, chord / 2)))


def _brute_dedup(dirs, tol_deg):
    """Reference greedy dedup: O(n^2) angle checks against kept rays."""
    kept = []
    for i, d in enumerate(dirs):
        if all(math.degrees(math.acos(min(1.0, float(d @ dirs[k])))) > tol_deg for k in kept):
            kept.append(i)
    mask = np.zeros(len(dirs), bool)
    mask[kept] = True
    return mask


class TestSynthesize:
    def test_vld16_counts(self, vld16):
        assert len(vld16) == 16 * 1800
        np.testing.assert_allclose(np.degrees(np.unique(vld16.elevation)), np.arange(-15, 16, 2), atol=1e-12)

    def test_single_beam_four_rays(self):
        p = synthesize_pattern(SensorSpec("one", 1, 0.0, 0.0, azimuth_resolution=90.0))
        assert len(p) == 4
        np.testing.assert_array_equal(p.elevation, 0.0)
        np.testing.assert_allclose(np.degrees(p.azimuth), [0, 90, 180, 270])

    def test_vld32_fov(self):
        p = synthesize_pattern(SENSOR_PRESETS["VLD-32"])
        assert len(p) == 32 * 1800
        assert np.degrees(p.elevation.min()) == pytest.approx(-30)
        assert np.degrees(p.elevation.max()) == pytest.approx(10)

    @pytest.mark.parametrize("kw", [
        dict(beam_count=0),
        dict(elevation_min=5.0, elevation_max=-5.0),
        dict(elevation_min=3.0, elevation_max=3.0),
        dict(azimuth_resolution=0.37),
        dict(azimuth_resolution=0.0),
        dict(elevation_min=-95.0),
    ])
    def test_invalid_specs(self, kw):
        base = dict(name="s", beam_count=4, elevation_min=-10.0, elevation_max=10.0)
        base.update(kw)
        with pytest.raises(InvalidSpec):
            synthesize_pattern(SensorSpec(**base))

    def test_az_res_point_three_accepted(self):
        assert len(synthesize_pattern(SensorSpec("s", 2, -1, 1, azimuth_resolution=0.3))) == 2 * 1200

    def test_pattern_sorted_and_frozen(self, coarse_spec):
        p = synthesize_pattern(coarse_spec)
        assert np.all(np.diff(p.elevation) >= 0)
        with pytest.raises(ValueError):
            p.azimuth[0] = 1.0


class TestDedup:
    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        base = _unit(300, 1)
        jitter = base[rng.integers(0, 300, 300)] + rng.normal(scale=3e-4, size=(300, 3))
        dirs = np.concatenate([base, jitter / np.linalg.norm(jitter, axis=1, keepdims=True)])
        np.testing.assert_array_equal(dedup_directions(dirs, 0.05), _brute_dedup(dirs, 0.05))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_idempotent_and_well_separated(self, seed):
        rng = np.random.default_rng(seed)
        dirs = _unit(200, seed)
        dirs = np.concatenate([dirs, dirs[rng.integers(0, 200, 100)]])
        kept = dirs[dedup_directions(dirs, 2.0)]
        assert dedup_directions(kept, 2.0).all()
        ang = np.degrees(np.arccos(np.clip(kept @ kept.T, -1, 1)))
        np.fill_diagonal(ang, 180)
        assert ang.min() > 2.0

    def test_duplicated_rays_at_two_ranges(self, coarse_spec):
        p = synthesize_pattern(coarse_spec)
        d = p.directions()
        frame = PointCloud(np.concatenate([5 * d, 9 * d]))
        got = extract_pattern([frame], 0.05)
        assert len(got) == len(p)
        assert _max_mismatch_deg(got, p) < 1e-6

    def test_order_invariance_of_exact_pattern(self, coarse_spec):
        d = synthesize_pattern(coarse_spec).directions()
        rev = extract_pattern([PointCloud(d[::-1] * 3)])
        fwd = extract_pattern([PointCloud(d * 3)])
        assert len(rev) == len(fwd)
        assert _max_mismatch_deg(rev, fwd) < 1e-6

    def test_merge_monotone(self):
        d = _unit(500, 9)
        one = extract_pattern([PointCloud(d[:300])])
        two = extract_pattern([PointCloud(d[:300]), PointCloud(d[200:])])
        assert len(two) >= len(one)


class TestExtract:
    def test_recovers_generating_pattern(self, small_sphere_cube, vld16):
        cloud = query_pattern(small_sphere_cube, vld16, 120.0)
        assert len(cloud) == len(vld16)
        got = extract_pattern([cloud], 0.05)
        assert len(got) == len(vld16)
        assert _max_mismatch_deg(got, vld16) <= 0.05

    def test_half_dropout_merge(self, coarse_spec):
        p = synthesize_pattern(coarse_spec)
        d = p.directions()
        mask = np.random.default_rng(0).random(len(d)) < 0.5
        got = extract_pattern([PointCloud(7 * d[mask]), PointCloud(7 * d[~mask])])
        assert len(got) == len(p)
        assert _max_mismatch_deg(got, p) < 1e-6

    def test_errors(self):
        with pytest.raises(EmptyInput):
            extract_pattern([])
        with pytest.raises(EmptyInput):
            extract_pattern([PointCloud(np.zeros((3, 3)))])
        with pytest.raises(InvalidSpec):
            extract_pattern([PointCloud(np.ones((1, 3)))], tolerance=0)


class TestBeams:
    def test_vld16_beams(self, vld16):
        beams = beam_decompose(vld16)
        assert len(beams) == 16
        np.testing.assert_allclose([math.degrees(b.elevation) for b in beams], np.arange(-15, 16, 2), atol=1e-9)
        assert sum(len(b.members) for b in beams) == len(vld16)

    def test_single_and_close_rays(self):
        assert len(beam_decompose(RayPattern([0.0], [0.0]))) == 1
        p = RayPattern([0.0, 1.0], np.radians([0.0, 0.01]))
        assert len(beam_decompose(p, 0.1)) == 1

    def test_cloud_skips_origin_points(self):
        c = PointCloud(np.array([[1.0, 0, 0], [0, 0, 0], [1, 0, 1]]))
        beams = beam_decompose(c)
        assert [b.members.tolist() for b in beams] == [[0], [2]]

    def test_distance_examples(self, vld16, vld64):
        def beams(*deg):
            return RayPattern(np.zeros(len(deg)), np.radians(deg))

        assert pattern_distance(vld16, vld16) == 0.0
        assert pattern_distance(beams(0.0), beams(2.0)) == pytest.approx(2.0)
        assert pattern_distance(beams(-1.0, 1.0), beams(0.0)) == pytest.approx(1.0)
        ea, eb = np.degrees(beam_elevations(vld16)), np.degrees(beam_elevations(vld64))
        ab = np.mean([min(abs(x - y) for y in eb) for x in ea])
        ba = np.mean([min(abs(x - y) for x in ea) for y in eb])
        assert pattern_distance(vld16, vld64) == pytest.approx((ab + ba) / 2, abs=1e-12)
        assert pattern_distance(vld16, vld64) > 0
