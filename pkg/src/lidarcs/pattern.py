"""Ray patterns: recovery from scans, synthesis from sensor specs, beams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numba
import numpy as np

from .core import (
    PointCloud,
    SphericalDirection,
    directions_to_spherical,
    normalize_points,
    spherical_to_directions,
)
from .errors import EmptyInput, InvalidSpec

DEFAULT_TOLERANCE_DEG = 0.05
DEFAULT_GAP_DEG = 0.1
DEFAULT_AZIMUTH_RES_DEG = 0.2


@dataclass(frozen=True, eq=False)
class RayPattern:
    """Deduplicated ray directions of one sensor, sorted by (elevation, azimuth).

    Angles are radians. ``beam_count`` and ``azimuth_resolution`` (degrees)
    are optional metadata carried from a synthesized spec.
    """

    azimuth: np.ndarray
    elevation: np.ndarray
    sensor_name: str = "unknown"
    beam_count: Optional[int] = None
    azimuth_resolution: Optional[float] = None

    def __post_init__(self):
        az = np.asarray(self.azimuth, dtype=np.float64).reshape(-1)
        el = np.asarray(self.elevation, dtype=np.float64).reshape(-1)
        if az.shape != el.shape:
            raise InvalidSpec("azimuth and elevation arrays differ in length")
        if np.any(np.abs(el) > math.pi / 2 + 1e-12):
            raise InvalidSpec("elevation outside [-pi/2, pi/2]")
        order = np.lexsort((az, el))
        az, el = az[order], el[order]
        az.setflags(write=False)
        el.setflags(write=False)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    def __len__(self):
        return len(self.azimuth)

    @property
    def rays(self) -> list[SphericalDirection]:
        return [SphericalDirection(a, e) for a, e in zip(self.azimuth.tolist(), self.elevation.tolist())]

    def directions(self) -> np.ndarray:
        """Unit direction vectors, (N, 3), in pattern order."""
        return spherical_to_directions(self.azimuth, self.elevation)

    @classmethod
    def from_directions(cls, dirs: np.ndarray, sensor_name="unknown", **meta) -> "RayPattern":
        az, el = directions_to_spherical(dirs)
        return cls(az, el, sensor_name=sensor_name, **meta)


@dataclass(frozen=True)
class SensorSpec:
    name: str
    beam_count: int
    elevation_min: float  # degrees
    elevation_max: float  # degrees
    azimuth_resolution: float = DEFAULT_AZIMUTH_RES_DEG  # degrees
    max_range: float = 100.0
    mount_height: float = 2.0

    @property
    def azimuth_steps(self) -> int:
        return int(round(360.0 / self.azimuth_resolution))

    def validate(self) -> None:
        if not isinstance(self.beam_count, (int, np.integer)) or self.beam_count < 1:
            raise InvalidSpec(f"beam_count must be a positive integer, got {self.beam_count!r}")
        if not (math.isfinite(self.elevation_min) and math.isfinite(self.elevation_max)):
            raise InvalidSpec("elevation bounds must be finite")
        if not -90.0 <= self.elevation_min <= self.elevation_max <= 90.0:
            raise InvalidSpec("elevation bounds must satisfy -90 <= min <= max <= 90")
        if self.beam_count > 1 and not self.elevation_min < self.elevation_max:
            raise InvalidSpec("elevation_min must be below elevation_max for multi-beam sensors")
        if not (self.azimuth_resolution > 0 and math.isfinite(self.azimuth_resolution)):
            raise InvalidSpec("azimuth_resolution must be positive")
        steps = 360.0 / self.azimuth_resolution
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise InvalidSpec(f"azimuth_resolution {self.azimuth_resolution} does not divide 360")
        if not self.max_range > 0:
            raise InvalidSpec("max_range must be positive")


# Beam layouts are uniform inside each vertical FOV. Where only a total FOV
# is known (VLD-16, VLD-64) the split follows the physical devices.
SENSOR_PRESETS: dict[str, SensorSpec] = {
    "VLD-16": SensorSpec("VLD-16", 16, -15.0, 15.0, max_range=100.0),
    "VLD-32": SensorSpec("VLD-32", 32, -30.0, 10.0, max_range=100.0),
    "VLD-64": SensorSpec("VLD-64", 64, -24.9, 2.0, max_range=120.0),
    "VLD-128": SensorSpec("VLD-128", 128, -25.0, 15.0, max_range=245.0),
    "ONCE-40": SensorSpec("ONCE-40", 40, -25.0, 15.0, max_range=200.0),
}


def beam_elevations_deg(spec: SensorSpec) -> np.ndarray:
    if spec.beam_count == 1:
        return np.array([(spec.elevation_min + spec.elevation_max) / 2.0])
    b = np.arange(spec.beam_count)
    return spec.elevation_min + b * (spec.elevation_max - spec.elevation_min) / (spec.beam_count - 1)


def synthesize_pattern(spec: SensorSpec) -> RayPattern:
    """Uniform beam/azimuth grid for a parametric sensor."""
    spec.validate()
    el = np.radians(beam_elevations_deg(spec))
    az = np.radians(np.arange(spec.azimuth_steps) * spec.azimuth_resolution)
    ee, aa = np.meshgrid(el, az, indexing="ij")
    return RayPattern(aa.ravel(), ee.ravel(), sensor_name=spec.name,
                      beam_count=spec.beam_count, azimuth_resolution=spec.azimuth_resolution)


@numba.njit(cache=True)
def _greedy_dedup(dirs, chord_tol):
    # 3-D hash grid over unit vectors with cell size = chord tolerance; any
    # two rays within tolerance sit in adjacent cells.
    n = dirs.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    nxt = -np.ones(n, dtype=np.int64)
    heads = numba.typed.Dict.empty(numba.types.int64, numba.types.int64)
    span = np.int64(math.ceil(1.0 / chord_tol)) + 2
    m = 2 * span + 1
    tol2 = chord_tol * chord_tol
    for i in range(n):
        cx = np.int64(math.floor(dirs[i, 0] / chord_tol))
        cy = np.int64(math.floor(dirs[i, 1] / chord_tol))
        cz = np.int64(math.floor(dirs[i, 2] / chord_tol))
        dup = False
        for ox in range(-1, 2):
            for oy in range(-1, 2):
                for oz in range(-1, 2):
                    key = ((cx + ox + span) * m + (cy + oy + span)) * m + (cz + oz + span)
                    j = np.int64(-1)
                    if key in heads:
                        j = heads[key]
                    while j >= 0:
                        d0 = dirs[i, 0] - dirs[j, 0]
                        d1 = dirs[i, 1] - dirs[j, 1]
                        d2 = dirs[i, 2] - dirs[j, 2]
                        if d0 * d0 + d1 * d1 + d2 * d2 <= tol2:
                            dup = True
                            break
                        j = nxt[j]
                    if dup:
                        break
                if dup:
                    break
            if dup:
                break
        if not dup:
            keep[i] = True
            key = ((cx + span) * m + (cy + span)) * m + (cz + span)
            if key in heads:
                nxt[i] = heads[key]
            heads[key] = i
    return keep


def dedup_directions(dirs: np.ndarray, tolerance_deg: float) -> np.ndarray:
    """Greedy first-come dedup; returns a keep-mask over ``dirs``."""
    chord = 2.0 * math.sin(math.radians(tolerance_deg) / 2.0)
    return _greedy_dedup(np.ascontiguousarray(dirs, dtype=np.float64), chord)


def extract_pattern(frames: Sequence[PointCloud], tolerance: float = DEFAULT_TOLERANCE_DEG,
                    sensor_name: str = "extracted") -> RayPattern:
    """Recover a sensor's ray pattern from one or more scanned frames.

    Every point is projected onto the unit sphere; rays from all frames are
    merged and duplicates (within ``tolerance`` degrees great-circle) are
    dropped, keeping the first occurrence.
    """
    if not tolerance > 0:
        raise InvalidSpec("tolerance must be positive")
    frames = list(frames)
    if not frames:
        raise EmptyInput("no frames given")
    chunks = [normalize_points(f.xyz)[0] for f in frames]
    dirs = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    if len(dirs) == 0:
        raise EmptyInput("all frames are empty or degenerate")
    keep = dedup_directions(dirs, tolerance)
    return RayPattern.from_directions(dirs[keep], sensor_name=sensor_name)


@dataclass(frozen=True, eq=False)
class Beam:
    index: int
    elevation: float  # radians, mean of members
    members: np.ndarray  # indices into the decomposed input


def cluster_elevations(elevation: np.ndarray, gap_threshold: float = DEFAULT_GAP_DEG) -> list[Beam]:
    """1-D gap clustering; ``gap_threshold`` in degrees."""
    el = np.asarray(elevation, dtype=np.float64).reshape(-1)
    if len(el) == 0:
        raise EmptyInput("nothing to decompose")
    order = np.argsort(el, kind="stable")
    srt = el[order]
    cuts = np.nonzero(np.diff(srt) > math.radians(gap_threshold))[0] + 1
    beams = []
    for b, idx in enumerate(np.split(order, cuts)):
        idx = np.sort(idx)
        beams.append(Beam(b, float(np.mean(el[idx])), idx))
    return beams


def point_elevations(cloud: PointCloud) -> tuple[np.ndarray, np.ndarray]:
    """Elevations of the non-degenerate points and their indices."""
    dirs, _, valid = normalize_points(cloud.xyz)
    _, el = directions_to_spherical(dirs)
    return el, np.nonzero(valid)[0]


def beam_decompose(obj: Union[RayPattern, PointCloud], gap_threshold: float = DEFAULT_GAP_DEG) -> list[Beam]:
    """Split rays (or points) into scan lines, indexed bottom to top.

    For point clouds, points at the origin have no elevation and are not
    assigned to any beam; member indices refer to the original cloud.
    """
    if isinstance(obj, RayPattern):
        return cluster_elevations(obj.elevation, gap_threshold)
    el, idx = point_elevations(obj)
    beams = cluster_elevations(el, gap_threshold)
    return [Beam(b.index, b.elevation, idx[b.members]) for b in beams]


def beam_elevations(obj, gap_threshold: float = DEFAULT_GAP_DEG) -> np.ndarray:
    """Beam elevations in radians, ascending."""
    return np.array([b.elevation for b in beam_decompose(obj, gap_threshold)])


def pattern_distance(a: RayPattern, b: RayPattern, gap_threshold: float = DEFAULT_GAP_DEG) -> float:
    """Symmetric mean nearest-beam elevation distance, in degrees."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("pattern_distance needs two nonempty patterns")
    ea = np.degrees(beam_elevations(a, gap_threshold))
    eb = np.degrees(beam_elevations(b, gap_threshold))
    d = np.abs(ea[:, None] - eb[None, :])
    return float(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))
