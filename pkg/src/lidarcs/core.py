"""Geometry primitives and domain types.

Frame convention: right-handed, z up, sensor at the origin. Mount height is
folded into the scene (the ground of a sensor mounted 2 m high sits at
z = -2). Azimuth is measured counterclockwise about +z from +x in [0, 2*pi);
elevation is the angle above the xy-plane in [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegenerateRange, InvalidInput, UnknownCategory

EPSILON = 1e-6  # meters; below any physical return
TWO_PI = 2.0 * math.pi


class Category(str, Enum):
    CAR = "Car"
    TRUCK = "Truck"
    PEDESTRIAN = "Pedestrian"
    BICYCLIST = "Bicyclist"
    MOTORCYCLIST = "Motorcyclist"

    @classmethod
    def parse(cls, value) -> "Category":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise UnknownCategory(f"unknown category {value!r}") from None


CATEGORIES = tuple(Category)


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(theta) == 0:
        r = math.remainder(float(theta), TWO_PI)
        return math.pi if r <= -math.pi else r
    t = np.asarray(theta, dtype=np.float64)
    r = np.remainder(t + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, math.pi, r)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    intensity: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise InvalidInput(f"non-finite point {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class UnitRay:
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        n2 = self.dx * self.dx + self.dy * self.dy + self.dz * self.dz
        if abs(n2 - 1.0) > 1e-9:
            raise InvalidInput(f"ray is not unit length (|d|^2={n2!r})")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=np.float64)


@dataclass(frozen=True)
class SphericalDirection:
    azimuth: float
    elevation: float


@dataclass(eq=False)
class PointCloud:
    """An ordered set of points stored column-wise.

    ``xyz`` is (N, 3) float64, ``intensity`` is (N,). ``normals`` is an
    optional (N, 3) array used only when the cloud serves as a rendering
    background; it is never serialized.
    """

    xyz: np.ndarray
    intensity: Optional[np.ndarray] = None
    frame_id: str = ""
    sensor_id: Optional[str] = None
    normals: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise InvalidInput(f"xyz must have shape (N, 3), got {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise InvalidInput("point cloud contains non-finite coordinates")
        self.xyz = xyz
        if self.intensity is None:
            self.intensity = np.zeros(len(xyz), dtype=np.float64)
        else:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(self.intensity) != len(xyz):
                raise InvalidInput("intensity length does not match point count")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != len(xyz):
                raise InvalidInput("normals length does not match point count")

    def __len__(self):
        return len(self.xyz)

    @property
    def points(self) -> list[Point3]:
        return [Point3(*p, i) for p, i in zip(self.xyz.tolist(), self.intensity.tolist())]

    @classmethod
    def from_points(cls, points, frame_id="", sensor_id=None) -> "PointCloud":
        pts = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in pts], dtype=np.float64).reshape(-1, 3)
        inten = np.array([p.intensity for p in pts], dtype=np.float64)
        return cls(xyz, inten, frame_id=frame_id, sensor_id=sensor_id)

    def subset(self, mask_or_index) -> "PointCloud":
        normals = None if self.normals is None else self.normals[mask_or_index]
        return PointCloud(self.xyz[mask_or_index], self.intensity[mask_or_index],
                          frame_id=self.frame_id, sensor_id=self.sensor_id, normals=normals)


def _xyz(p) -> np.ndarray:
    if isinstance(p, Point3):
        return p.as_array()
    return np.asarray(p, dtype=np.float64)


def range_of(p):
    """Euclidean distance from the sensor origin.

    Accepts a Point3, a length-3 sequence, or an (N, 3) array (vectorized).
    """
    a = _xyz(p)
    if a.ndim == 1:
        return float(math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]))
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def normalize_to_sphere(p) -> UnitRay:
    """Project a point onto the unit sphere centred at the sensor."""
    a = _xyz(p)
    r = range_of(a)
    if not r > EPSILON:
        raise DegenerateRange(f"point {tuple(a.tolist())} is at the sensor origin")
    d = a / r
    # Renormalize once more so the unit-norm invariant holds to 1e-9 even
    # for extreme magnitudes.
    d = d / math.sqrt(float(d @ d))
    return UnitRay(float(d[0]), float(d[1]), float(d[2]))


def normalize_points(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized normalization.

    Returns (unit directions of valid points, their ranges, validity mask);
    degenerate points are dropped.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    r = range_of(xyz) if len(xyz) else np.zeros(0)
    valid = r > EPSILON
    return xyz[valid] / r[valid, None], r[valid], valid


def spherical_of(ray: UnitRay) -> SphericalDirection:
    az, el = directions_to_spherical(ray.as_array()[None, :])
    return SphericalDirection(float(az[0]), float(el[0]))


def ray_of(s: SphericalDirection) -> UnitRay:
    d = spherical_to_directions(np.array([s.azimuth]), np.array([s.elevation]))[0]
    return UnitRay(float(d[0]), float(d[1]), float(d[2]))


def directions_to_spherical(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(N, 3) unit vectors -> (azimuth in [0, 2pi), elevation in [-pi/2, pi/2])."""
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    horiz = np.hypot(dirs[:, 0], dirs[:, 1])
    el = np.arctan2(dirs[:, 2], horiz)
    az = np.arctan2(dirs[:, 1], dirs[:, 0])
    az = np.where(horiz == 0.0, 0.0, az)
    az = np.where(az < 0.0, az + TWO_PI, az)
    az = np.where(az >= TWO_PI, 0.0, az)
    return az, el


def spherical_to_directions(azimuth, elevation) -> np.ndarray:
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angle (radians) between unit vectors, broadcast over rows.

    Uses the chord length, which stays well conditioned for tiny angles.
    """
    chord = np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


@dataclass(frozen=True)
class ObjectAnnotation:
    """7-DoF box plus category.

    (x, y, z) is the box center. ``length`` runs along the heading given by
    ``yaw`` (counterclockwise about +z from +x); ``width`` is perpendicular.
    """

    category: Category
    x: float
    y: float
    z: float
    width: float
    length: float
    height: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "category", Category.parse(self.category))
        vals = (self.x, self.y, self.z, self.width, self.length, self.height, self.yaw)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidInput("annotation has non-finite fields")
        if not (self.width > 0 and self.length > 0 and self.height > 0):
            raise InvalidInput("box dimensions must be positive")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def planar_range(self) -> float:
        return math.hypot(self.x, self.y)

    def bev_corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def volume(self) -> float:
        return self.width * self.length * self.height


@dataclass(frozen=True)
class Detection:
    annotation: ObjectAnnotation
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidInput(f"detection score {self.score!r} outside [0, 1]")
