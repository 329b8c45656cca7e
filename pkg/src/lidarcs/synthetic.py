"""Procedural scenes: analytic fixtures and a small street generator."""

from __future__ import annotations

import math

import numpy as np

from .core import Category, PointCloud
from .scene import PlacedObject, Scene, box_mesh

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# width, length, height in meters
TYPICAL_DIMS = {
    Category.CAR: (1.9, 4.5, 1.6),
    Category.TRUCK: (2.5, 8.0, 3.2),
    Category.PEDESTRIAN: (0.6, 0.7, 1.75),
    Category.BICYCLIST: (0.7, 1.8, 1.7),
    Category.MOTORCYCLIST: (0.9, 2.2, 1.6),
}


def fibonacci_sphere(n: int, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Near-uniform points on a sphere around the origin and inward normals."""
    k = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = k * GOLDEN_ANGLE
    dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    return radius * dirs, -dirs


def sphere_scene(radius: float = 10.0, n_points: int = 2_000_000) -> Scene:
    xyz, normals = fibonacci_sphere(n_points, radius)
    return Scene(PointCloud(xyz, normals=normals, frame_id="sphere"))


def ground_points(height: float = -2.0, radius: float = 65.0, spacing: float = 0.07) -> tuple[np.ndarray, np.ndarray]:
    """Square grid on the plane z = height, cropped to a disc."""
    ticks = np.arange(-radius, radius + spacing / 2, spacing)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    keep = gx * gx + gy * gy <= radius * radius
    xyz = np.stack([gx[keep], gy[keep], np.full(keep.sum(), height)], axis=1)
    normals = np.zeros_like(xyz)
    normals[:, 2] = 1.0
    return xyz, normals


def ground_scene(height: float = -2.0, radius: float = 65.0, spacing: float = 0.07) -> Scene:
    xyz, normals = ground_points(height, radius, spacing)
    return Scene(PointCloud(xyz, normals=normals, frame_id="ground"))


def box_surface_points(center, dims, spacing: float, yaw: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Grid samples on the four vertical walls and the roof of a box.

    ``dims`` is (size_x, size_y, height) before yaw; ``center`` is bottom-center.
    """
    sx, sy, h = dims
    pts, nrm = [], []

    def grid(a, b):
        return np.arange(-a / 2, a / 2 + 1e-9, spacing), np.arange(0.0, b + 1e-9, spacing)

    for sign in (-1.0, 1.0):
        us, zs = grid(sy, h)
        uu, zz = np.meshgrid(us, zs)
        pts.append(np.stack([np.full(uu.size, sign * sx / 2), uu.ravel(), zz.ravel()], axis=1))
        nrm.append(np.tile([sign, 0.0, 0.0], (uu.size, 1)))
        us, zs = grid(sx, h)
        uu, zz = np.meshgrid(us, zs)
        pts.append(np.stack([uu.ravel(), np.full(uu.size, sign * sy / 2), zz.ravel()], axis=1))
        nrm.append(np.tile([0.0, sign, 0.0], (uu.size, 1)))
    ax = np.arange(-sx / 2, sx / 2 + 1e-9, spacing)
    ay = np.arange(-sy / 2, sy / 2 + 1e-9, spacing)
    gx, gy = np.meshgrid(ax, ay)
    pts.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, h)], axis=1))
    nrm.append(np.tile([0.0, 0.0, 1.0], (gx.size, 1)))
    p, n = np.concatenate(pts), np.concatenate(nrm)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return p @ rot.T + np.asarray(center, dtype=np.float64), n @ rot.T


def street_background(seed: int = 0, ground_radius: float = 75.0, ground_spacing: float = 0.1,
                      wall_spacing: float = 0.1, height: float = -2.0) -> PointCloud:
    """Ground disc plus two rows of buildings along the x axis."""
    rng = np.random.default_rng(seed)
    xyz, nrm = [], []
    g, gn = ground_points(height, ground_radius, ground_spacing)
    xyz.append(g)
    nrm.append(gn)
    for side in (-1.0, 1.0):
        x = -ground_radius * 0.8
        while x < ground_radius * 0.8:
            length = float(rng.uniform(8.0, 20.0))
            depth = float(rng.uniform(6.0, 12.0))
            tall = float(rng.uniform(5.0, 15.0))
            y = side * (float(rng.uniform(14.0, 18.0)) + depth / 2)
            p, n = box_surface_points((x + length / 2, y, height), (length, depth, tall), wall_spacing)
            xyz.append(p)
            nrm.append(n)
            x += length + float(rng.uniform(2.0, 6.0))
    return PointCloud(np.concatenate(xyz), normals=np.concatenate(nrm), frame_id=f"street{seed}")


def random_objects(seed: int, count: int = 10, ground_z: float = -2.0, max_range: float = 60.0,
                   categories=None) -> list[PlacedObject]:
    """Non-overlapping box objects on the road between the building rows.

    The first five objects cycle through every category so each frame has at
    least one of each when ``count >= 5``.
    """
    rng = np.random.default_rng(seed)
    cats = list(categories) if categories is not None else list(Category)
    placed: list[PlacedObject] = []
    tries = 0
    while len(placed) < count and tries < count * 200:
        tries += 1
        cat = cats[len(placed) % len(cats)] if len(placed) < len(cats) else cats[rng.integers(len(cats))]
        w, l, h = TYPICAL_DIMS[cat]
        x = float(rng.uniform(-max_range, max_range))
        y = float(rng.uniform(-11.0, 11.0))
        if math.hypot(x, y) < 5.0 or math.hypot(x, y) > max_range:
            continue
        r = math.hypot(w, l) / 2
        if any(math.hypot(x - o.position[0], y - o.position[1]) < r + math.hypot(o.dims[0], o.dims[1]) / 2 + 0.5
               for o in placed):
            continue
        yaw = float(rng.uniform(-math.pi, math.pi))
        placed.append(PlacedObject(box_mesh(w, l, h), (x, y, ground_z), yaw, cat, (w, l, h)))
    return placed
