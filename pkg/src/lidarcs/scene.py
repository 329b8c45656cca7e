"""Scenes, frame simulation and automatic annotation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Category, ObjectAnnotation, PointCloud
from .cubemap import DepthCubeMap, build_cube_map, query_patterns
from .errors import EmptyScene, InvalidInput
from .pattern import RayPattern

BOX_SLACK = 0.01


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise InvalidInput("mesh has non-finite vertices")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InvalidInput("mesh triangle index out of range")

    def triangle_vertices(self) -> np.ndarray:
        return self.vertices[self.triangles]


def box_mesh(width: float, length: float, height: float) -> TriangleMesh:
    """Closed box in object frame: length along +x, width along +y, z in [0, h]."""
    hl, hw = length / 2.0, width / 2.0
    v = np.array([[sx * hl, sy * hw, z] for z in (0.0, height) for sy in (-1, 1) for sx in (-1, 1)])
    # vertex id = 4*top + 2*(sy>0) + (sx>0)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(v, np.array(tris))


@dataclass(eq=False)
class PlacedObject:
    """A mesh posed in the world.

    The mesh lives in its object frame with the origin at the bottom center of
    its box, length along +x and width along +y. ``position`` is where that
    origin lands in the world.
    """

    mesh: TriangleMesh
    position: tuple[float, float, float]
    yaw: float
    category: Category
    dims: tuple[float, float, float]  # width, length, height

    def __post_init__(self):
        self.category = Category.parse(self.category)
        self.position = tuple(float(c) for c in self.position)
        self.dims = tuple(float(c) for c in self.dims)
        self.yaw = float(self.yaw)
        if len(self.position) != 3 or len(self.dims) != 3:
            raise InvalidInput("position and dims need three components")
        w, l, h = self.dims
        if not (w > 0 and l > 0 and h > 0):
            raise InvalidInput("object dims must be positive")
        v = self.mesh.vertices
        if len(v):
            ok = (np.all(np.abs(v[:, 0]) <= l / 2 * (1 + BOX_SLACK))
                  and np.all(np.abs(v[:, 1]) <= w / 2 * (1 + BOX_SLACK))
                  and np.all(v[:, 2] >= -h * BOX_SLACK)
                  and np.all(v[:, 2] <= h * (1 + BOX_SLACK)))
            if not ok:
                raise InvalidInput("mesh does not fit its annotation box")

    def world_vertices(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return self.mesh.vertices @ rot.T + np.asarray(self.position)

    def world_triangles(self) -> np.ndarray:
        return self.world_vertices()[self.mesh.triangles]

    def annotation(self) -> ObjectAnnotation:
        w, l, h = self.dims
        x, y, z = self.position
        return ObjectAnnotation(self.category, x, y, z + h / 2.0, w, l, h, self.yaw)


@dataclass(eq=False)
class Scene:
    background: PointCloud
    objects: list[PlacedObject] = field(default_factory=list)

    def object_triangles(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, 3, 3))
        return np.concatenate([o.world_triangles() for o in self.objects])


@dataclass
class RenderConfig:
    face_resolution: int = 2048
    splat_radius: float = 0.05
    splat_kernel: str = "oriented"
    max_range: float = 120.0


def annotate(scene: Scene) -> list[ObjectAnnotation]:
    return [o.annotation() for o in scene.objects]


def render_scene(scene: Scene, config: Optional[RenderConfig] = None) -> DepthCubeMap:
    config = config or RenderConfig()
    if len(scene.background) == 0:
        raise EmptyScene("scene background is empty")
    return build_cube_map(scene.background, scene.object_triangles(), config.face_resolution,
                          config.splat_radius, config.splat_kernel)


def simulate_frame(scene: Scene, patterns: Sequence[RayPattern], config: Optional[RenderConfig] = None,
                   max_ranges=None, frame_id: str = "") -> tuple[list[PointCloud], list[ObjectAnnotation]]:
    """Render the scene once and query every pattern against the same cube map.

    All returned clouds share one scene and one annotation list.
    """
    patterns = list(patterns)
    if not patterns:
        raise InvalidInput("at least one pattern is required")
    config = config or RenderConfig()
    if max_ranges is None:
        max_ranges = [config.max_range] * len(patterns)
    cube = render_scene(scene, config)
    clouds = query_patterns(cube, patterns, max_ranges, frame_id=frame_id)
    return clouds, annotate(scene)
