"""Depth cube-map rendering and ray-pattern queries.

Face layout (index: name, forward / right / up axes)::

    0: +x   fwd +x   right +y   up +z
    1: -x   fwd -x   right -y   up +z
    2: +y   fwd +y   right -x   up +z
    3: -y   fwd -y   right +x   up +z
    4: +z   fwd +z   right +y   up -x
    5: -z   fwd -z   right +y   up +x

Pixel ``(row j, column i)`` of a W x W face is the ray through its center,
``fwd + u*right + v*up`` with ``u = 2*(i + 0.5)/W - 1`` and
``v = 2*(j + 0.5)/W - 1``. Stored depth is the distance from the origin
along that pixel-center ray; empty pixels hold ``NO_RETURN`` (+inf).

Each covered pixel also keeps the surface normal of the winning contributor
(int8, scaled by 127; all zeros means "no plane known"). Queries use it to
re-intersect the exact query ray with the pixel's surface plane, which removes
the half-pixel depth error on slanted surfaces such as the ground.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .core import EPSILON, PointCloud
from .errors import EmptyScene, InvalidInput
from .pattern import RayPattern

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ and "NUMBA_THREADING_LAYER" not in os.environ:
    # Prefer OpenMP; the TBB probe warns on older TBB builds.
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

NO_RETURN = np.inf
FACE_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")
FACE_BASIS = np.array(
    [
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[-1, 0, 0], [0, -1, 0], [0, 0, 1]],
        [[0, 1, 0], [-1, 0, 0], [0, 0, 1]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
        [[0, 0, 1], [0, 1, 0], [-1, 0, 0]],
        [[0, 0, -1], [0, 1, 0], [1, 0, 0]],
    ],
    dtype=np.float64,
)
NORMAL_SCALE = 127.0
# Plane refinement may move a depth by at most this fraction of the stored one.
REFINE_LIMIT = 0.1
# Oriented splat depth is clamped to [d0 / 2, 2 * d0] around the point's range.
SPLAT_DEPTH_CLAMP = 2.0
GRAZING_COS = 1e-3
# Neighbour pixels must match the plane prediction within this fraction for
# refinement to apply; otherwise the ray may cross a silhouette.
SILHOUETTE_TOL = 0.01
NEAR_PLANE = 1e-6

SPLAT_KERNELS = ("oriented", "flat")


@dataclass(eq=False)
class DepthCubeMap:
    depth: np.ndarray  # (6, W, W) float32, [face, row, column]
    normals: np.ndarray  # (6, W, W, 3) int8
    face_resolution: int
    skipped_points: int = 0

    @property
    def faces(self) -> np.ndarray:
        return self.depth

    def face(self, name: str) -> np.ndarray:
        return self.depth[FACE_NAMES.index(name)]


def pixel_direction(face: int, row: int, col: int, width: int) -> np.ndarray:
    """Unit direction through a pixel center."""
    u = 2.0 * (col + 0.5) / width - 1.0
    v = 2.0 * (row + 0.5) / width - 1.0
    fwd, right, up = FACE_BASIS[face]
    c = fwd + u * right + v * up
    return c / np.linalg.norm(c)


@numba.njit(cache=True, inline="always")
def _face_of(x, y, z):
    ax, ay, az = abs(x), abs(y), abs(z)
    if ax >= ay and ax >= az:
        return 0 if x >= 0 else 1
    if ay >= az:
        return 2 if y >= 0 else 3
    return 4 if z >= 0 else 5


@numba.njit(cache=True, inline="always")
def _store(depth, nrm, f, j, i, t, n0, n1, n2):
    if t < depth[f, j, i]:
        depth[f, j, i] = t
        nrm[f, j, i, 0] = n0
        nrm[f, j, i, 1] = n1
        nrm[f, j, i, 2] = n2


@numba.njit(cache=True, parallel=True)
def _splat_points(depth, nrm, xyz, normals, oriented, radius, width, basis):
    npts = xyz.shape[0]
    half = 0.5 * width
    for f in numba.prange(6):
        fx, fy, fz = basis[f, 0, 0], basis[f, 0, 1], basis[f, 0, 2]
        rx, ry, rz = basis[f, 1, 0], basis[f, 1, 1], basis[f, 1, 2]
        ux, uy, uz = basis[f, 2, 0], basis[f, 2, 1], basis[f, 2, 2]
        for k in range(npts):
            px, py, pz = xyz[k, 0], xyz[k, 1], xyz[k, 2]
            zc = px * fx + py * fy + pz * fz
            if zc <= NEAR_PLANE:
                continue
            xc = px * rx + py * ry + pz * rz
            yc = px * ux + py * uy + pz * uz
            cu = (xc / zc + 1.0) * half - 0.5
            cv = (yc / zc + 1.0) * half - 0.5
            rpx = radius * half / zc
            if rpx < 1.0:
                rpx = 1.0
            i0 = max(int(math.ceil(cu - rpx)), 0)
            i1 = min(int(math.floor(cu + rpx)), width - 1)
            j0 = max(int(math.ceil(cv - rpx)), 0)
            j1 = min(int(math.floor(cv + rpx)), width - 1)
            if i0 > i1 or j0 > j1:
                continue
            d0 = math.sqrt(px * px + py * py + pz * pz)
            if d0 <= EPSILON:
                continue
            n0 = n1 = n2 = 0.0
            q0 = q1 = q2 = 0
            if oriented:
                n0, n1, n2 = normals[k, 0], normals[k, 1], normals[k, 2]
                nn = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
                if nn > 0.0:
                    n0 /= nn
                    n1 /= nn
                    n2 /= nn
                    if n0 * px + n1 * py + n2 * pz > 0.0:
                        n0, n1, n2 = -n0, -n1, -n2
                    q0 = int(round(n0 * NORMAL_SCALE))
                    q1 = int(round(n1 * NORMAL_SCALE))
                    q2 = int(round(n2 * NORMAL_SCALE))
            npd = n0 * px + n1 * py + n2 * pz
            r2 = rpx * rpx
            for j in range(j0, j1 + 1):
                dv = j - cv
                v = 2.0 * (j + 0.5) / width - 1.0
                for i in range(i0, i1 + 1):
                    du = i - cu
                    if du * du + dv * dv > r2:
                        continue
                    t = d0
                    if npd < 0.0:
                        u = 2.0 * (i + 0.5) / width - 1.0
                        cx = fx + u * rx + v * ux
                        cy = fy + u * ry + v * uy
                        cz = fz + u * rz + v * uz
                        cn = math.sqrt(cx * cx + cy * cy + cz * cz)
                        nd = (n0 * cx + n1 * cy + n2 * cz) / cn
                        if nd < -GRAZING_COS:
                            t = npd / nd
                            if t > d0 * SPLAT_DEPTH_CLAMP:
                                t = d0 * SPLAT_DEPTH_CLAMP
                            elif t < d0 / SPLAT_DEPTH_CLAMP:
                                t = d0 / SPLAT_DEPTH_CLAMP
                    _store(depth, nrm, f, j, i, t, q0, q1, q2)


@numba.njit(cache=True, parallel=True)
def _raster_triangles(depth, nrm, tris, width, basis):
    ntri = tris.shape[0]
    half = 0.5 * width
    for f in numba.prange(6):
        cam = np.empty((3, 3))
        poly = np.empty((4, 3))
        scr = np.empty((4, 2))
        for k in range(ntri):
            # Plane normal in world frame, oriented toward the sensor.
            ax = tris[k, 1, 0] - tris[k, 0, 0]
            ay = tris[k, 1, 1] - tris[k, 0, 1]
            az = tris[k, 1, 2] - tris[k, 0, 2]
            bx = tris[k, 2, 0] - tris[k, 0, 0]
            by = tris[k, 2, 1] - tris[k, 0, 1]
            bz = tris[k, 2, 2] - tris[k, 0, 2]
            n0 = ay * bz - az * by
            n1 = az * bx - ax * bz
            n2 = ax * by - ay * bx
            nn = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
            if nn == 0.0:
                continue
            n0 /= nn
            n1 /= nn
            n2 /= nn
            off = n0 * tris[k, 0, 0] + n1 * tris[k, 0, 1] + n2 * tris[k, 0, 2]
            if off > 0.0:
                n0, n1, n2, off = -n0, -n1, -n2, -off
            if off > -1e-12:
                continue  # plane through the origin: seen edge-on
            # Face-normal components in camera coords.
            cn0 = n0 * basis[f, 1, 0] + n1 * basis[f, 1, 1] + n2 * basis[f, 1, 2]
            cn1 = n0 * basis[f, 2, 0] + n1 * basis[f, 2, 1] + n2 * basis[f, 2, 2]
            cn2 = n0 * basis[f, 0, 0] + n1 * basis[f, 0, 1] + n2 * basis[f, 0, 2]
            for a in range(3):
                for b in range(3):
                    cam[a, b] = (tris[k, a, 0] * basis[f, (b + 1) % 3, 0]
                                 + tris[k, a, 1] * basis[f, (b + 1) % 3, 1]
                                 + tris[k, a, 2] * basis[f, (b + 1) % 3, 2])
            # cam[:, 0] = right, cam[:, 1] = up, cam[:, 2] = forward depth.
            npoly = 0
            for a in range(3):
                c = cam[a]
                d = cam[(a + 1) % 3]
                cin = c[2] >= NEAR_PLANE
                din = d[2] >= NEAR_PLANE
                if cin:
                    poly[npoly, 0] = c[0]
                    poly[npoly, 1] = c[1]
                    poly[npoly, 2] = c[2]
                    npoly += 1
                if cin != din:
                    s = (NEAR_PLANE - c[2]) / (d[2] - c[2])
                    poly[npoly, 0] = c[0] + s * (d[0] - c[0])
                    poly[npoly, 1] = c[1] + s * (d[1] - c[1])
                    poly[npoly, 2] = NEAR_PLANE
                    npoly += 1
            if npoly < 3:
                continue
            for a in range(npoly):
                scr[a, 0] = (poly[a, 0] / poly[a, 2] + 1.0) * half - 0.5
                scr[a, 1] = (poly[a, 1] / poly[a, 2] + 1.0) * half - 0.5
            q0 = int(round(n0 * NORMAL_SCALE))
            q1 = int(round(n1 * NORMAL_SCALE))
            q2 = int(round(n2 * NORMAL_SCALE))
            for s in range(1, npoly - 1):
                x0, y0 = scr[0, 0], scr[0, 1]
                x1, y1 = scr[s, 0], scr[s, 1]
                x2, y2 = scr[s + 1, 0], scr[s + 1, 1]
                area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
                if area == 0.0:
                    continue
                sgn = 1.0 if area > 0.0 else -1.0
                i0 = max(int(math.ceil(min(x0, x1, x2))), 0)
                i1 = min(int(math.floor(max(x0, x1, x2))), width - 1)
                j0 = max(int(math.ceil(min(y0, y1, y2))), 0)
                j1 = min(int(math.floor(max(y0, y1, y2))), width - 1)
                for j in range(j0, j1 + 1):
                    v = 2.0 * (j + 0.5) / width - 1.0
                    for i in range(i0, i1 + 1):
                        e0 = sgn * ((x1 - x0) * (j - y0) - (y1 - y0) * (i - x0))
                        e1 = sgn * ((x2 - x1) * (j - y1) - (y2 - y1) * (i - x1))
                        e2 = sgn * ((x0 - x2) * (j - y2) - (y0 - y2) * (i - x2))
                        if e0 < 0.0 or e1 < 0.0 or e2 < 0.0:
                            continue
                        u = 2.0 * (i + 0.5) / width - 1.0
                        nd = cn0 * u + cn1 * v + cn2
                        if nd >= 0.0:
                            continue
                        t = off / nd * math.sqrt(u * u + v * v + 1.0)
                        _store(depth, nrm, f, j, i, t, q0, q1, q2)


@numba.njit(cache=True, inline="always")
def _same_plane(depth, f, j, i, offset, n0, n1, n2, width, basis):
    # Does pixel (j, i) lie on the plane n.p = offset? Off-face neighbours pass.
    if i < 0 or j < 0 or i >= width or j >= width:
        return True
    dn = np.float64(depth[f, j, i])
    if not dn < np.inf:
        return False
    u = 2.0 * (i + 0.5) / width - 1.0
    v = 2.0 * (j + 0.5) / width - 1.0
    cx = basis[f, 0, 0] + u * basis[f, 1, 0] + v * basis[f, 2, 0]
    cy = basis[f, 0, 1] + u * basis[f, 1, 1] + v * basis[f, 2, 1]
    cz = basis[f, 0, 2] + u * basis[f, 1, 2] + v * basis[f, 2, 2]
    nc = (n0 * cx + n1 * cy + n2 * cz) / math.sqrt(cx * cx + cy * cy + cz * cz)
    if nc >= -GRAZING_COS:
        return False
    tp = offset / nc
    return abs(dn - tp) <= SILHOUETTE_TOL * tp


@numba.njit(cache=True, parallel=True)
def _query(depth, nrm, dirs, width, basis):
    n = dirs.shape[0]
    out = np.empty(n)
    half = 0.5 * width
    for k in numba.prange(n):
        x, y, z = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        f = _face_of(x, y, z)
        zc = x * basis[f, 0, 0] + y * basis[f, 0, 1] + z * basis[f, 0, 2]
        uu = (x * basis[f, 1, 0] + y * basis[f, 1, 1] + z * basis[f, 1, 2]) / zc
        vv = (x * basis[f, 2, 0] + y * basis[f, 2, 1] + z * basis[f, 2, 2]) / zc
        i = int(math.floor((uu + 1.0) * half))
        j = int(math.floor((vv + 1.0) * half))
        i = min(max(i, 0), width - 1)
        j = min(max(j, 0), width - 1)
        dc = np.float64(depth[f, j, i])
        if not dc < np.inf:
            out[k] = np.inf
            continue
        n0 = nrm[f, j, i, 0] / NORMAL_SCALE
        n1 = nrm[f, j, i, 1] / NORMAL_SCALE
        n2 = nrm[f, j, i, 2] / NORMAL_SCALE
        t = dc
        if n0 != 0.0 or n1 != 0.0 or n2 != 0.0:
            u = 2.0 * (i + 0.5) / width - 1.0
            v = 2.0 * (j + 0.5) / width - 1.0
            cx = basis[f, 0, 0] + u * basis[f, 1, 0] + v * basis[f, 2, 0]
            cy = basis[f, 0, 1] + u * basis[f, 1, 1] + v * basis[f, 2, 1]
            cz = basis[f, 0, 2] + u * basis[f, 1, 2] + v * basis[f, 2, 2]
            cn = math.sqrt(cx * cx + cy * cy + cz * cz)
            nx = (n0 * cx + n1 * cy + n2 * cz) / cn
            nr = n0 * x + n1 * y + n2 * z
            ok = nr < -GRAZING_COS and nx < -GRAZING_COS
            if ok:
                di = 1 if (uu + 1.0) * half - i >= 0.5 else -1
                dj = 1 if (vv + 1.0) * half - j >= 0.5 else -1
                ok = _same_plane(depth, f, j, i + di, dc * nx, n0, n1, n2, width, basis) and \
                    _same_plane(depth, f, j + dj, i, dc * nx, n0, n1, n2, width, basis)
            if ok:
                t = dc * nx / nr
                if t > dc * (1.0 + REFINE_LIMIT):
                    t = dc * (1.0 + REFINE_LIMIT)
                elif t < dc / (1.0 + REFINE_LIMIT):
                    t = dc / (1.0 + REFINE_LIMIT)
        out[k] = t
    return out


def estimate_normals(xyz: np.ndarray, k: int = 10, chunk: int = 200_000) -> np.ndarray:
    """PCA normals from k nearest neighbours, oriented toward the origin.

    Points with fewer than three neighbours get a view-facing normal.
    """
    from scipy.spatial import cKDTree

    xyz = np.asarray(xyz, dtype=np.float64)
    n = len(xyz)
    normals = np.zeros((n, 3))
    if n >= 3:
        kk = min(k, n)
        tree = cKDTree(xyz)
        for s in range(0, n, chunk):
            pts = xyz[s:s + chunk]
            _, idx = tree.query(pts, k=kk)
            nb = xyz[idx]
            nb = nb - nb.mean(axis=1, keepdims=True)
            cov = np.einsum("nki,nkj->nij", nb, nb)
            _, vecs = np.linalg.eigh(cov)
            normals[s:s + chunk] = vecs[:, :, 0]
    else:
        normals[:] = -xyz
    flip = np.einsum("ij,ij->i", normals, xyz) > 0
    normals[flip] *= -1.0
    bad = np.linalg.norm(normals, axis=1) == 0
    normals[bad] = -xyz[bad]
    return normals


def build_cube_map(background: PointCloud, triangles: np.ndarray | None = None,
                   face_resolution: int = 2048, splat_radius: float = 0.05,
                   splat_kernel: str = "oriented") -> DepthCubeMap:
    """Z-buffer a splatted background cloud and world-space triangles.

    ``triangles`` is a (T, 3, 3) array of world-frame vertex coordinates.
    The ``oriented`` kernel evaluates each disc's depth on the point's tangent
    plane (normals come from ``background.normals`` or are estimated); the
    ``flat`` kernel uses the point's own range across the whole disc.
    """
    if len(background) == 0:
        raise EmptyScene("scene background is empty")
    if int(face_resolution) != face_resolution or face_resolution < 64:
        raise InvalidInput("face_resolution must be an integer >= 64")
    if not splat_radius > 0:
        raise InvalidInput("splat_radius must be positive")
    if splat_kernel not in SPLAT_KERNELS:
        raise InvalidInput(f"splat_kernel must be one of {SPLAT_KERNELS}")
    width = int(face_resolution)
    xyz = background.xyz
    degenerate = np.sqrt(np.einsum("ij,ij->i", xyz, xyz)) <= EPSILON
    skipped = int(degenerate.sum())
    if skipped:
        xyz = xyz[~degenerate]
    oriented = splat_kernel == "oriented"
    if oriented:
        normals = background.normals
        if normals is None:
            normals = estimate_normals(xyz)
        elif skipped:
            normals = normals[~degenerate]
    else:
        normals = np.zeros((0, 3))
    depth = np.full((6, width, width), np.inf, dtype=np.float32)
    nrm = np.zeros((6, width, width, 3), dtype=np.int8)
    if len(xyz):
        _splat_points(depth, nrm, np.ascontiguousarray(xyz), np.ascontiguousarray(normals, dtype=np.float64),
                      oriented, float(splat_radius), width, FACE_BASIS)
    if triangles is not None and len(triangles):
        tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3))
        _raster_triangles(depth, nrm, tris, width, FACE_BASIS)
    return DepthCubeMap(depth, nrm, width, skipped)


def query_depths(cube: DepthCubeMap, dirs: np.ndarray) -> np.ndarray:
    """Ray distance per unit direction; +inf where nothing was hit."""
    dirs = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    if len(dirs) == 0:
        return np.zeros(0)
    return _query(cube.depth, cube.normals, dirs, cube.face_resolution, FACE_BASIS)


def _to_cloud(dirs, d, max_range, frame_id, sensor_id):
    hit = d <= max_range
    return PointCloud(d[hit, None] * dirs[hit], frame_id=frame_id, sensor_id=sensor_id)


def query_pattern(cube: DepthCubeMap, pattern: RayPattern, max_range: float,
                  frame_id: str = "") -> PointCloud:
    """Sample the cube map along every ray; misses are omitted, order kept."""
    if len(pattern) == 0:
        raise InvalidInput("pattern is empty")
    if not max_range > 0:
        raise InvalidInput("max_range must be positive")
    dirs = pattern.directions()
    return _to_cloud(dirs, query_depths(cube, dirs), max_range, frame_id, pattern.sensor_name)


def query_patterns(cube: DepthCubeMap, patterns: Sequence[RayPattern], max_ranges,
                   frame_id: str = "") -> list[PointCloud]:
    """All patterns in one pass over the cube map; same result as one-by-one."""
    patterns = list(patterns)
    if not patterns:
        raise InvalidInput("at least one pattern is required")
    if np.ndim(max_ranges) == 0:
        max_ranges = [float(max_ranges)] * len(patterns)
    max_ranges = list(max_ranges)
    if len(max_ranges) != len(patterns):
        raise InvalidInput("one max_range per pattern is required")
    for p, r in zip(patterns, max_ranges):
        if len(p) == 0:
            raise InvalidInput("pattern is empty")
        if not r > 0:
            raise InvalidInput("max_range must be positive")
    all_dirs = [p.directions() for p in patterns]
    d = query_depths(cube, np.concatenate(all_dirs))
    out, start = [], 0
    for p, dirs, r in zip(patterns, all_dirs, max_ranges):
        stop = start + len(dirs)
        out.append(_to_cloud(dirs, d[start:stop], r, frame_id, p.sensor_name))
        start = stop
    return out
