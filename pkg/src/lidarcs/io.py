"""Readers and writers for clouds, patterns, meshes, annotations and scenes.

Formats
-------
cloud (``.bin``)
    Little-endian float32 quadruples ``x y z intensity``, no header.
pattern (text)
    ``# sensor=<name> rays=<count>`` then one ``<azimuth_deg> <elevation_deg>``
    line per ray, 6 decimals, sorted by (elevation, azimuth).
annotations (JSON Lines)
    One object per line with ``frame_id, category, x, y, z, width, length,
    height, yaw`` (radians) and optional ``score``. A line holding only
    ``frame_id`` declares a frame without objects.
scene (JSON)
    ``{"background": <cloud path>, "objects": [{"mesh", "position", "yaw",
    "dims", "category"}]}``; relative paths resolve against the scene file.
meshes
    PLY (ascii, binary little/big endian) and Wavefront OBJ, triangles only.
"""

from __future__ import annotations

import json
import math
import os
import re
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Category, Detection, ObjectAnnotation, PointCloud
from .errors import (
    InvalidInput,
    IoFailure,
    LidarCSError,
    MalformedHeader,
    MalformedLine,
    MalformedRecord,
    TruncatedFile,
    UnknownCategory,
)
from .pattern import RayPattern
from .scene import PlacedObject, Scene, TriangleMesh

CLOUD_DTYPE = np.dtype("<f4")
_PATTERN_HEADER = re.compile(r"^#\s*sensor=(\S+)\s+rays=(\d+)\s*$")
ANNOTATION_FIELDS = ("x", "y", "z", "width", "length", "height", "yaw")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"not UTF-8 text ({exc.reason})", path=path) from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path, data, mode="wb"):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, mode, **({} if "b" in mode else {"encoding": "utf-8"})) as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


# -- point clouds -----------------------------------------------------------

def read_cloud(path, frame_id: Optional[str] = None, sensor_id: Optional[str] = None) -> PointCloud:
    raw = _read_bytes(path)
    if len(raw) % 16:
        raise TruncatedFile(f"{len(raw)} bytes is not a multiple of 16", path=path)
    arr = np.frombuffer(raw, dtype=CLOUD_DTYPE).reshape(-1, 4)
    if not np.all(np.isfinite(arr)):
        raise MalformedRecord("cloud contains non-finite values", path=path)
    if frame_id is None:
        frame_id = Path(path).stem
    return PointCloud(arr[:, :3].astype(np.float64), arr[:, 3].astype(np.float64),
                      frame_id=frame_id, sensor_id=sensor_id)


def write_cloud(path, cloud: PointCloud) -> None:
    arr = np.empty((len(cloud), 4), dtype=CLOUD_DTYPE)
    arr[:, :3] = cloud.xyz
    arr[:, 3] = cloud.intensity
    _write(path, arr.tobytes())


# -- ray patterns ------------------------------------------------------------

def format_pattern(pattern: RayPattern) -> str:
    name = pattern.sensor_name
    if not name or re.search(r"\s", name):
        raise InvalidInput(f"sensor name {name!r} must be a non-empty token without whitespace")
    az = np.degrees(pattern.azimuth)
    el = np.degrees(pattern.elevation)
    lines = [f"# sensor={name} rays={len(pattern)}"]
    lines += [f"{a:.6f} {e:.6f}" for a, e in zip(az.tolist(), el.tolist())]
    return "\n".join(lines) + "\n"


def write_pattern(path, pattern: RayPattern) -> None:
    _write(path, format_pattern(pattern), mode="w")


def parse_pattern(text: str, path=None) -> RayPattern:
    lines = text.splitlines()
    if not lines:
        raise MalformedHeader("missing header", path=path, line=1)
    m = _PATTERN_HEADER.match(lines[0])
    if not m:
        raise MalformedHeader("expected '# sensor=<name> rays=<count>'", path=path, line=1)
    name, count = m.group(1), int(m.group(2))
    body = [(n, ln) for n, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != count:
        raise MalformedHeader(f"header declares {count} rays but file has {len(body)}", path=path, line=1)
    az = np.empty(count)
    el = np.empty(count)
    for k, (n, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != 2:
            raise MalformedLine("expected '<azimuth_deg> <elevation_deg>'", path=path, line=n)
        try:
            a, e = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedLine("non-numeric angle", path=path, line=n) from None
        if not (math.isfinite(a) and math.isfinite(e)) or abs(e) > 90.0:
            raise MalformedLine("angle out of range", path=path, line=n)
        az[k], el[k] = a, e
    az = np.radians(np.mod(az, 360.0))
    az[az >= 2 * math.pi] = 0.0
    return RayPattern(az, np.radians(el), sensor_name=name)


def read_pattern(path) -> RayPattern:
    return parse_pattern(_read_text(path), path=path)


# -- annotations -------------------------------------------------------------

def annotation_record(frame_id: str, ann: ObjectAnnotation, score: Optional[float] = None) -> dict:
    rec = {"frame_id": frame_id, "category": ann.category.value}
    for k in ANNOTATION_FIELDS:
        rec[k] = float(getattr(ann, k))
    if score is not None:
        rec["score"] = float(score)
    return rec


def write_annotations(path, frames: dict) -> None:
    """Write ``{frame_id: [ObjectAnnotation | Detection, ...]}`` as JSON Lines."""
    out = []
    for frame_id, items in frames.items():
        if not items:
            out.append(json.dumps({"frame_id": str(frame_id)}))
        for it in items:
            if isinstance(it, Detection):
                out.append(json.dumps(annotation_record(str(frame_id), it.annotation, it.score)))
            else:
                out.append(json.dumps(annotation_record(str(frame_id), it)))
    _write(path, "".join(ln + "\n" for ln in out), mode="w")


def _parse_record(line: str, n: int, path):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON ({exc.msg})", path=path, line=n) from None
    if not isinstance(rec, dict) or "frame_id" not in rec:
        raise MalformedRecord("record needs a frame_id", path=path, line=n)
    frame_id = str(rec["frame_id"])
    if set(rec) == {"frame_id"}:
        return n, frame_id, None, None
    if "category" not in rec:
        raise MalformedRecord("record needs a category", path=path, line=n)
    try:
        cat = Category.parse(rec["category"])
    except UnknownCategory:
        raise UnknownCategory(f"{path}:{n}: unknown category {rec['category']!r}") from None
    vals = {}
    for k in ANNOTATION_FIELDS:
        v = rec.get(k)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedRecord(f"field {k!r} missing or not a number", path=path, line=n)
        vals[k] = float(v)
    try:
        ann = ObjectAnnotation(cat, **vals)
    except LidarCSError as exc:
        raise MalformedRecord(str(exc), path=path, line=n) from None
    score = rec.get("score")
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise MalformedRecord("score is not a number", path=path, line=n)
    return n, frame_id, ann, None if score is None else float(score)


def read_annotation_records(path) -> list[tuple[int, str, Optional[ObjectAnnotation], Optional[float]]]:
    """``(line number, frame_id, annotation or None, score or None)`` per record."""
    text = _read_text(path)
    return [_parse_record(ln, n, path) for n, ln in enumerate(text.splitlines(), start=1) if ln.strip()]


def _annotation_files(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob("*.jsonl"))
    return [p]


def read_annotations(path) -> "OrderedDict[str, list[ObjectAnnotation]]":
    """Ground truth per frame. Scores, if present, are ignored.

    ``path`` may be a file or a directory of ``*.jsonl`` files.
    """
    frames: OrderedDict[str, list[ObjectAnnotation]] = OrderedDict()
    for f in _annotation_files(path):
        for _, frame_id, ann, _ in read_annotation_records(f):
            lst = frames.setdefault(frame_id, [])
            if ann is not None:
                lst.append(ann)
    return frames


def read_detections(path) -> "OrderedDict[str, list[Detection]]":
    frames: OrderedDict[str, list[Detection]] = OrderedDict()
    for f in _annotation_files(path):
        for n, frame_id, ann, score in read_annotation_records(f):
            lst = frames.setdefault(frame_id, [])
            if ann is None:
                continue
            if score is None:
                raise MalformedRecord("detection record needs a score", path=f, line=n)
            try:
                lst.append(Detection(ann, score))
            except LidarCSError as exc:
                raise MalformedRecord(str(exc), path=f, line=n) from None
    return frames


# -- meshes ------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(raw: bytes, path):
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise MalformedHeader("not a PLY file", path=path, line=1)
    nl = raw.find(b"\n", end)
    body_start = len(raw) if nl < 0 else nl + 1
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # [name, count, [(prop, type) | (prop, ("list", count_t, item_t))]]
    for n, ln in enumerate(header, start=1):
        tok = ln.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise MalformedHeader(f"unsupported format {ln!r}", path=path, line=n)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise MalformedHeader(f"bad element line {ln!r}", path=path, line=n)
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise MalformedHeader("property before element", path=path, line=n)
            if len(tok) == 5 and tok[1] == "list" and tok[2] in _PLY_TYPES and tok[3] in _PLY_TYPES:
                elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise MalformedHeader(f"bad property line {ln!r}", path=path, line=n)
        else:
            raise MalformedHeader(f"unexpected header line {ln!r}", path=path, line=n)
    if fmt is None:
        raise MalformedHeader("missing format line", path=path, line=1)
    return fmt, elements, body_start, len(header) + 1


def _ply_vertices_faces(vertex_rows, face_lists, path) -> TriangleMesh:
    if vertex_rows is None:
        raise MalformedHeader("PLY has no vertex element", path=path)
    tris = np.asarray(face_lists, dtype=np.int64).reshape(-1, 3) if face_lists is not None else np.zeros((0, 3), int)
    try:
        return TriangleMesh(vertex_rows, tris)
    except InvalidInput as exc:
        raise MalformedRecord(str(exc), path=path) from None


def _read_ply_ascii(text_lines, elements, first_line, path) -> TriangleMesh:
    pos = 0
    vertices = faces = None

    def next_line():
        nonlocal pos
        while pos < len(text_lines) and not text_lines[pos].strip():
            pos += 1
        if pos >= len(text_lines):
            raise MalformedRecord("unexpected end of file", path=path, line=first_line + pos)
        pos += 1
        return text_lines[pos - 1].split(), first_line + pos - 1

    for name, count, props in elements:
        rows = []
        for _ in range(count):
            tok, n = next_line()
            try:
                vals, k = {}, 0
                for pname, ptype in props:
                    if isinstance(ptype, tuple):
                        m = int(tok[k])
                        vals[pname] = [int(t) for t in tok[k + 1:k + 1 + m]]
                        if len(vals[pname]) != m:
                            raise IndexError
                        k += 1 + m
                    else:
                        vals[pname] = float(tok[k])
                        k += 1
            except (IndexError, ValueError):
                raise MalformedRecord(f"bad {name} record", path=path, line=n) from None
            rows.append((vals, n))
        if name == "vertex":
            try:
                vertices = [[v["x"], v["y"], v["z"]] for v, _ in rows]
            except KeyError:
                raise MalformedHeader("vertex element lacks x/y/z", path=path) from None
        elif name == "face":
            faces = []
            key = next((p for p, t in props if isinstance(t, tuple)), None)
            if key is None:
                raise MalformedHeader("face element lacks a list property", path=path)
            for v, n in rows:
                if len(v[key]) != 3:
                    raise MalformedRecord("only triangles are supported", path=path, line=n)
                faces.append(v[key])
    return _ply_vertices_faces(vertices, faces, path)


def _read_ply_binary(body: bytes, elements, little: bool, path) -> TriangleMesh:
    end = "<" if little else ">"
    off = 0
    vertices = faces = None
    for name, count, props in elements:
        lists = [t for _, t in props if isinstance(t, tuple)]
        if not lists:
            dt = np.dtype([(p, end + t) for p, t in props])
            need = dt.itemsize * count
            if off + need > len(body):
                raise TruncatedFile(f"{name} element is truncated", path=path)
            rec = np.frombuffer(body, dtype=dt, count=count, offset=off)
            off += need
            if name == "vertex":
                try:
                    vertices = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
                except (KeyError, ValueError):
                    raise MalformedHeader("vertex element lacks x/y/z", path=path) from None
            continue
        if name != "face" or len(lists) != 1:
            raise MalformedHeader(f"unsupported list layout in element {name!r}", path=path)
        # Triangles only: every row has the same size, so read them as a struct.
        fields = []
        for p, t in props:
            if isinstance(t, tuple):
                fields += [("__n", end + t[1]), (p, end + t[2], (3,))]
                key = p
            else:
                fields.append((p, end + t))
        dt = np.dtype(fields)
        need = dt.itemsize * count
        if off + need > len(body):
            raise TruncatedFile("face element is truncated", path=path)
        rec = np.frombuffer(body, dtype=dt, count=count, offset=off)
        if count and np.any(rec["__n"] != 3):
            raise MalformedRecord("only triangles are supported", path=path)
        off += need
        faces = rec[key].astype(np.int64)
    return _ply_vertices_faces(vertices, faces, path)


def read_ply(path) -> TriangleMesh:
    raw = _read_bytes(path)
    fmt, elements, start, first_line = _parse_ply_header(raw, path)
    if fmt == "ascii":
        text = raw[start:].decode("ascii", errors="replace").splitlines()
        return _read_ply_ascii(text, elements, first_line + 1, path)
    return _read_ply_binary(raw[start:], elements, fmt == "binary_little_endian", path)


def write_ply(path, mesh: TriangleMesh, binary: bool = True) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    head = (f"ply\nformat {fmt} 1.0\nelement vertex {len(mesh.vertices)}\n"
            "property float x\nproperty float y\nproperty float z\n"
            f"element face {len(mesh.triangles)}\nproperty list uchar int vertex_indices\nend_header\n")
    if binary:
        v = mesh.vertices.astype("<f4").tobytes()
        fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
        f = np.empty(len(mesh.triangles), dtype=fdt)
        f["n"] = 3
        f["idx"] = mesh.triangles
        _write(path, head.encode("ascii") + v + f.tobytes())
    else:
        lines = [head.rstrip("\n")]
        lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
        _write(path, "\n".join(lines) + "\n", mode="w")


def read_obj(path) -> TriangleMesh:
    verts, tris = [], []
    for n, ln in enumerate(_read_text(path).splitlines(), start=1):
        tok = ln.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "v":
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError:
                raise MalformedLine("bad vertex", path=path, line=n) from None
            if len(verts[-1]) != 3:
                raise MalformedLine("vertex needs three coordinates", path=path, line=n)
        elif tok[0] == "f":
            if len(tok) != 4:
                raise MalformedLine("only triangles are supported", path=path, line=n)
            idx = []
            for t in tok[1:]:
                try:
                    k = int(t.split("/")[0])
                except ValueError:
                    raise MalformedLine("bad face index", path=path, line=n) from None
                if k == 0:
                    raise MalformedLine("face index 0 is invalid", path=path, line=n)
                idx.append(k - 1 if k > 0 else len(verts) + k)
            tris.append(idx)
    try:
        return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64))
    except InvalidInput as exc:
        raise MalformedRecord(str(exc), path=path) from None


def write_obj(path, mesh: TriangleMesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    _write(path, "\n".join(lines) + "\n", mode="w")


def read_mesh(path) -> TriangleMesh:
    ext = Path(path).suffix.lower()
    if ext == ".ply":
        return read_ply(path)
    if ext == ".obj":
        return read_obj(path)
    raise InvalidInput(f"unsupported mesh format {ext!r} (use .ply or .obj)")


# -- scenes ------------------------------------------------------------------

def _load_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON ({exc.msg})", path=path, line=exc.lineno) from None


def read_scene(path) -> Scene:
    doc = _load_json(path)
    base = Path(path).parent
    if not isinstance(doc, dict) or "background" not in doc:
        raise MalformedRecord("scene needs a 'background' entry", path=path)
    background = read_cloud(base / doc["background"])
    objects = []
    meshes: dict[str, TriangleMesh] = {}
    for k, o in enumerate(doc.get("objects", [])):
        try:
            mpath = str(base / o["mesh"])
            if mpath not in meshes:
                meshes[mpath] = read_mesh(mpath)
            objects.append(PlacedObject(meshes[mpath], tuple(o["position"]), float(o.get("yaw", 0.0)),
                                        Category.parse(o["category"]), tuple(o["dims"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"object {k}: {exc}", path=path) from None
        except InvalidInput as exc:
            raise MalformedRecord(f"object {k}: {exc}", path=path) from None
    return Scene(background, objects)


def write_scene(path, background_path, objects: Iterable[tuple[str, PlacedObject]]) -> None:
    """Write a scene file; ``objects`` pairs each mesh path with its placement."""
    doc = {
        "background": os.fspath(background_path),
        "objects": [
            {"mesh": os.fspath(m), "position": list(o.position), "yaw": o.yaw,
             "dims": list(o.dims), "category": o.category.value}
            for m, o in objects
        ],
    }
    _write(path, json.dumps(doc, indent=2) + "\n", mode="w")


def load_json(path):
    return _load_json(path)


def write_json(path, doc) -> None:
    _write(path, json.dumps(doc, indent=2) + "\n", mode="w")
