"""Dataset manifests, category statistics and mini-dataset generation."""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import CATEGORIES
from .errors import InvalidManifest
from .io import load_json, read_annotations, write_annotations, write_cloud, write_json
from .pattern import SENSOR_PRESETS, SensorSpec, synthesize_pattern
from .scene import RenderConfig, Scene, simulate_frame
from .synthetic import random_objects, street_background

log = logging.getLogger(__name__)


@dataclass
class DatasetManifest:
    """Frames shared by every sensor group, plus the shared splits.

    ``groups`` maps a sensor name to its frame ids (one cloud per frame under
    ``<root>/<sensor>/<frame>.bin``). ``annotations`` lists annotation files
    relative to the manifest.
    """

    name: str
    groups: dict
    splits: dict
    annotations: list = field(default_factory=list)
    category_counts: dict = field(default_factory=dict)
    path: Optional[Path] = None

    def validate(self) -> None:
        frame_sets = [list(v) for v in self.groups.values()]
        if frame_sets and any(sorted(f) != sorted(frame_sets[0]) for f in frame_sets):
            raise InvalidManifest("sensor groups do not cover the same frames", path=self.path)
        seen: dict[str, str] = {}
        for split, frames in self.splits.items():
            for f in frames:
                if f in seen:
                    raise InvalidManifest(f"frame {f!r} is in both {seen[f]!r} and {split!r}", path=self.path)
                seen[f] = split
        if frame_sets:
            known = set(frame_sets[0])
            stray = [f for f in seen if f not in known]
            if stray:
                raise InvalidManifest(f"split frames missing from groups: {stray[:5]}", path=self.path)

    @property
    def frame_ids(self) -> list[str]:
        for frames in self.groups.values():
            return list(frames)
        return sorted({f for v in self.splits.values() for f in v})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "groups": self.groups,
            "splits": self.splits,
            "annotations": [str(a) for a in self.annotations],
            "category_counts": self.category_counts,
        }


def read_manifest(path) -> DatasetManifest:
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise InvalidManifest("manifest must be a JSON object", path=path)
    try:
        m = DatasetManifest(
            name=str(doc.get("name", "")),
            groups={str(k): [str(f) for f in v] for k, v in doc.get("groups", {}).items()},
            splits={str(k): [str(f) for f in v] for k, v in doc.get("splits", {}).items()},
            annotations=[str(a) for a in doc.get("annotations", [])],
            category_counts=dict(doc.get("category_counts", {})),
            path=Path(path),
        )
    except (AttributeError, TypeError) as exc:
        raise InvalidManifest(f"bad manifest structure: {exc}", path=path) from None
    m.validate()
    return m


def write_manifest(path, manifest: DatasetManifest) -> None:
    manifest.validate()
    write_json(path, manifest.to_dict())


def dataset_stats(manifest: DatasetManifest, annotation_files: Optional[Sequence] = None) -> dict:
    """Object count per category over the manifest's frames."""
    if annotation_files is None:
        base = manifest.path.parent if manifest.path else Path(".")
        annotation_files = [base / a for a in manifest.annotations]
    frames = set(manifest.frame_ids)
    counts = Counter({c: 0 for c in CATEGORIES})
    for f in annotation_files:
        for frame_id, anns in read_annotations(f).items():
            if frames and frame_id not in frames:
                continue
            counts.update(a.category for a in anns)
    return {c: counts[c] for c in CATEGORIES}


def _short(n: int) -> str:
    return f"{n / 1000:.0f}k" if n >= 10_000 else str(n)


def format_stats_table(counts: dict, short: bool = False) -> str:
    cells = [(c.value, (_short if short else str)(int(counts.get(c, 0)))) for c in CATEGORIES]
    widths = [max(len(a), len(b)) for a, b in cells]
    head = "Types     | " + " ".join(a.rjust(w) for (a, _), w in zip(cells, widths))
    row = "3D Object | " + " ".join(b.rjust(w) for (_, b), w in zip(cells, widths))
    return head + "\n" + row


def build_mini_dataset(out_dir, sensors: Sequence[str] = ("VLD-16", "VLD-32", "VLD-64"), frames: int = 20,
                       objects_per_frame: int = 8, seed: int = 0, config: Optional[RenderConfig] = None,
                       sensor_specs: Optional[dict] = None, backgrounds: int = 4) -> DatasetManifest:
    """Simulate ``frames`` street scenes under every sensor and write them out.

    Layout: ``<out>/<sensor>/<frame>.bin``, ``<out>/annotations.jsonl`` (shared
    by all sensors) and ``<out>/manifest.json``. Frames cycle over a few
    procedural backgrounds; object placements differ per frame. The first half
    of the frames form the train split.
    """
    out = Path(out_dir)
    config = config or RenderConfig()
    specs: dict[str, SensorSpec] = dict(SENSOR_PRESETS)
    if sensor_specs:
        specs.update(sensor_specs)
    patterns = [synthesize_pattern(specs[s]) for s in sensors]
    max_ranges = [specs[s].max_range for s in sensors]
    bgs = [street_background(seed + k) for k in range(max(1, backgrounds))]
    frame_ids = [f"{k:06d}" for k in range(frames)]
    labels = {}
    t0 = time.perf_counter()
    for k, fid in enumerate(frame_ids):
        scene = Scene(bgs[k % len(bgs)], random_objects(seed * 100_003 + k, objects_per_frame))
        clouds, anns = simulate_frame(scene, patterns, config, max_ranges=max_ranges, frame_id=fid)
        for name, cloud in zip(sensors, clouds):
            write_cloud(out / name / f"{fid}.bin", cloud)
        labels[fid] = anns
        log.info("frame %s: %s", fid, " ".join(f"{s}={len(c)}" for s, c in zip(sensors, clouds)))
    write_annotations(out / "annotations.jsonl", labels)
    half = frames // 2
    counts = Counter(a.category for anns in labels.values() for a in anns)
    manifest = DatasetManifest(
        name=out.name,
        groups={s: list(frame_ids) for s in sensors},
        splits={"train": frame_ids[:half], "test": frame_ids[half:]},
        annotations=["annotations.jsonl"],
        category_counts={c.value: counts.get(c, 0) for c in CATEGORIES},
        path=out / "manifest.json",
    )
    write_manifest(out / "manifest.json", manifest)
    log.info("built %d frames x %d sensors in %.1fs", frames, len(sensors), time.perf_counter() - t0)
    return manifest
