"""Command-line front end.

Exit codes: 0 success, 1 environment/I-O failure, 2 user or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .core import Category
from .errors import IoFailure, LidarCSError
from .pattern import (
    DEFAULT_GAP_DEG,
    DEFAULT_TOLERANCE_DEG,
    SensorSpec,
    beam_decompose,
    extract_pattern,
    pattern_distance,
    synthesize_pattern,
)

log = logging.getLogger("lidarcs")


def _set_threads(n):
    if n is None:
        env = os.environ.get("LIDARCS_THREADS")
        if not env:
            return
        try:
            n = int(env)
        except ValueError:
            raise LidarCSError(f"LIDARCS_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise LidarCSError("thread count must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def cmd_extract_pattern(args):
    from .io import read_cloud, write_pattern

    frames = [read_cloud(p) for p in args.input]
    pattern = extract_pattern(frames, args.tolerance_deg, sensor_name=args.name)
    write_pattern(args.output, pattern)
    beams = beam_decompose(pattern, args.gap_deg)
    print(f"beams={len(beams)} rays={len(pattern)}")


def cmd_synth_pattern(args):
    from .io import write_pattern

    spec = SensorSpec(args.name, args.beams, args.elev_min, args.elev_max, args.az_res)
    pattern = synthesize_pattern(spec)
    write_pattern(args.output, pattern)
    print(f"beams={spec.beam_count} rays={len(pattern)}")


def cmd_render(args):
    from .cubemap import query_patterns
    from .io import read_pattern, read_scene, write_annotations, write_cloud
    from .scene import RenderConfig, annotate, render_scene

    scene = read_scene(args.scene)
    patterns = [read_pattern(p) for p in args.pattern]
    config = RenderConfig(args.cube_res, args.splat_radius, args.splat_kernel, args.max_range)
    frame_id = Path(args.scene).stem
    t0 = time.perf_counter()
    cube = render_scene(scene, config)
    t1 = time.perf_counter()
    clouds = query_patterns(cube, patterns, args.max_range, frame_id=frame_id)
    t2 = time.perf_counter()
    largest = max(range(len(patterns)), key=lambda k: len(patterns[k]))
    query_patterns(cube, [patterns[largest]], args.max_range, frame_id=frame_id)
    t3 = time.perf_counter()
    out = Path(args.out_dir)
    names = [p.sensor_name for p in patterns]
    if len(set(names)) != len(names):
        names = [f"{k}_{n}" for k, n in enumerate(names)]
    for name, cloud in zip(names, clouds):
        write_cloud(out / f"{name}.bin", cloud)
        print(f"pattern={name} rays={len(patterns[names.index(name)])} points={len(cloud)}")
    write_annotations(out / "annotations.jsonl", {frame_id: annotate(scene)})
    if cube.skipped_points:
        print(f"skipped_degenerate_points={cube.skipped_points}")
    all_time = (t1 - t0) + (t2 - t1)
    single_time = (t1 - t0) + (t3 - t2)
    print(f"timing cube_map={t1 - t0:.3f}s query_all={t2 - t1:.3f}s "
          f"query_largest={t3 - t2:.3f}s ratio={all_time / single_time:.3f}")


def cmd_resample(args):
    from .io import read_cloud, read_pattern, write_cloud
    from .resample import nnds, uniform_downsample

    cloud = read_cloud(args.input)
    if args.uniform_keep_every is not None:
        out = uniform_downsample(cloud, args.uniform_keep_every, args.gap_deg)
    else:
        out = nnds(cloud, read_pattern(args.target_pattern), args.gap_deg)
    write_cloud(args.output, out)
    n_in = len(beam_decompose(cloud, args.gap_deg))
    n_out = len(beam_decompose(out, args.gap_deg)) if len(out) else 0
    print(f"beams_in={n_in} beams_out={n_out} points_in={len(cloud)} points_out={len(out)}")


def cmd_eval(args):
    from .evaluation import EvalConfig, evaluate
    from .io import read_annotations, read_detections, write_json

    thresholds = {
        Category.CAR: args.iou_car,
        Category.TRUCK: args.iou_truck,
        Category.PEDESTRIAN: args.iou_ped,
        Category.BICYCLIST: args.iou_bicyclist,
        Category.MOTORCYCLIST: args.iou_motorcyclist,
    }
    config = EvalConfig(max_eval_range=args.max_range, iou_thresholds=thresholds)
    report = evaluate(read_annotations(args.gt), read_detections(args.det), config)
    if args.report:
        write_json(args.report, report.to_dict())
    for line in report.summary_lines():
        print(line)


def cmd_dataset_stats(args):
    from .dataset import dataset_stats, format_stats_table, read_manifest

    counts = dataset_stats(read_manifest(args.manifest))
    print(format_stats_table(counts, short=args.short))


def cmd_pattern_stats(args):
    from .io import read_pattern

    a = read_pattern(args.pattern)
    beams = beam_decompose(a, args.gap_deg)
    print(f"sensor={a.sensor_name} rays={len(a)} beams={len(beams)}")
    for b in beams:
        print(f"beam {b.index} elevation={math.degrees(b.elevation):.4f} rays={len(b.members)}")
    if args.compare:
        b = read_pattern(args.compare)
        print(f"distance={pattern_distance(a, b, args.gap_deg):.6f}")


def cmd_make_dataset(args):
    from .dataset import build_mini_dataset
    from .scene import RenderConfig

    config = RenderConfig(args.cube_res, args.splat_radius)
    t0 = time.perf_counter()
    m = build_mini_dataset(args.out_dir, args.sensor, args.frames, args.objects, args.seed, config)
    print(f"frames={len(m.frame_ids)} sensors={len(m.groups)} seconds={time.perf_counter() - t0:.1f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lidarcs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="cap worker threads (env LIDARCS_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract-pattern", help="recover a ray pattern from scanned clouds")
    s.add_argument("--input", nargs="+", required=True, metavar="CLOUD")
    s.add_argument("--tolerance-deg", type=float, default=DEFAULT_TOLERANCE_DEG)
    s.add_argument("--gap-deg", type=float, default=DEFAULT_GAP_DEG)
    s.add_argument("--name", default="extracted")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_extract_pattern)

    s = sub.add_parser("synth-pattern", help="write a uniform pattern for a parametric sensor")
    s.add_argument("--beams", type=int, required=True)
    s.add_argument("--elev-min", type=float, required=True)
    s.add_argument("--elev-max", type=float, required=True)
    s.add_argument("--az-res", type=float, default=0.2)
    s.add_argument("--name", default="synthetic")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_pattern)

    s = sub.add_parser("render", help="simulate one frame for several sensors")
    s.add_argument("--scene", required=True)
    s.add_argument("--pattern", action="append", required=True)
    s.add_argument("--cube-res", type=int, default=2048)
    s.add_argument("--splat-radius", type=float, default=0.05)
    s.add_argument("--splat-kernel", choices=("oriented", "flat"), default="oriented")
    s.add_argument("--max-range", type=float, default=120.0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("resample", help="retarget a cloud to another sensor's scan lines")
    s.add_argument("--input", required=True)
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--target-pattern")
    mode.add_argument("--uniform-keep-every", type=int)
    s.add_argument("--gap-deg", type=float, default=DEFAULT_GAP_DEG)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_resample)

    s = sub.add_parser("eval", help="orientation-aware mAP of detections")
    s.add_argument("--gt", required=True)
    s.add_argument("--det", required=True)
    s.add_argument("--max-range", type=float, default=70.0)
    s.add_argument("--iou-car", type=float, default=0.7)
    s.add_argument("--iou-truck", type=float, default=0.7)
    s.add_argument("--iou-ped", type=float, default=0.3)
    s.add_argument("--iou-bicyclist", type=float, default=0.5)
    s.add_argument("--iou-motorcyclist", type=float, default=0.5)
    s.add_argument("--report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("dataset-stats", help="object counts per category")
    s.add_argument("--manifest", required=True)
    s.add_argument("--short", action="store_true", help="print large counts in thousands")
    s.set_defaults(func=cmd_dataset_stats)

    s = sub.add_parser("pattern-stats", help="beam histogram and pattern comparison")
    s.add_argument("--pattern", required=True)
    s.add_argument("--compare")
    s.add_argument("--gap-deg", type=float, default=DEFAULT_GAP_DEG)
    s.set_defaults(func=cmd_pattern_stats)

    s = sub.add_parser("make-dataset", help="simulate a small multi-sensor dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--sensor", action="append", default=None)
    s.add_argument("--frames", type=int, default=20)
    s.add_argument("--objects", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cube-res", type=int, default=2048)
    s.add_argument("--splat-radius", type=float, default=0.05)
    s.set_defaults(func=cmd_make_dataset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if getattr(args, "sensor", "") is None:
        args.sensor = ["VLD-16", "VLD-32", "VLD-64"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(args.threads)
        args.func(args)
    except IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LidarCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
