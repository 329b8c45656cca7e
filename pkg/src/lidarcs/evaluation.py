"""Orientation-aware, range-gated mean average precision for 3D boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from shapely.geometry import Polygon

from .core import CATEGORIES, Category, Detection, ObjectAnnotation, wrap_angle
from .errors import InvalidInput, MismatchedFrames, UnknownCategory

DEFAULT_IOU_THRESHOLDS = {
    Category.CAR: 0.7,
    Category.TRUCK: 0.7,
    Category.PEDESTRIAN: 0.3,
    Category.BICYCLIST: 0.5,
    Category.MOTORCYCLIST: 0.5,
}


def iou3d(a: ObjectAnnotation, b: ObjectAnnotation) -> float:
    """Volume IoU of two yaw-rotated boxes (BEV polygon overlap x height overlap)."""
    dz = min(a.z + a.height / 2, b.z + b.height / 2) - max(a.z - a.height / 2, b.z - b.height / 2)
    if dz <= 0.0:
        return 0.0
    pa, pb = Polygon(a.bev_corners()), Polygon(b.bev_corners())
    if not pa.intersects(pb):
        return 0.0
    inter = pa.intersection(pb).area * dz
    union = a.volume() + b.volume() - inter
    if union <= 0.0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def orientation_valid(gt_yaw: float, det_yaw: float, limit: float = math.pi / 2) -> bool:
    """True iff the wrapped yaw difference lies in [-limit, limit]."""
    return abs(wrap_angle(det_yaw - gt_yaw)) <= limit


@dataclass
class EvalConfig:
    max_eval_range: float = 70.0
    iou_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    score_recall_positions: int = 50
    orientation_limit: float = math.pi / 2

    def __post_init__(self):
        self.iou_thresholds = {Category.parse(k): float(v) for k, v in self.iou_thresholds.items()}
        for cat in CATEGORIES:
            if cat not in self.iou_thresholds:
                raise InvalidInput(f"missing IoU threshold for {cat.value}")
            if not 0.0 < self.iou_thresholds[cat] <= 1.0:
                raise InvalidInput(f"IoU threshold for {cat.value} must be in (0, 1]")
        if not self.max_eval_range > 0:
            raise InvalidInput("max_eval_range must be positive")
        if int(self.score_recall_positions) != self.score_recall_positions or self.score_recall_positions < 2:
            raise InvalidInput("score_recall_positions must be an integer >= 2")


@dataclass
class CategoryResult:
    category: Category
    ap: float
    tp: int
    fp: int
    fn: int
    num_gt: int
    num_det: int

    @property
    def no_ground_truth(self) -> bool:
        return self.num_gt == 0


@dataclass
class EvalReport:
    categories: dict  # Category -> CategoryResult

    @property
    def ap(self) -> dict:
        return {c: r.ap for c, r in self.categories.items()}

    @property
    def mAP(self) -> float:
        """Mean over all five categories; empty categories count as 0."""
        return float(np.mean([self.categories[c].ap for c in CATEGORIES]))

    @property
    def mAP_present(self) -> float:
        present = [self.categories[c].ap for c in CATEGORIES if not self.categories[c].no_ground_truth]
        return float(np.mean(present)) if present else 0.0

    @property
    def flagged(self) -> list[Category]:
        return [c for c in CATEGORIES if self.categories[c].no_ground_truth]

    def to_dict(self) -> dict:
        return {
            "mAP": self.mAP,
            "mAP_present": self.mAP_present,
            "categories": {
                c.value: {
                    "AP": r.ap, "TP": r.tp, "FP": r.fp, "FN": r.fn,
                    "num_gt": r.num_gt, "num_det": r.num_det, "no_ground_truth": r.no_ground_truth,
                }
                for c, r in self.categories.items()
            },
        }

    def summary_lines(self) -> list[str]:
        lines = [f"mAP={self.mAP:.4f} mAP_present={self.mAP_present:.4f}"]
        for c in CATEGORIES:
            r = self.categories[c]
            flag = " no_gt" if r.no_ground_truth else ""
            lines.append(f"{c.value} AP={r.ap:.4f} TP={r.tp} FP={r.fp} FN={r.fn}{flag}")
        return lines


def interpolated_ap(tp_flags: Sequence[bool], num_gt: int, positions: int) -> float:
    """Mean interpolated precision over ``positions`` recall levels in [0, 1].

    Precision at recall level r is the best precision over ranks whose recall
    is at least r. Recall comparisons are done in integers to avoid float
    ties between k/num_gt and the level grid.
    """
    if num_gt == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.int64))
    if len(tp) == 0:
        return 0.0
    ranks = np.arange(1, len(tp) + 1)
    precision = tp / ranks
    # running max from the right: best precision among ranks at or after k
    best_after = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    steps = positions - 1
    for k in range(positions):
        # first rank with tp * steps >= k * num_gt
        idx = np.searchsorted(tp * steps, k * num_gt, side="left")
        if idx < len(tp):
            total += best_after[idx]
    return total / positions


def _validate(gts: Mapping, dets: Mapping, config: EvalConfig):
    missing = [f for f in dets if f not in gts]
    if missing:
        raise MismatchedFrames(f"detections reference unknown frames: {sorted(map(str, missing))[:5]}")
    for frame, items in gts.items():
        for a in items:
            if not isinstance(a.category, Category) or a.category not in config.iou_thresholds:
                raise UnknownCategory(f"frame {frame}: unknown category {a.category!r}")
    for frame, items in dets.items():
        for d in items:
            if not isinstance(d.annotation.category, Category) or d.annotation.category not in config.iou_thresholds:
                raise UnknownCategory(f"frame {frame}: unknown category {d.annotation.category!r}")


def evaluate_category(gts: Mapping[str, Sequence[ObjectAnnotation]], dets: Mapping[str, Sequence[Detection]],
                      category: Category, config: EvalConfig) -> CategoryResult:
    rng = config.max_eval_range
    gt_by_frame = {
        f: [a for a in items if a.category == category and a.planar_range <= rng]
        for f, items in gts.items()
    }
    ranked = []
    for f, items in dets.items():
        k = 0
        for d in items:
            if d.annotation.category == category and d.annotation.planar_range <= rng:
                ranked.append((-d.score, str(f), k, f, d))
            k += 1
    ranked.sort(key=lambda r: r[:3])
    thr = config.iou_thresholds[category]
    matched = {f: [False] * len(v) for f, v in gt_by_frame.items()}
    flags = []
    for _, _, _, f, d in ranked:
        best, best_iou = -1, thr
        for g, gt in enumerate(gt_by_frame.get(f, ())):
            if matched[f][g]:
                continue
            iou = iou3d(gt, d.annotation)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = g, iou
        if best >= 0 and orientation_valid(gt_by_frame[f][best].yaw, d.annotation.yaw, config.orientation_limit):
            matched[f][best] = True
            flags.append(True)
        else:
            flags.append(False)
    num_gt = sum(len(v) for v in gt_by_frame.values())
    tp = sum(flags)
    ap = interpolated_ap(flags, num_gt, config.score_recall_positions)
    return CategoryResult(category, ap, tp, len(flags) - tp, num_gt - tp, num_gt, len(flags))


def evaluate(gts: Mapping[str, Sequence[ObjectAnnotation]], dets: Mapping[str, Sequence[Detection]],
             config: EvalConfig | None = None) -> EvalReport:
    """Per-category AP and mAP over the five categories.

    Frames are keyed by id. Detections are ranked by score (ties: frame id,
    then position within the frame) and greedily matched to the unmatched
    same-frame ground truth with the highest IoU at or above the category
    threshold. A match whose yaw differs by more than the orientation limit
    is a false positive and leaves the ground truth available.
    """
    config = config or EvalConfig()
    _validate(gts, dets, config)
    return EvalReport({c: evaluate_category(gts, dets, c, config) for c in CATEGORIES})
