"""Scan-line retargeting between sensors.

``nnds`` keeps, for every beam of the target sensor, the source scan line
whose elevation is closest and drops all other lines. ``uniform_downsample``
is the naive baseline that keeps every n-th line.
"""

from __future__ import annotations

import numpy as np

from .core import PointCloud
from .errors import EmptyInput, InvalidInput
from .pattern import DEFAULT_GAP_DEG, Beam, RayPattern, beam_decompose, beam_elevations


def _keep_beams(source: PointCloud, beams: list[Beam], selected) -> PointCloud:
    mask = np.zeros(len(source), dtype=bool)
    for b in selected:
        mask[beams[b].members] = True
    return source.subset(mask)


def select_nearest_beams(source_elevations: np.ndarray, target_elevations: np.ndarray) -> list[int]:
    """Indices of the source beams nearest to each target beam, deduplicated.

    Ties go to the lower source beam (``argmin`` returns the first minimum and
    source elevations are ascending).
    """
    src = np.asarray(source_elevations, dtype=np.float64)
    tgt = np.asarray(target_elevations, dtype=np.float64)
    nearest = np.argmin(np.abs(tgt[:, None] - src[None, :]), axis=1)
    return sorted(set(nearest.tolist()))


def nnds(source: PointCloud, target_pattern: RayPattern, gap_threshold: float = DEFAULT_GAP_DEG) -> PointCloud:
    """Nearest-neighbour scan down-sampling toward ``target_pattern``."""
    if len(source) == 0:
        raise EmptyInput("source cloud is empty")
    if len(target_pattern) == 0:
        raise EmptyInput("target pattern is empty")
    beams = beam_decompose(source, gap_threshold)
    src_el = np.array([b.elevation for b in beams])
    tgt_el = beam_elevations(target_pattern, gap_threshold)
    return _keep_beams(source, beams, select_nearest_beams(src_el, tgt_el))


def uniform_downsample(source: PointCloud, keep_every: int, gap_threshold: float = DEFAULT_GAP_DEG) -> PointCloud:
    """Keep beams whose bottom-up index is a multiple of ``keep_every``."""
    if len(source) == 0:
        raise EmptyInput("source cloud is empty")
    if int(keep_every) != keep_every or keep_every < 1:
        raise InvalidInput("keep_every must be a positive integer")
    beams = beam_decompose(source, gap_threshold)
    return _keep_beams(source, beams, range(0, len(beams), int(keep_every)))
