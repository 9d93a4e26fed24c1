"""Frame-to-frame person tracking by minimum-cost assignment of skeletons to tracks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoCommonJoints, NonFiniteCost
from .skeleton import SkeletonFrame, SkeletonLayout, bounding_box

log = logging.getLogger(__name__)

SIMILARITIES = ("iou", "oks")
DEFAULT_GATES = {"iou": 0.3, "oks": 0.5}


Box = tuple[Sequence[float], Sequence[float]]


def iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two axis-aligned ``(min, max)`` boxes.

    Two degenerate boxes (zero union) count as a perfect match when they
    coincide and as no match otherwise.
    """
    a0, a1 = np.asarray(box_a[0], float), np.asarray(box_a[1], float)
    b0, b1 = np.asarray(box_b[0], float), np.asarray(box_b[1], float)
    inter = float(np.prod(np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0, None)))
    union = float(np.prod(a1 - a0) + np.prod(b1 - b0) - inter)
    if union <= 0:
        return 1.0 if np.array_equal(a0, b0) and np.array_equal(a1, b1) else 0.0
    return min(1.0, max(0.0, inter / union))


def oks(a: SkeletonFrame, b: SkeletonFrame, layout: SkeletonLayout) -> float:
    """Object keypoint similarity of ``b`` against reference skeleton ``a``.

    The scale is the area of ``a``'s bounding box; only joints valid in
    both skeletons count.
    """
    both = a.valid & b.valid
    if not both.any():
        raise NoCommonJoints("skeletons share no valid joint")
    lo, hi = bounding_box(a)
    area = float(np.prod(hi - lo))
    d2 = np.sum((a.joints[both] - b.joints[both]) ** 2, axis=1)
    kappa2 = np.asarray(layout.oks_kappas, float)[both] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(d2 == 0, 0.0, d2 / (2.0 * area * kappa2))
    return float(np.mean(np.exp(-e)))


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment as sorted ``(row, col)`` pairs.

    Rectangular matrices are padded to square with a sentinel larger than
    any real assignment can cost; pairs that land on padding are dropped.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    if not np.isfinite(C).all():
        raise NonFiniteCost("cost matrix contains NaN or infinity")
    n, m = C.shape
    if n == 0 or m == 0:
        return []
    size = max(n, m)
    if n != m:
        sentinel = (np.abs(C).max() + 1.0) * size
        P = np.full((size, size), sentinel)
        P[:n, :m] = C
    else:
        P = C
    rows, cols = linear_sum_assignment(P)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m)


@dataclass
class Track:
    id: int
    last_frame: SkeletonFrame
    hits: int = 1
    misses: int = 0
    confirmed: bool = False


@dataclass(frozen=True)
class TrackerConfig:
    similarity: str = "iou"
    gate: float | None = None
    max_misses: int = 5
    min_hits: int = 3

    def __post_init__(self):
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.gate is not None and not 0.0 <= self.gate <= 1.0:
            raise ValueError("gate must lie in [0, 1]")
        if self.max_misses < 1 or self.min_hits < 1:
            raise ValueError("max_misses and min_hits must be >= 1")

    @property
    def effective_gate(self) -> float:
        return DEFAULT_GATES[self.similarity] if self.gate is None else self.gate

    def to_dict(self) -> dict:
        return {"similarity": self.similarity, "gate": self.effective_gate,
                "max_misses": self.max_misses, "min_hits": self.min_hits}


def similarity(track_frame: SkeletonFrame, det: SkeletonFrame, cfg: TrackerConfig,
               layout: SkeletonLayout) -> float:
    """Similarity used for matching; 0 when either skeleton has nothing to compare."""
    try:
        if cfg.similarity == "iou":
            return iou(bounding_box(track_frame), bounding_box(det))
        return oks(track_frame, det, layout)
    except (NoCommonJoints, ValueError):
        return 0.0
    except Exception as exc:  # NoValidJoints
        if type(exc).__name__ == "NoValidJoints":
            return 0.0
        raise


@dataclass
class Tracker:
    """Owns the live track set. Single writer."""

    layout: SkeletonLayout
    config: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: list[Track] = field(default_factory=list)
    births: int = 0
    deaths: int = 0
    _next_id: int = 0

    def step(self, detections: Sequence[SkeletonFrame]) -> dict[int, int]:
        """Match one frame's detections; returns ``{detection index: track id}``."""
        cfg = self.config
        gate = cfg.effective_gate
        n, m = len(self.tracks), len(detections)
        S = np.zeros((n, m))
        for i, tr in enumerate(self.tracks):
            for j, det in enumerate(detections):
                S[i, j] = similarity(tr.last_frame, det, cfg, self.layout)

        mapping: dict[int, int] = {}
        matched_tracks: set[int] = set()
        for i, j in hungarian(1.0 - S):
            if S[i, j] < gate:
                continue
            tr = self.tracks[i]
            tr.last_frame = detections[j]
            tr.hits += 1
            tr.misses = 0
            tr.confirmed = tr.confirmed or tr.hits >= cfg.min_hits
            mapping[j] = tr.id
            matched_tracks.add(i)

        survivors = []
        for i, tr in enumerate(self.tracks):
            if i not in matched_tracks:
                tr.misses += 1
                if tr.misses >= cfg.max_misses:
                    self.deaths += 1
                    log.debug("track %d died after %d misses", tr.id, tr.misses)
                    continue
            survivors.append(tr)
        self.tracks = survivors

        for j, det in enumerate(detections):
            if j in mapping:
                continue
            tr = Track(self._next_id, det, confirmed=cfg.min_hits <= 1)
            self._next_id += 1
            self.births += 1
            self.tracks.append(tr)
            mapping[j] = tr.id
        return dict(sorted(mapping.items()))


def tracker_step(tracker: Tracker, detections: Sequence[SkeletonFrame]) -> tuple[list[Track], dict[int, int]]:
    mapping = tracker.step(detections)
    return list(tracker.tracks), mapping
