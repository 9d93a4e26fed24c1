"""Skeleton domain types: joint layouts, frames, sequences and labeled timelines."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    LayoutMismatch,
    NoValidJoints,
    NonIncreasingFrames,
    SkelgestError,
)


@dataclass(frozen=True)
class SkeletonLayout:
    """Joint set, hip-center rule, angle triplets and OKS falloff constants.

    Attributes:
        name: Registry key, e.g. ``openpose18`` or ``ntu25``.
        joint_names: One name per joint, defines J.
        hip_center: A joint index, or a pair of indices whose mean is the hip center.
        angle_triplets: ``(proximal, vertex, distal)`` index triples.
        oks_kappas: Per-joint falloff constant (COCO's ``2 * sigma``).
        dims: Coordinate dimension, 2 or 3.
    """

    name: str
    joint_names: tuple[str, ...]
    hip_center: int | tuple[int, int]
    angle_triplets: tuple[tuple[int, int, int], ...]
    oks_kappas: tuple[float, ...]
    dims: int

    def __post_init__(self):
        J = len(self.joint_names)
        if J < 1:
            raise ValueError("layout needs at least one joint")
        hips = (self.hip_center,) if isinstance(self.hip_center, int) else tuple(self.hip_center)
        if len(hips) not in (1, 2) or any(not 0 <= h < J for h in hips):
            raise ValueError(f"bad hip_center {self.hip_center!r}")
        if len(self.angle_triplets) < 1:
            raise ValueError("layout needs at least one angle triplet")
        for tri in self.angle_triplets:
            if len(tri) != 3 or len(set(tri)) != 3 or any(not 0 <= i < J for i in tri):
                raise ValueError(f"bad angle triplet {tri!r}")
        if len(self.oks_kappas) != J or any(not k > 0 for k in self.oks_kappas):
            raise ValueError("oks_kappas must be J positive values")
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def angle_count(self) -> int:
        return len(self.angle_triplets)

    @property
    def hip_indices(self) -> tuple[int, ...]:
        if isinstance(self.hip_center, int):
            return (self.hip_center,)
        return tuple(self.hip_center)

    @property
    def descriptor_dim(self) -> int:
        return 3 * self.dims * self.joint_count + self.angle_count

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "joint_names": list(self.joint_names),
            "hip_center": self.hip_center if isinstance(self.hip_center, int) else list(self.hip_center),
            "angle_triplets": [list(t) for t in self.angle_triplets],
            "oks_kappas": list(self.oks_kappas),
            "dims": self.dims,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonLayout":
        hip = d["hip_center"]
        return cls(
            name=d["name"],
            joint_names=tuple(d["joint_names"]),
            hip_center=hip if isinstance(hip, int) else tuple(hip),
            angle_triplets=tuple(tuple(t) for t in d["angle_triplets"]),
            oks_kappas=tuple(float(k) for k in d["oks_kappas"]),
            dims=int(d["dims"]),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# COCO keypoint sigmas; the neck (absent from COCO) borrows the shoulder value.
_SIG = {"nose": 0.026, "eye": 0.025, "ear": 0.035, "shoulder": 0.079, "elbow": 0.072,
        "wrist": 0.062, "hip": 0.107, "knee": 0.087, "ankle": 0.089}

OPENPOSE18 = SkeletonLayout(
    name="openpose18",
    joint_names=(
        "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
        "l_wrist", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        "r_eye", "l_eye", "r_ear", "l_ear",
    ),
    hip_center=(8, 11),
    angle_triplets=(
        (2, 3, 4), (5, 6, 7),      # elbows
        (1, 2, 3), (1, 5, 6),      # shoulders
        (8, 9, 10), (11, 12, 13),  # knees
        (1, 8, 9), (1, 11, 12),    # hips
    ),
    oks_kappas=tuple(2 * s for s in (
        _SIG["nose"], _SIG["shoulder"], _SIG["shoulder"], _SIG["elbow"], _SIG["wrist"],
        _SIG["shoulder"], _SIG["elbow"], _SIG["wrist"], _SIG["hip"], _SIG["knee"],
        _SIG["ankle"], _SIG["hip"], _SIG["knee"], _SIG["ankle"], _SIG["eye"], _SIG["eye"],
        _SIG["ear"], _SIG["ear"],
    )),
    dims=2,
)

NTU25 = SkeletonLayout(
    name="ntu25",
    joint_names=(
        "spine_base", "spine_mid", "neck", "head", "l_shoulder", "l_elbow", "l_wrist",
        "l_hand", "r_shoulder", "r_elbow", "r_wrist", "r_hand", "l_hip", "l_knee",
        "l_ankle", "l_foot", "r_hip", "r_knee", "r_ankle", "r_foot", "spine_shoulder",
        "l_hand_tip", "l_thumb", "r_hand_tip", "r_thumb",
    ),
    hip_center=0,
    angle_triplets=(
        (4, 5, 6), (8, 9, 10),       # elbows
        (20, 4, 5), (20, 8, 9),      # shoulders
        (12, 13, 14), (16, 17, 18),  # knees
        (0, 12, 13), (0, 16, 17),    # hips
    ),
    oks_kappas=tuple(2 * s for s in (
        _SIG["hip"], _SIG["hip"], _SIG["shoulder"], _SIG["nose"], _SIG["shoulder"],
        _SIG["elbow"], _SIG["wrist"], _SIG["wrist"], _SIG["shoulder"], _SIG["elbow"],
        _SIG["wrist"], _SIG["wrist"], _SIG["hip"], _SIG["knee"], _SIG["ankle"],
        _SIG["ankle"], _SIG["hip"], _SIG["knee"], _SIG["ankle"], _SIG["ankle"],
        _SIG["shoulder"], _SIG["wrist"], _SIG["wrist"], _SIG["wrist"], _SIG["wrist"],
    )),
    dims=3,
)

LAYOUTS = {OPENPOSE18.name: OPENPOSE18, NTU25.name: NTU25}


def get_layout(name: str) -> SkeletonLayout:
    try:
        return LAYOUTS[name]
    except KeyError:
        raise LayoutMismatch(f"unknown layout {name!r}; known: {sorted(LAYOUTS)}") from None


@dataclass(frozen=True, eq=False)
class SkeletonFrame:
    """One person's joints at one frame.

    ``joints`` has shape (J, D); ``confidence`` and ``valid`` have shape (J,).
    When ``valid`` is omitted a joint is valid iff its confidence is > 0.
    """

    frame_index: int
    joints: np.ndarray
    confidence: np.ndarray | None = None
    valid: np.ndarray | None = None
    timestamp_s: float = 0.0

    def __post_init__(self):
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] not in (2, 3):
            raise ValueError(f"joints must be (J, 2|3), got {joints.shape}")
        J = joints.shape[0]
        conf = np.ones(J) if self.confidence is None else np.array(self.confidence, dtype=np.float64)
        if conf.shape != (J,):
            raise ValueError(f"expected {J} confidences, got {conf.shape}")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence must lie in [0, 1]")
        if self.valid is None:
            valid = (conf > 0) & np.all(np.isfinite(joints), axis=1)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != (J,):
                raise ValueError(f"expected {J} validity flags, got {valid.shape}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")
        for arr in (joints, conf, valid):
            arr.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "valid", valid)

    @property
    def joint_count(self) -> int:
        return self.joints.shape[0]

    @property
    def dims(self) -> int:
        return self.joints.shape[1]

    def with_index(self, frame_index: int, timestamp_s: float | None = None) -> "SkeletonFrame":
        return SkeletonFrame(
            frame_index, self.joints, self.confidence, self.valid,
            self.timestamp_s if timestamp_s is None else timestamp_s,
        )


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    layout_ref: str
    frames: tuple[SkeletonFrame, ...]
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        layout = LAYOUTS.get(self.layout_ref)
        prev = -1
        for f in frames:
            if f.frame_index <= prev:
                raise NonIncreasingFrames(
                    f"frame_index {f.frame_index} follows {prev} in {self.source_id or 'sequence'}"
                )
            prev = f.frame_index
            if layout is not None and (f.joint_count != layout.joint_count or f.dims != layout.dims):
                raise LayoutMismatch(
                    f"frame {f.frame_index} has {f.joint_count}x{f.dims} joints, "
                    f"layout {layout.name} expects {layout.joint_count}x{layout.dims}"
                )
        if frames:
            shapes = {f.joints.shape for f in frames}
            if len(shapes) != 1:
                raise LayoutMismatch(f"mixed joint shapes in sequence: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def layout(self) -> SkeletonLayout:
        return get_layout(self.layout_ref)

    def poses(self) -> np.ndarray:
        """Imputed joint array of shape (N, J, D)."""
        layout = self.layout
        imputer = JointImputer(layout)
        if not self.frames:
            return np.zeros((0, layout.joint_count, layout.dims))
        return np.stack([imputer(f) for f in self.frames])

    @classmethod
    def from_array(cls, poses: np.ndarray, layout: SkeletonLayout, label: str | None = None,
                   source_id: str = "", fps: float = 30.0) -> "SkeletonSequence":
        poses = np.asarray(poses, dtype=np.float64)
        frames = tuple(SkeletonFrame(i, p, timestamp_s=i / fps) for i, p in enumerate(poses))
        return cls(layout.name, frames, label, source_id)


def hip_center(joints: np.ndarray, layout: SkeletonLayout) -> np.ndarray:
    """Hip center of a (J, D) or (N, J, D) array; two-index layouts average both hips."""
    idx = layout.hip_indices
    if len(idx) == 1:
        return joints[..., idx[0], :]
    return 0.5 * (joints[..., idx[0], :] + joints[..., idx[1], :])


def bounding_box(frame: SkeletonFrame) -> tuple[np.ndarray, np.ndarray]:
    """Tight axis-aligned (min, max) box over the valid joints."""
    pts = frame.joints[frame.valid]
    if len(pts) == 0:
        raise NoValidJoints(f"frame {frame.frame_index} has no valid joints")
    return pts.min(axis=0), pts.max(axis=0)


class JointImputer:
    """Fills invalid joints with the last valid observation of that joint.

    Joints never observed fall back to the current hip center (or to the
    mean of the valid joints when the hips themselves are missing). One
    instance per person track.
    """

    def __init__(self, layout: SkeletonLayout):
        self.layout = layout
        self.last = np.full((layout.joint_count, layout.dims), np.nan)

    def __call__(self, frame: SkeletonFrame) -> np.ndarray:
        if frame.joint_count != self.layout.joint_count or frame.dims != self.layout.dims:
            raise LayoutMismatch(
                f"frame has {frame.joint_count}x{frame.dims} joints, "
                f"layout {self.layout.name} expects {self.layout.joint_count}x{self.layout.dims}"
            )
        valid = frame.valid
        if valid.all():
            out = frame.joints.copy()
            self.last = out.copy()
            return out
        out = np.where(valid[:, None], frame.joints, self.last)
        self.last = out.copy()
        missing = np.isnan(out).any(axis=1)
        if missing.any():
            hip = hip_center(out, self.layout)
            if np.isnan(hip).any():
                known = out[~missing]
                hip = known.mean(axis=0) if len(known) else np.zeros(self.layout.dims)
            out[missing] = hip
        return out


@dataclass(frozen=True)
class LabeledTimeline:
    """Frame-level annotation: ``(class_id, start, end)`` segments with inclusive bounds."""

    length_frames: int
    segments: tuple[tuple[str, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple((str(c), int(s), int(e)) for c, s, e in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.length_frames < 0:
            raise ValueError("length_frames must be nonnegative")
        by_class: dict[str, list[tuple[int, int]]] = {}
        for c, s, e in segs:
            if not 0 <= s <= e < self.length_frames:
                raise ValueError(f"segment ({c}, {s}, {e}) outside [0, {self.length_frames})")
            by_class.setdefault(c, []).append((s, e))
        for c, spans in by_class.items():
            spans.sort()
            for (s0, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 <= e0:
                    raise ValueError(f"overlapping segments of class {c!r}")

    @property
    def classes(self) -> list[str]:
        return sorted({c for c, _, _ in self.segments})

    def binary(self, class_id: str) -> np.ndarray:
        out = np.zeros(self.length_frames, dtype=bool)
        for c, s, e in self.segments:
            if c == class_id:
                out[s:e + 1] = True
        return out

    def to_records(self) -> list[dict]:
        return [{"class": c, "start_frame": s, "end_frame": e} for c, s, e in self.segments]

    @classmethod
    def from_records(cls, length_frames: int, records: Sequence[dict]) -> "LabeledTimeline":
        try:
            segs = [(r["class"], r["start_frame"], r["end_frame"]) for r in records]
        except (KeyError, TypeError) as exc:
            raise SkelgestError(f"bad ground-truth record: {exc}") from exc
        return cls(length_frames, tuple(segs))
